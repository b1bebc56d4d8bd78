import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fracsphere.errors import DomainError, IllConditionedSystem
from fracsphere.local_estimates import (
    EnsembleRow,
    SPECTRAL_CAP,
    assemble_kernel,
    ball_grid,
    brezis_kato_exponent,
    brezis_kato_ratio,
    ensemble_member,
    forcing,
    harnack_ratio,
    holder_seminorm,
    lp_norm,
    neumann_series,
    random_potential,
    run_ensemble,
    solve_linear_ie,
    spectral_radius,
)
from fracsphere.schemas import EnsembleSpec


@pytest.fixture(scope="module")
def segment():
    return assemble_kernel(ball_grid(1, 16), 0.25)


@pytest.fixture(scope="module")
def disk():
    return assemble_kernel(ball_grid(2, 12), 0.5)


def test_interval_grid_is_exact():
    grid = ball_grid(1, 24)
    assert grid.size == 24
    assert grid.measures.sum() == pytest.approx(6.0, rel=1e-13)
    assert grid.ball_measure == pytest.approx(6.0)


def test_disk_grid_measure_is_close_to_area():
    grid = ball_grid(2, 24)
    assert grid.ball_measure == pytest.approx(9.0 * math.pi)
    assert grid.measures.sum() == pytest.approx(9.0 * math.pi, rel=1e-2)
    assert np.all(grid.norms <= 3.0)


def test_ball_grid_rejects_other_dimensions():
    with pytest.raises(DomainError):
        ball_grid(3, 8)
    with pytest.raises(DomainError):
        ball_grid(2, 1)


def test_kernel_is_symmetric_with_measures(disk):
    assert_allclose(disk.kernel, disk.kernel.T)
    weighted = disk.matrix * disk.grid.measures[:, None]
    assert_allclose(weighted, weighted.T, rtol=1e-13)
    assert np.all(disk.kernel > 0.0)


def test_kernel_row_sum_at_center_matches_disk_potential():
    # integral over B_3 of |y|^{-1} in the plane is 2 pi * 3
    A = assemble_kernel(ball_grid(2, 60), 0.5)
    grid = A.grid
    center = int(np.argmin(grid.norms))
    row = A.matrix[center]
    assert row.sum() == pytest.approx(6.0 * math.pi, rel=0.02)
    full = np.isclose(grid.measures, grid.spacing**2, rtol=1e-12)
    full[center] = False
    distances = np.linalg.norm(grid.nodes[full] - grid.nodes[center], axis=1)
    order = np.argsort(distances, kind="stable")
    assert np.all(np.diff(row[full][order]) <= 1e-12 * row.max())
    assert row[center] > row[full].max()


def test_kernel_rejects_sigma_out_of_range():
    with pytest.raises(DomainError):
        assemble_kernel(ball_grid(1, 8), 0.5)


def test_spectral_radius_matches_eigenvalues(segment):
    V = np.linspace(0.1, 0.4, segment.size)
    expected = np.max(np.abs(np.linalg.eigvals(segment.matrix * V[None, :])))
    assert spectral_radius(segment, V) == pytest.approx(expected, rel=1e-8)
    assert spectral_radius(segment, np.zeros(segment.size)) == 0.0
    with pytest.raises(DomainError):
        spectral_radius(segment, -V)


def test_direct_solve_agrees_with_neumann_series(disk):
    V = np.ones(disk.size)
    V *= 0.3 / spectral_radius(disk, V)
    h = forcing(disk.grid, 2.0)
    u = solve_linear_ie(disk, V, h)
    assert_allclose(u, neumann_series(disk, V, h, terms=60), rtol=1e-12)
    assert np.all(u >= h)


def test_singular_system_is_refused(segment):
    root = np.sqrt(segment.grid.measures)
    top = np.linalg.eigvalsh(root[:, None] * segment.kernel * root[None, :])[-1]
    V = np.full(segment.size, 1.0 / top)
    with pytest.raises(IllConditionedSystem) as info:
        solve_linear_ie(segment, V, np.ones(segment.size))
    assert info.value.rcond is not None


def test_solve_checks_shapes(segment):
    with pytest.raises(DomainError):
        solve_linear_ie(segment, np.zeros(3), np.ones(segment.size))


def test_harnack_ratio(segment):
    grid = segment.grid
    assert harnack_ratio(np.full(grid.size, 2.0), grid) == 1.0
    assert harnack_ratio(2.0 + grid.nodes[:, 0], grid) > 1.0
    with pytest.raises(DomainError):
        harnack_ratio(grid.nodes[:, 0], grid)


def test_harnack_ratio_is_scale_invariant(segment):
    grid = segment.grid
    u = 2.0 + np.sin(grid.nodes[:, 0])
    for factor in (1e-6, 0.3, 7.0, 1e6):
        assert harnack_ratio(factor * u, grid) == pytest.approx(harnack_ratio(u, grid), rel=1e-14)


def test_holder_seminorm(segment):
    grid = segment.grid
    assert holder_seminorm(np.ones(grid.size), grid, 0.5) == 0.0
    # |x - y| / |x - y|^alpha is largest at the widest pair inside the unit ball
    inside = grid.nodes[grid.inside(1.0), 0]
    width = inside.max() - inside.min()
    assert holder_seminorm(grid.nodes[:, 0], grid, 0.5) == pytest.approx(width**0.5)
    with pytest.raises(DomainError):
        holder_seminorm(np.ones(grid.size), grid, 1.0)


def test_lp_norm_of_constant(segment):
    grid = segment.grid
    assert lp_norm(np.ones(grid.size), grid, 2.0) == pytest.approx(math.sqrt(6.0))
    assert lp_norm(np.full(grid.size, 3.0), grid, 1.0, radius=1.0) == pytest.approx(
        3.0 * grid.measures[grid.inside(1.0)].sum()
    )


def test_forcing():
    grid = ball_grid(2, 8)
    assert_allclose(forcing(grid, 1.0), 1.0)
    h = forcing(grid, 4.0)
    assert np.all(h > 0.0)
    assert h.max() / h.min() <= 4.0 ** (grid.norms.max() + 1e-12)
    with pytest.raises(DomainError):
        forcing(grid, 0.5)


def test_random_potential_is_reproducible(disk):
    first = random_potential(disk, 5, norm=0.05, lp_exponent=4.0)
    second = random_potential(disk, 5, norm=0.05, lp_exponent=4.0)
    assert_allclose(first, second, rtol=0.0, atol=0.0)
    assert np.all(first >= 0.0)
    assert lp_norm(first, disk.grid, 4.0) == pytest.approx(0.05, rel=1e-12)
    assert not np.allclose(first, random_potential(disk, 6, norm=0.05, lp_exponent=4.0))


def test_ensemble_member_keeps_solution_above_forcing(disk):
    spec = EnsembleSpec(n=2, sigma=0.5, samples=1, cells=[12], c0=2.0)
    row = ensemble_member(disk, spec, 11)
    assert row.min_excess >= -1e-12
    assert row.harnack_ratio >= 1.0
    assert row.norm_V <= spec.norm_bound * (1.0 + 1e-12)
    assert row.bk_admissible
    assert row.bk_norm_V <= spec.bk_bound * (1.0 + 1e-12)
    assert row.grid_cells == 12
    assert row.bk_ratio > 0.0


def test_large_potential_is_rescaled(disk):
    spec = EnsembleSpec(n=2, sigma=0.5, samples=1, cells=[12], normBound=1e3, enforceBrezisKato=False)
    row = ensemble_member(disk, spec, 0)
    assert row.rescaled
    assert not row.bk_clamped
    assert not row.bk_admissible
    assert row.bk_norm_V > spec.bk_bound
    assert row.min_excess >= -1e-12


def test_run_ensemble_rows():
    spec = EnsembleSpec(n=1, sigma=0.25, samples=3, cells=[16])
    rows = run_ensemble(spec, 16)
    assert [row.seed for row in rows] == [0, 1, 2]
    assert all(len(row.as_row()) == len(EnsembleRow.COLUMNS) for row in rows)
    assert rows == run_ensemble(spec, 16)


def test_spectral_cap_is_below_one():
    assert 0.0 < SPECTRAL_CAP < 1.0


@pytest.mark.slow
def test_harnack_ratio_is_stable_under_refinement():
    spec = EnsembleSpec(n=2, sigma=0.5, samples=100, cells=[24, 48])
    coarse, fine = (run_ensemble(spec, cells) for cells in spec.cells)
    coarse_max = max(row.harnack_ratio for row in coarse)
    fine_max = max(row.harnack_ratio for row in fine)
    assert abs(fine_max - coarse_max) / coarse_max < 0.2
    assert all(row.min_excess >= -1e-12 for row in coarse + fine)


def test_large_potential_is_held_to_brezis_kato_bound(disk):
    spec = EnsembleSpec(n=2, sigma=0.5, samples=1, cells=[12], normBound=1e3)
    row = ensemble_member(disk, spec, 0)
    assert row.bk_clamped
    assert row.bk_admissible
    assert row.bk_norm_V <= spec.bk_bound * (1.0 + 1e-12)
    assert brezis_kato_exponent(2, 0.5) == 2.0
    # sampled in L^4, bounded in L^2
    assert row.bk_norm_V != pytest.approx(row.norm_V, rel=1e-6)


def test_brezis_kato_ratio_is_stable_under_refinement():
    spec = EnsembleSpec(n=2, sigma=0.5, samples=4, cells=[12, 24])
    coarse, fine = (run_ensemble(spec, cells) for cells in spec.cells)
    assert all(row.bk_admissible for row in coarse + fine)
    assert all(row.bk_norm_V <= spec.bk_bound * (1.0 + 1e-12) for row in coarse + fine)
    coarse_max = max(row.bk_ratio for row in coarse)
    fine_max = max(row.bk_ratio for row in fine)
    assert abs(fine_max - coarse_max) / coarse_max < 0.25


def test_brezis_kato_ratio_is_scale_invariant(disk):
    grid = disk.grid
    u = 1.0 + 0.1 * grid.nodes[:, 0] ** 2
    h = forcing(grid, 2.0)
    assert brezis_kato_ratio(7.0 * u, 7.0 * h, grid, 0.5) == pytest.approx(brezis_kato_ratio(u, h, grid, 0.5), rel=1e-12)
