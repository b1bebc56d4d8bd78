import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fracsphere.conformal import (
    RadialField,
    SphereBubble,
    bubble_plane,
    sharp_constant,
    spectrum_for,
    unit_bubble_height,
)
from fracsphere.errors import DomainError, MetadataError, TailDataError
from fracsphere.functionals import (
    KProfile,
    QuotientFunctional,
    antipodal_threshold,
    energy,
    expansion_constant_A,
    fit_expansion_slope,
    hs_norm,
    index_count_check,
    kazdan_warner,
    kazdan_warner_vector,
    pohozaev_residual,
    pohozaev_terms,
    quotient_gradient,
    sobolev_quotient,
    two_bubble_quotient,
    two_bubble_ratio,
)
from fracsphere.schemas import KProfileSpec
from fracsphere.specfun import sphere_area
from fracsphere.sphere import (
    Geometry,
    GridField,
    Mode,
    SpectralField,
    analyze,
    make_grid,
    north_pole,
)
from fracsphere.storage import dumps, spectral_field_payload


def _ones(n, L=8, mode=Mode.ZONAL):
    grid = make_grid(Geometry(n, mode, L))
    return GridField(grid, np.ones(grid.size))


# ---------------------------------------------------------------------------
# K profiles


def test_affine_height_values_gradient_and_maximum():
    K = KProfile.affine_height(2.0, 1.0, 3)
    points = np.array([[0.0, 0.0, 0.0, 1.0], [0.6, 0.0, 0.0, 0.8]])
    assert_allclose(K.values(points), [3.0, 2.8])
    gradient = K.tangential_gradient(points)
    assert_allclose(gradient[0], 0.0, atol=1e-15)
    assert_allclose(gradient[1], [-0.48, 0.0, 0.0, 0.36], atol=1e-15)
    assert_allclose(np.sum(gradient * points, axis=1), 0.0, atol=1e-15)
    value, point = K.maximum()
    assert value == 3.0
    assert_allclose(point, north_pole(3))


def test_negative_slope_maximum_is_south_pole():
    value, point = KProfile.affine_height(2.0, -0.5, 2).maximum()
    assert value == 2.5
    assert point[-1] == -1.0


def test_zonal_polynomial_maximum_in_interior():
    value, point = KProfile.zonal_polynomial([1.0, 0.0, -1.0], 3).maximum()
    assert value == pytest.approx(1.0, abs=1e-12)
    assert abs(point[-1]) < 1e-4


def test_spectral_zonal_profile_matches_polynomial():
    n = 3
    grid = make_grid(Geometry(n, Mode.ZONAL, 4))
    polynomial = KProfile.zonal_polynomial([2.0, 1.0, 1.0], n)
    spectral = KProfile.from_spectral(analyze(polynomial.on(grid)))
    points = np.array([[0.0, 0.6, 0.0, 0.8], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.28, -0.96]])
    assert_allclose(spectral.values(points), polynomial.values(points), atol=1e-12)
    assert_allclose(spectral.tangential_gradient(points), polynomial.tangential_gradient(points), atol=1e-11)


def test_full_sphere_gradient_by_richardson():
    geometry = Geometry(2, Mode.FULL_S2, 2)
    coefficients = np.zeros(geometry.size)
    coefficients[0] = 2.0 * math.sqrt(4.0 * math.pi)
    coefficients[2] = 1.0 / math.sqrt(3.0 / (4.0 * math.pi))
    K = KProfile.from_spectral(SpectralField(geometry, coefficients))
    rng = np.random.default_rng(0)
    points = rng.standard_normal((12, 3))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    assert_allclose(K.values(points), 2.0 + points[:, 2], atol=1e-12)
    expected = np.array([0.0, 0.0, 1.0])[None, :] - points[:, 2:3] * points
    assert_allclose(K.tangential_gradient(points), expected, atol=1e-9)
    assert_allclose(K.derivative_along(points, 3), expected[:, 2], atol=1e-9)
    value, point = K.maximum()
    assert value == pytest.approx(3.0, abs=5e-2)
    assert point[2] > 0.95


def test_on_rejects_non_positive_profile():
    grid = make_grid(Geometry(3, Mode.ZONAL, 4))
    with pytest.raises(DomainError):
        KProfile.affine_height(0.0, 1.0, 3).on(grid)


def test_from_spec_reads_spectral_file(tmp_path):
    grid = make_grid(Geometry(3, Mode.ZONAL, 2))
    field = analyze(GridField(grid, 1.5 + grid.t))
    path = tmp_path / "K.json"
    path.write_text(dumps(spectral_field_payload(field)), encoding="utf-8")
    K = KProfile.from_spec(KProfileSpec(kind="spectral_file", path=str(path)), 3)
    assert_allclose(K.values(grid.points), 1.5 + grid.t, atol=1e-12)


def test_derivative_along_range():
    with pytest.raises(DomainError):
        KProfile.constant(1.0, 2).derivative_along(np.array([[0.0, 0.0, 1.0]]), 4)


# ---------------------------------------------------------------------------
# Energies and quotients


def test_energy_of_constant():
    v = _ones(3)
    spectrum = spectrum_for(3, 1.0, 8)
    assert energy(analyze(v), spectrum) == pytest.approx(0.75 * sphere_area(3), rel=1e-13)
    assert hs_norm(analyze(v), 1.0) == pytest.approx(math.sqrt(sphere_area(3)), rel=1e-13)


@pytest.mark.parametrize("n, sigma", [(2, 0.5), (3, 1.0), (5, 2.0)])
def test_constant_attains_sharp_constant(n, sigma):
    v = _ones(n, 4)
    spectrum = spectrum_for(n, sigma, 4)
    value = sobolev_quotient(v, KProfile.constant(1.0, n), spectrum.critical_exponent, spectrum)
    assert value == pytest.approx(sharp_constant(n, sigma), rel=1e-10)


@pytest.mark.parametrize("scale", [1.5, 2.0])
def test_bubbles_attain_sharp_constant(scale):
    n, sigma = 3, 1.0
    grid = make_grid(Geometry(n, Mode.ZONAL, 64))
    spectrum = spectrum_for(n, sigma, 64)
    v = SphereBubble(north_pole(n), scale, n, sigma).on(grid)
    value = sobolev_quotient(v, KProfile.constant(1.0, n), spectrum.critical_exponent, spectrum)
    assert value == pytest.approx(sharp_constant(n, sigma), rel=1e-6)


def test_random_fields_stay_above_sharp_constant():
    n, sigma = 3, 1.0
    geometry = Geometry(n, Mode.ZONAL, 8)
    grid = make_grid(geometry, 72)
    spectrum = spectrum_for(n, sigma, 8)
    functional = QuotientFunctional(grid, spectrum, np.ones(grid.size), spectrum.critical_exponent)
    rng = np.random.default_rng(7)
    floor = sharp_constant(n, sigma) * (1.0 - 1e-8)
    for _ in range(50):
        c = rng.standard_normal(geometry.size) / (1.0 + np.arange(geometry.size)) ** 2
        c[0] += 3.0
        assert functional.value(c) >= floor


def test_quotient_is_scale_invariant():
    n, sigma = 3, 1.0
    grid = make_grid(Geometry(n, Mode.ZONAL, 6))
    spectrum = spectrum_for(n, sigma, 6)
    functional = QuotientFunctional(grid, spectrum, 2.0 + grid.t, 4.0)
    c = np.array([3.0, 0.4, -0.2, 0.1, 0.0, 0.05, 0.0])
    assert functional.value(5.0 * c) == pytest.approx(functional.value(c), rel=1e-13)


def test_gradient_matches_finite_differences():
    n, sigma = 3, 1.0
    grid = make_grid(Geometry(n, Mode.ZONAL, 6))
    spectrum = spectrum_for(n, sigma, 6)
    functional = QuotientFunctional(grid, spectrum, 2.0 + grid.t, 4.0)
    c = np.array([3.0, 0.4, -0.2, 0.1, 0.0, 0.05, 0.0])
    gradient = functional.gradient(c)
    h = 1e-6
    for j in range(c.size):
        step = np.zeros_like(c)
        step[j] = h
        numeric = (functional.value(c + step) - functional.value(c - step)) / (2.0 * h)
        assert gradient[j] == pytest.approx(numeric, rel=1e-5, abs=1e-8)


def test_quotient_gradient_vanishes_at_constant():
    v = _ones(3)
    spectrum = spectrum_for(3, 1.0, 8)
    gradient = quotient_gradient(v, KProfile.constant(1.0, 3), spectrum.critical_exponent, spectrum)
    assert_allclose(gradient.coefficients, 0.0, atol=1e-12)


def test_constant_euler_lagrange_residual():
    n, sigma = 3, 1.0
    grid = make_grid(Geometry(n, Mode.ZONAL, 8))
    spectrum = spectrum_for(n, sigma, 8)
    functional = QuotientFunctional(grid, spectrum, np.ones(grid.size), spectrum.critical_exponent)
    residual, lam = functional.el_residual(analyze(GridField(grid, np.ones(grid.size))).coefficients)
    assert lam == pytest.approx(0.75, rel=1e-13)
    assert residual / lam <= 1e-12


def test_exponent_above_critical_is_rejected():
    grid = make_grid(Geometry(3, Mode.ZONAL, 4))
    with pytest.raises(DomainError):
        QuotientFunctional(grid, spectrum_for(3, 1.0, 4), np.ones(grid.size), 5.5)


def test_zero_field_has_no_quotient():
    v = _ones(3)
    spectrum = spectrum_for(3, 1.0, 8)
    with pytest.raises(DomainError):
        sobolev_quotient(v.with_values(np.zeros(v.grid.size)), KProfile.constant(1.0, 3), 4.0, spectrum)


# ---------------------------------------------------------------------------
# Kazdan-Warner


def test_kazdan_warner_vanishes_for_constant_k():
    n, sigma = 3, 1.0
    grid = make_grid(Geometry(n, Mode.ZONAL, 16))
    v = SphereBubble(north_pole(n), 2.0, n, sigma).on(grid)
    assert np.max(np.abs(kazdan_warner_vector(v, KProfile.constant(2.0, n), sigma))) <= 1e-12


def test_kazdan_warner_height_is_positive_and_stable():
    n, sigma = 3, 1.0
    K = KProfile.affine_height(0.0, 1.0, n)
    values = []
    for L in (16, 32):
        grid = make_grid(Geometry(n, Mode.ZONAL, L))
        v = SphereBubble(north_pole(n), 2.0, n, sigma).on(grid)
        values.append(kazdan_warner(v, K, n + 1, sigma))
    assert min(values) > 0.0
    assert values[0] == pytest.approx(values[1], rel=1e-6)


def test_kazdan_warner_transverse_components_vanish_on_full_sphere():
    n, sigma = 2, 0.5
    grid = make_grid(Geometry(2, Mode.FULL_S2, 24))
    v = SphereBubble(north_pole(n), 2.0, n, sigma).on(grid)
    vector = kazdan_warner_vector(v, KProfile.affine_height(2.0, 1.0, n), sigma)
    assert_allclose(vector[:2], 0.0, atol=1e-12)
    assert vector[2] > 0.0


def test_kazdan_warner_index_range():
    v = _ones(3)
    with pytest.raises(DomainError):
        kazdan_warner(v, KProfile.constant(1.0, 3), 0, 1.0)


# ---------------------------------------------------------------------------
# Pohozaev


def test_pohozaev_balances_for_planar_bubble():
    n, sigma = 3, 1.0
    K0 = unit_bubble_height(n, sigma)
    bubble = bubble_plane(np.zeros(n), 1.0, K0, n, sigma)
    terms = pohozaev_terms(bubble.profile, K0, bubble.exponent, 2.0, n=n, sigma=sigma, nodes=400)
    assert abs(terms.residual) <= 1e-3 * terms.scale
    assert terms.interior == pytest.approx(0.0, abs=1e-12)


def test_pohozaev_residual_wrapper_accepts_tail():
    n, sigma = 3, 1.0
    K0 = unit_bubble_height(n, sigma)
    bubble = bubble_plane(np.zeros(n), 1.0, K0, n, sigma)
    zero = lambda r: np.zeros_like(np.asarray(r, dtype=float))
    value = pohozaev_residual(bubble.profile, K0, bubble.exponent, 1.0, h_R=(zero, zero), n=n, sigma=sigma)
    assert np.isfinite(value)


def test_pohozaev_needs_tail_for_truncated_data():
    radii = np.linspace(0.0, 2.0, 50)
    u = RadialField(3, radii, (1.0 + radii**2) ** -0.5)
    with pytest.raises(TailDataError):
        pohozaev_terms(u, 1.0, 5.0, 2.0, n=3, sigma=1.0)


# ---------------------------------------------------------------------------
# Two-bubble test functions


def test_expansion_constant_closed_form():
    assert expansion_constant_A(3, 1.0) == pytest.approx(16.0 * math.sqrt(2.0) * math.pi / 3.0, rel=1e-13)


def test_antipodal_threshold_for_unit_k():
    n, sigma = 3, 1.0
    expected = sharp_constant(n, sigma) * 2.0 ** (2.0 * sigma / n)
    assert antipodal_threshold(KProfile.constant(1.0, n), sigma) == pytest.approx(expected, rel=1e-13)


def test_two_bubble_quotient_exceeds_sharp_constant():
    K = KProfile.constant(1.0, 3)
    assert two_bubble_quotient(1.5, K, 1.0) > sharp_constant(3, 1.0)


def test_two_bubble_rejects_beta_out_of_range():
    with pytest.raises(DomainError):
        two_bubble_quotient(1.0, KProfile.constant(1.0, 3), 1.0)


def test_expansion_slope_recovers_synthetic_data():
    betas = np.linspace(1.001, 1.01, 10)
    x = (betas - 1.0) ** 0.5
    fit = fit_expansion_slope(betas, -2.0 * x + 3.0 * x**2, 0.5)
    assert fit.slope == pytest.approx(-2.0, rel=1e-10)
    assert fit.curvature == pytest.approx(3.0, rel=1e-8)
    assert fit.power == 2.0


def test_two_bubble_expansion_slope():
    n, sigma = 3, 1.0
    K = KProfile.constant(1.0, n)
    betas = np.linspace(1.001, 1.01, 10)
    ratios = [two_bubble_ratio(beta, K, sigma) for beta in betas]
    assert max(ratios) < 0.0
    fit = fit_expansion_slope(betas, ratios, 0.5 * n - sigma)
    expected = -expansion_constant_A(n, sigma) / sphere_area(n)
    assert fit.slope == pytest.approx(expected, rel=0.1)


# ---------------------------------------------------------------------------
# Index count


def _with_points(n, *points):
    spec = KProfileSpec.model_validate(
        {
            "kind": "constant",
            "criticalPoints": [{"xi": [0.0] * n + [1.0], "a": list(a)} for a in points],
        }
    )
    return KProfile.from_spec(spec, n)


def test_index_count_hypothesis_holds():
    result = index_count_check(_with_points(2, (-1.0, 0.5), (1.0, 2.0)))
    assert result.sum == -1
    assert result.contributing == [0]
    assert result.hypothesis_holds


def test_index_count_hypothesis_fails():
    result = index_count_check(_with_points(2, (-1.0, -2.0)))
    assert result.sum == 1
    assert not result.hypothesis_holds


@pytest.mark.parametrize("points", [(), ((-1.0,),), ((0.0, -1.0),), ((1.0, -1.0),)])
def test_index_count_metadata_errors(points):
    with pytest.raises(MetadataError):
        index_count_check(_with_points(2, *points))
