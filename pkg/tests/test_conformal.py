import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad

from fracsphere.conformal import (
    MobiusMap,
    RadialField,
    SphereBubble,
    apply_inverse_psigma,
    apply_psigma,
    bubble_plane,
    bubble_sphere,
    conformal_factor,
    conformal_weight_factor,
    mobius_apply,
    planar_bubble_constant,
    pull_to_plane,
    push_to_sphere,
    radial_kernel,
    riesz_direct,
    sharp_constant,
    spectrum_for,
    stereo_forward,
    stereo_inverse,
    t_phi_transform,
    unit_bubble_height,
)
from fracsphere.errors import DomainError, GeometryMismatch
from fracsphere.functionals import energy
from fracsphere.specfun import sphere_area
from fracsphere.sphere import (
    Geometry,
    GridField,
    Mode,
    SpectralField,
    analyze,
    make_grid,
    north_pole,
    south_pole,
    synthesize,
)


def test_spectrum_table_small_case():
    spectrum = spectrum_for(3, 1.0, 4)
    assert spectrum.eigenvalues[0] == pytest.approx(0.75, rel=1e-15)
    assert spectrum.eigenvalues[1] == pytest.approx(3.75, rel=1e-15)


@pytest.mark.parametrize(
    "n, sigma, closed_form",
    [
        (3, 1.0, lambda k: (k + 1.5) * (k + 0.5)),
        (2, 0.5, lambda k: k + 0.5),
    ],
)
def test_eigenvalue_identities(n, sigma, closed_form):
    k = np.arange(33, dtype=float)
    assert_allclose(spectrum_for(n, sigma, 32).eigenvalues, closed_form(k), rtol=1e-12)


def test_eigenvalues_are_read_only():
    with pytest.raises(ValueError):
        spectrum_for(3, 1.0, 4).eigenvalues[0] = 1.0


@pytest.mark.parametrize("sigma", [0.0, 1.5, 2.0])
def test_sigma_out_of_range(sigma):
    with pytest.raises(DomainError):
        spectrum_for(3, sigma, 4)


def test_psigma_and_inverse_cancel():
    geometry = Geometry(3, Mode.ZONAL, 6)
    spectrum = spectrum_for(3, 1.0, 6)
    c = SpectralField(geometry, np.linspace(1.0, 2.0, 7))
    assert_allclose(apply_inverse_psigma(apply_psigma(c, spectrum), spectrum).coefficients, c.coefficients)


def test_spectrum_too_short_for_geometry():
    geometry = Geometry(3, Mode.ZONAL, 10)
    with pytest.raises(GeometryMismatch):
        apply_psigma(SpectralField(geometry, np.zeros(11)), spectrum_for(3, 1.0, 4))


def test_sharp_constant_closed_form():
    assert sharp_constant(3, 1.0) == pytest.approx(0.75 * (2.0 * math.pi**2) ** (2.0 / 3.0), rel=1e-14)


@pytest.mark.parametrize("n, sigma", [(2, 0.5), (3, 1.0), (5, 2.0)])
def test_riesz_direct_inverts_eigenvalues(n, sigma):
    L = 6
    geometry = Geometry(n, Mode.ZONAL, L)
    grid = make_grid(geometry)
    spectrum = spectrum_for(n, sigma, L)
    for k in range(L + 1):
        coefficients = np.zeros(geometry.size)
        coefficients[k] = 1.0
        harmonic = synthesize(SpectralField(geometry, coefficients), grid)
        potential = analyze(riesz_direct(harmonic, spectrum)).coefficients
        assert potential[k] == pytest.approx(1.0 / spectrum.eigenvalues[k], rel=1e-4)


def test_riesz_direct_on_full_sphere():
    geometry = Geometry(2, Mode.FULL_S2, 3)
    grid = make_grid(geometry)
    spectrum = spectrum_for(2, 0.5, 3)
    coefficients = np.zeros(geometry.size)
    coefficients[2 * 2 + 2 + 1] = 1.0
    harmonic = synthesize(SpectralField(geometry, coefficients), grid)
    potential = riesz_direct(harmonic, spectrum)
    assert_allclose(potential.values, harmonic.values / spectrum.eigenvalues[2], atol=1e-6)


@pytest.mark.parametrize("n, sigma", [(2, 0.5), (3, 1.0)])
def test_riesz_direct_of_point_function_inverts_bubble_equation(n, sigma):
    # P_sigma v = e_0 v^{p*} for every bubble, so the potential of v^{p*} is v / e_0
    grid = make_grid(Geometry(n, Mode.ZONAL, 8))
    spectrum = spectrum_for(n, sigma, 8)
    bubble = SphereBubble(north_pole(n), 2.0, n, sigma)
    critical = (n + 2.0 * sigma) / (n - 2.0 * sigma)
    potential = riesz_direct(lambda points: bubble(points) ** critical, spectrum, grid=grid, nodes=40)
    assert_allclose(potential.values, bubble(grid.points) / spectrum.eigenvalues[0], rtol=1e-8)


def test_riesz_direct_point_function_needs_grid():
    with pytest.raises(DomainError):
        riesz_direct(lambda points: np.ones(len(points)), spectrum_for(3, 1.0, 4))


def test_riesz_direct_samples_full_sphere_field_from_nodes():
    geometry = Geometry(2, Mode.FULL_S2, 4)
    grid = make_grid(geometry)
    spectrum = spectrum_for(2, 0.5, 4)

    def field(points):
        return 1.0 + points[:, 0] * points[:, 2] + 0.5 * points[:, 1] ** 3

    from_nodes = riesz_direct(GridField(grid, field(grid.points)), spectrum)
    exact = riesz_direct(field, spectrum, grid=grid)
    assert_allclose(from_nodes.values, exact.values, atol=1e-9)


def test_stereographic_roundtrip_and_jacobian():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((20, 3))
    xi, jacobian = stereo_forward(x)
    assert_allclose(np.linalg.norm(xi, axis=1), 1.0, atol=1e-14)
    assert_allclose(stereo_inverse(xi), x, rtol=1e-12, atol=1e-12)
    assert_allclose(jacobian, (2.0 / (1.0 + np.sum(x * x, axis=1))) ** 3)
    origin, _ = stereo_forward(np.zeros((1, 3)))
    assert_allclose(origin[0], south_pole(3))


def test_pull_to_plane_of_one_is_conformal_weight():
    grid = make_grid(Geometry(3, Mode.ZONAL, 8))
    u = pull_to_plane(GridField(grid, np.ones(grid.size)), 1.0)
    x = np.array([[0.0, 0.0, 0.0], [0.3, -0.2, 1.0], [2.0, 0.0, 0.0]])
    assert_allclose(u(x), conformal_weight_factor(x, 3, 1.0), rtol=1e-12)


def test_push_inverts_pull():
    grid = make_grid(Geometry(3, Mode.ZONAL, 16))
    v = SphereBubble(south_pole(3), 1.5, 3, 1.0).on(grid)
    u = pull_to_plane(v, 1.0)
    back = push_to_sphere(u, 1.0, grid)
    assert_allclose(back.values, v.values, rtol=1e-9)


def test_push_radial_field():
    n, sigma = 3, 1.0
    grid = make_grid(Geometry(n, Mode.ZONAL, 8))
    radii = np.linspace(0.0, 50.0, 50001)
    profile = RadialField(n, radii, (2.0 / (1.0 + radii**2)) ** (0.5 * n - sigma))
    assert_allclose(push_to_sphere(profile, sigma, grid).values, 1.0, rtol=1e-6)


def test_radial_field_out_of_range():
    field = RadialField(3, np.array([0.0, 1.0, 2.0]), np.array([1.0, 0.5, 0.2]))
    with pytest.raises(DomainError):
        field(np.array([2.5]))


def test_mobius_fixes_center_and_stays_on_sphere():
    rng = np.random.default_rng(1)
    center = rng.standard_normal(4)
    center /= np.linalg.norm(center)
    phi = MobiusMap(center, 2.5)
    points = rng.standard_normal((30, 4))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    assert_allclose(np.linalg.norm(mobius_apply(phi, points), axis=1), 1.0, atol=1e-13)
    assert_allclose(mobius_apply(phi, center[None, :])[0], center, atol=1e-13)
    assert conformal_factor(phi, center[None, :])[0] == pytest.approx(2.5**3)


def test_mobius_composition_and_inverse():
    center = north_pole(2)
    phi = MobiusMap(center, 2.0)
    psi = MobiusMap(center, 3.0)
    rng = np.random.default_rng(2)
    points = rng.standard_normal((10, 3))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    assert_allclose(mobius_apply(phi.compose(psi), points), mobius_apply(phi, mobius_apply(psi, points)), atol=1e-12)
    assert_allclose(mobius_apply(phi.inverse(), mobius_apply(phi, points)), points, atol=1e-12)


def test_conformal_factor_chain_rule():
    rng = np.random.default_rng(6)
    center = rng.standard_normal(4)
    center /= np.linalg.norm(center)
    phi = MobiusMap(center, 2.5)
    psi = MobiusMap(center, 0.7)
    points = rng.standard_normal((40, 4))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    chained = conformal_factor(phi, mobius_apply(psi, points)) * conformal_factor(psi, points)
    assert_allclose(conformal_factor(phi.compose(psi), points), chained, rtol=1e-12)


def test_mobius_rejects_bad_parameters():
    with pytest.raises(DomainError):
        MobiusMap(np.array([0.0, 0.0, 2.0]), 1.0)
    with pytest.raises(DomainError):
        MobiusMap(north_pole(2), 0.0)


@pytest.mark.parametrize("n, sigma", [(2, 0.5), (3, 1.0), (4, 1.5)])
def test_conformal_factor_power_is_bubble(n, sigma):
    rng = np.random.default_rng(3)
    center = rng.standard_normal(n + 1)
    center /= np.linalg.norm(center)
    points = rng.standard_normal((25, n + 1))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    weight = 0.5 * n - sigma
    factor = conformal_factor(MobiusMap(center, 4.0), points) ** (weight / n)
    assert_allclose(factor, SphereBubble(center, 4.0, n, sigma)(points), rtol=1e-12)


def test_tphi_maps_bubbles_into_bubbles():
    n, sigma = 3, 1.0
    grid = make_grid(Geometry(n, Mode.ZONAL, 48))
    pole = north_pole(n)
    v = SphereBubble(pole, 2.0, n, sigma).on(grid)
    out = t_phi_transform(v, MobiusMap(pole, 1.5), sigma)
    assert_allclose(out.values, SphereBubble(pole, 3.0, n, sigma)(grid.points), atol=1e-10)


@pytest.mark.parametrize("n, sigma", [(2, 0.5), (3, 1.0)])
def test_tphi_preserves_energy(n, sigma):
    L = 48
    grid = make_grid(Geometry(n, Mode.ZONAL, L))
    spectrum = spectrum_for(n, sigma, L)
    t = grid.t
    v = GridField(grid, 1.0 + 0.3 * t + 0.2 * t**2)
    w = t_phi_transform(v, MobiusMap(north_pole(n), 1.5), sigma)
    assert energy(analyze(w), spectrum) == pytest.approx(energy(analyze(v), spectrum), rel=1e-10)


def test_tphi_of_function_with_explicit_grid():
    n, sigma = 2, 0.5
    grid = make_grid(Geometry(2, Mode.FULL_S2, 4))
    rng = np.random.default_rng(4)
    center = rng.standard_normal(3)
    center /= np.linalg.norm(center)
    one = lambda points: np.ones(np.atleast_2d(points).shape[0])
    out = t_phi_transform(one, MobiusMap(center, 5.0), sigma, grid)
    assert_allclose(out.values, SphereBubble(center, 5.0, n, sigma)(grid.points), rtol=1e-12)


def test_zonal_fields_recentre_only_at_poles():
    grid = make_grid(Geometry(3, Mode.ZONAL, 8))
    v = GridField(grid, np.ones(grid.size))
    off_pole = np.array([1.0, 0.0, 0.0, 0.0])
    with pytest.raises(GeometryMismatch):
        t_phi_transform(v, MobiusMap(off_pole, 2.0), 1.0)
    with pytest.raises(GeometryMismatch):
        bubble_sphere(off_pole, 2.0, 3, 1.0, grid)


def test_bubble_scale_one_is_constant():
    grid = make_grid(Geometry(3, Mode.ZONAL, 4))
    assert_allclose(bubble_sphere(north_pole(3), 1.0, 3, 1.0, grid).values, 1.0)


def test_unit_bubble_height_gives_unit_k():
    for n, sigma in [(2, 0.5), (3, 1.0), (5, 2.0)]:
        assert planar_bubble_constant(n, sigma, unit_bubble_height(n, sigma)) == pytest.approx(1.0, rel=1e-13)


@pytest.mark.parametrize("n, sigma", [(3, 1.0), (2, 0.5), (3, 0.5)])
def test_plane_bubble_solves_integral_equation(n, sigma):
    bubble = bubble_plane(np.zeros(n), 1.3, 0.7, n, sigma)
    radii = np.array([0.0, 0.4, 1.0, 3.0])
    assert_allclose(bubble.residual(radii), 0.0, atol=1e-7 * bubble.amplitude)


def test_plane_bubble_rejects_bad_scale():
    with pytest.raises(DomainError):
        bubble_plane(np.zeros(3), -1.0, 1.0, 3, 1.0)


def test_radial_kernel_closed_form_three_dimensions():
    kernel = radial_kernel(3, 1.0)
    # omega_2 / max(r, s) for the Newtonian kernel
    assert float(kernel(0.4, 1.2)) == pytest.approx(4.0 * math.pi / 1.2, rel=1e-13)
    assert float(kernel(2.0, 0.5)) == pytest.approx(4.0 * math.pi / 2.0, rel=1e-13)


def test_radial_kernel_matches_angular_quadrature():
    kernel = radial_kernel(2, 0.5)
    r, s = 0.5, 1.3
    value, _ = quad(lambda theta: (r * r + s * s - 2.0 * r * s * math.cos(theta)) ** (-0.5), 0.0, 2.0 * math.pi)
    assert float(kernel(r, s)) == pytest.approx(value, rel=1e-10)


def test_radial_kernel_derivative_matches_difference():
    kernel = radial_kernel(3, 0.75)
    for r, s in [(0.3, 1.1), (1.7, 0.6)]:
        h = 1e-6
        numeric = (float(kernel(r + h, s)) - float(kernel(r - h, s))) / (2.0 * h)
        assert float(kernel.dr(r, s)) == pytest.approx(numeric, rel=1e-6)


def test_sphere_area_of_bubble_mass_is_invariant():
    n, sigma = 3, 1.0
    grid = make_grid(Geometry(n, Mode.ZONAL, 64))
    power = 2.0 * n / (n - 2.0 * sigma)
    for scale in (1.0, 2.0, 3.0):
        v = SphereBubble(north_pole(n), scale, n, sigma).on(grid)
        mass = float(np.dot(grid.weights, v.values**power))
        assert mass == pytest.approx(sphere_area(n), rel=1e-10)
