"""P_sigma, its inverse, stereographic transfer, Mobius dilations and bubbles.

Conventions
-----------
* ``e = (n - 2 sigma) / 2`` is the conformal weight of the equation.
* Stereographic projection ``F(x) = (2x, |x|^2 - 1) / (1 + |x|^2)`` sends 0 to the
  south pole. ``F_c = R_c o F``, with ``R_c = rotation_to_pole(c)``, sends 0 to c.
* ``MobiusMap(c, lam)`` is ``F_c o (x -> lam x) o F_c^{-1}``. Its conformal factor at
  ``c`` is ``lam**n``, so for large ``lam`` a neighbourhood of ``c`` is spread over
  the sphere. ``conformal_factor(phi_{c,lam})**(e/n)`` is exactly the bubble
  ``v_{c,lam}``, and ``T_{phi_{c,mu}} v_{c,lam} = v_{c,lam*mu}``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache, partial
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import BarycentricInterpolator, CubicSpline
from scipy.special import hyp2f1

from .errors import DomainError, GeometryMismatch, QuadratureError
from .specfun import gamma_ratio, gauss_chebyshev, gauss_jacobi, jacobi_rule, log_gamma, sphere_area
from .sphere import (
    Geometry,
    Grid,
    GridField,
    Mode,
    SpectralField,
    interpolate,
    rotation_to_pole,
    south_pole,
    zonal_points,
)

logger = logging.getLogger(__name__)

PointFunction = Callable[[np.ndarray], np.ndarray]
SphereField = Union[GridField, PointFunction]


def sample_field(v: SphereField, points: np.ndarray) -> np.ndarray:
    """Values of a grid field (by interpolation) or of a point function at sphere points."""
    if isinstance(v, GridField):
        return interpolate(v, points)
    return np.asarray(v(np.atleast_2d(points)), dtype=float)


def check_sigma(n: int, sigma: float) -> None:
    if not (0.0 < sigma < 0.5 * n):
        raise DomainError(f"sigma must lie in (0, n/2) = (0, {0.5 * n}), got {sigma}")


@dataclass(frozen=True, eq=False)
class ConformalSpectrum:
    """Eigenvalues ``e_k = Gamma(k + n/2 + sigma) / Gamma(k + n/2 - sigma)`` of P_sigma."""

    n: int
    sigma: float
    L: int

    def __post_init__(self) -> None:
        check_sigma(self.n, self.sigma)
        if self.L < 0:
            raise DomainError("degree cap must be non-negative")

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        k = np.arange(self.L + 1, dtype=float)
        half = 0.5 * self.n
        values = np.asarray(gamma_ratio(k + half + self.sigma, k + half - self.sigma), dtype=float)
        values.setflags(write=False)
        return values

    @property
    def p_sigma_one(self) -> float:
        """c(n, sigma) = P_sigma(1)."""
        return float(self.eigenvalues[0])

    @property
    def riesz_constant(self) -> float:
        """c_{n,sigma} in the kernel of P_sigma^{-1}."""
        log_value = (
            log_gamma(self.weight)
            - 2.0 * self.sigma * math.log(2.0)
            - 0.5 * self.n * math.log(math.pi)
            - log_gamma(self.sigma)
        )
        return math.exp(log_value)

    @property
    def weight(self) -> float:
        return 0.5 * (self.n - 2.0 * self.sigma)

    @property
    def critical_exponent(self) -> float:
        return (self.n + 2.0 * self.sigma) / (self.n - 2.0 * self.sigma)

    @property
    def riesz_exponent(self) -> float:
        """gamma in kernel ~ (1 - t)^gamma near t = 1."""
        return self.sigma - 0.5 * self.n

    def riesz_kernel(self, t: np.ndarray) -> np.ndarray:
        """c_{n,sigma} |xi - zeta|^{2 sigma - n} as a function of t = xi . zeta."""
        return self.riesz_constant * (2.0 - 2.0 * np.asarray(t, dtype=float)) ** self.riesz_exponent

    def riesz_gap_kernel(self, u: np.ndarray) -> np.ndarray:
        """The same kernel in terms of the gap u = 1 - t."""
        return self.riesz_constant * (2.0 * np.asarray(u, dtype=float)) ** self.riesz_exponent

    def multipliers(self, geometry: Geometry) -> np.ndarray:
        self._check(geometry)
        return self.eigenvalues[geometry.degrees]

    def _check(self, geometry: Geometry) -> None:
        if geometry.n != self.n or geometry.L > self.L:
            raise GeometryMismatch(
                f"spectrum n={self.n} L={self.L} does not cover geometry n={geometry.n} L={geometry.L}"
            )


@lru_cache(maxsize=64)
def spectrum_for(n: int, sigma: float, L: int) -> ConformalSpectrum:
    return ConformalSpectrum(n=n, sigma=sigma, L=L)


def apply_psigma(f: SpectralField, spectrum: ConformalSpectrum) -> SpectralField:
    return SpectralField(f.geometry, f.coefficients * spectrum.multipliers(f.geometry))


def apply_inverse_psigma(f: SpectralField, spectrum: ConformalSpectrum) -> SpectralField:
    return SpectralField(f.geometry, f.coefficients / spectrum.multipliers(f.geometry))


def sharp_constant(n: int, sigma: float) -> float:
    """c(n, sigma) * omega_n^{2 sigma / n}, the sharp Sobolev constant on S^n and R^n."""
    return spectrum_for(n, sigma, 0).p_sigma_one * sphere_area(n) ** (2.0 * sigma / n)


# ---------------------------------------------------------------------------
# Riesz potential by direct quadrature


def _tangent_frame(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    helper = np.zeros_like(points)
    use_x = np.abs(points[:, 2]) > 0.9
    helper[use_x, 0] = 1.0
    helper[~use_x, 2] = 1.0
    first = helper - np.sum(helper * points, axis=1, keepdims=True) * points
    first /= np.linalg.norm(first, axis=1, keepdims=True)
    second = np.cross(points, first)
    return first, second


def _nodal_sampler(f: GridField) -> PointFunction:
    """Exact interpolant of a band-limited S^2 grid field built from its nodal values.

    Each colatitude row is expanded in longitude by FFT. The order-m coefficient
    equals (1 - t^2)^{|m|/2} times a polynomial in t, and the polynomial is
    interpolated through the Gauss-Legendre rows.
    """
    grid = f.grid
    m_theta, m_phi = grid.colatitudes.size, grid.longitudes.size
    rows = np.cos(grid.colatitudes)
    orders = np.rint(np.fft.fftfreq(m_phi) * m_phi)
    envelope = np.sqrt(1.0 - rows**2)[:, None] ** np.abs(orders)[None, :]
    reduced = np.fft.fft(f.values.reshape(m_theta, m_phi), axis=1) / (m_phi * envelope)
    interpolator = BarycentricInterpolator(rows, np.concatenate([reduced.real, reduced.imag], axis=1), axis=0)

    def sample(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        t = np.clip(points[:, -1], -1.0, 1.0)
        phi = np.arctan2(points[:, 1], points[:, 0])
        stacked = interpolator(t)
        fourier = stacked[:, :m_phi] + 1j * stacked[:, m_phi:]
        fourier *= np.sqrt(1.0 - t**2)[:, None] ** np.abs(orders)[None, :]
        return np.real(np.sum(fourier * np.exp(1j * orders[None, :] * phi[:, None]), axis=1))

    return sample


def _riesz_pass(
    sample: PointFunction, geometry: Geometry, points: np.ndarray, spectrum: ConformalSpectrum, m: int
) -> np.ndarray:
    n, sigma = spectrum.n, spectrum.sigma
    a = 0.5 * (n - 2)
    b = sigma - 1.0
    nodes, weights = jacobi_rule(m, a, b)
    x = 0.5 * (1.0 + nodes)
    cos_psi = 1.0 - 2.0 * x
    sin_psi = 2.0 * np.sqrt(x * (1.0 - x))
    if geometry.mode is Mode.ZONAL:
        transverse = gauss_chebyshev(m) if n == 2 else gauss_jacobi(m, 0.5 * (n - 3))
        shell = sphere_area(n - 2)
        t0 = points[:, -1][:, None, None]
        spread = np.sqrt(np.clip(1.0 - points[:, -1] ** 2, 0.0, None))[:, None, None]
        t = cos_psi[None, :, None] * t0 + sin_psi[None, :, None] * spread * transverse.nodes[None, None, :]
        values = np.asarray(sample(zonal_points(np.clip(t.ravel(), -1.0, 1.0), n)), dtype=float)
        ring = shell * values.reshape(t.shape) @ transverse.weights
    else:
        first, second = _tangent_frame(points)
        count = 2 * m
        angles = 2.0 * math.pi * np.arange(count) / count
        ring = np.empty((points.shape[0], m))
        for index, point in enumerate(points):
            directions = np.cos(angles)[:, None] * first[index] + np.sin(angles)[:, None] * second[index]
            samples = cos_psi[:, None, None] * point + sin_psi[:, None, None] * directions[None, :, :]
            values = np.asarray(sample(samples.reshape(-1, 3)), dtype=float)
            ring[index] = values.reshape(m, count).sum(axis=1) * (2.0 * math.pi / count)
    prefactor = spectrum.riesz_constant * 2.0 ** (2.0 * sigma - 1.0) / 2.0 ** (a + b + 1.0)
    return prefactor * (ring @ weights)


def riesz_direct(
    f: SphereField,
    spectrum: ConformalSpectrum,
    *,
    grid: Optional[Grid] = None,
    nodes: Optional[int] = None,
    tol: float = 1e-10,
) -> GridField:
    """c_{n,sigma} * integral f(zeta) |xi - zeta|^{2 sigma - n} at every grid node.

    Each target is integrated in geodesic polar coordinates around itself. With
    ``x = sin^2(psi/2)`` the kernel times the area element becomes the Jacobi
    weight ``x^{sigma-1} (1-x)^{(n-2)/2}``, which a Gauss-Jacobi rule integrates
    exactly, singular point included. Transverse directions use a
    Gauss-Gegenbauer rule (zonal) or the trapezoid rule in the azimuth (S^2).

    ``f`` is sampled from its nodal values (barycentric in t for zonal fields,
    Fourier in longitude for S^2) or evaluated exactly when it is a point
    function, never through the harmonic expansion. A point function needs
    ``grid`` and is taken to be zonal on a zonal grid. A second pass with twice
    the nodes must agree to ``tol`` relative.
    """
    if isinstance(f, GridField):
        grid = f.grid
        zonal = grid.geometry.mode is Mode.ZONAL
        sample: PointFunction = partial(interpolate, f) if zonal else _nodal_sampler(f)
    elif grid is None:
        raise DomainError("riesz_direct of a point function needs a grid")
    else:
        sample = f
    check_sigma(grid.n, spectrum.sigma)
    m = nodes or grid.geometry.L + 2
    coarse = _riesz_pass(sample, grid.geometry, grid.points, spectrum, m)
    fine = _riesz_pass(sample, grid.geometry, grid.points, spectrum, 2 * m)
    source = np.asarray(sample(grid.points), dtype=float)
    scale = max(float(np.max(np.abs(fine))), spectrum.riesz_constant * float(np.max(np.abs(source), initial=0.0)))
    change = float(np.max(np.abs(fine - coarse), initial=0.0))
    logger.debug("riesz_direct m=%d change=%.3g scale=%.3g", m, change, scale)
    if change > tol * max(scale, 1e-300):
        raise QuadratureError(
            f"direct Riesz quadrature did not settle between {m} and {2 * m} nodes",
            value=float(np.max(np.abs(fine))),
            last_change=change,
        )
    return GridField(grid, fine)


# ---------------------------------------------------------------------------
# Stereographic transfer


def stereo_forward(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """F(x) on the sphere and the Jacobian (2 / (1 + |x|^2))^n."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    xi = np.concatenate([2.0 * x, r2 - 1.0], axis=-1) / (1.0 + r2)
    jacobian = (2.0 / (1.0 + r2[..., 0])) ** x.shape[-1]
    return xi, jacobian


def stereo_inverse(xi: np.ndarray) -> np.ndarray:
    """F^{-1}(xi) = xi' / (1 - xi_{n+1}); the north pole maps to infinity."""
    xi = np.asarray(xi, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return xi[..., :-1] / (1.0 - xi[..., -1:])


def conformal_weight_factor(x: np.ndarray, n: int, sigma: float) -> np.ndarray:
    """H(x) = (2 / (1 + |x|^2))^{(n - 2 sigma)/2}."""
    r2 = np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)
    return (2.0 / (1.0 + r2)) ** (0.5 * n - sigma)


@dataclass(frozen=True, eq=False)
class RadialField:
    """Radial profile on R^n, cubic-spline interpolated between samples."""

    n: int
    radii: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        radii = np.asarray(self.radii, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if radii.ndim != 1 or radii.shape != values.shape or radii.size < 2:
            raise DomainError("radial field needs matching 1-D radii and values")
        if np.any(np.diff(radii) <= 0.0):
            raise DomainError("radii must be strictly increasing")
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "values", values)

    @cached_property
    def _spline(self) -> CubicSpline:
        return CubicSpline(self.radii, self.values)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if np.any(r < self.radii[0] - 1e-12) or np.any(r > self.radii[-1] + 1e-12):
            raise DomainError(
                f"radius outside the sampled range [{self.radii[0]}, {self.radii[-1]}]"
            )
        return self._spline(r)

    def derivative(self, r: np.ndarray) -> np.ndarray:
        return self._spline(np.asarray(r, dtype=float), 1)


def _check_zonal_center(grid: Grid, center: np.ndarray) -> None:
    if grid.geometry.mode is Mode.ZONAL:
        if not np.allclose(np.abs(center[-1]), 1.0, atol=1e-12):
            raise GeometryMismatch("zonal fields can only be recentred at a pole")


@dataclass(frozen=True, eq=False)
class PlanarField:
    """u(x) = H(x) v(F_c(x)), evaluated lazily from a grid field or a point function."""

    source: SphereField
    sigma: float
    center: np.ndarray

    @property
    def n(self) -> int:
        return self.center.size - 1

    @cached_property
    def rotation(self) -> np.ndarray:
        return rotation_to_pole(self.center)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xi, _ = stereo_forward(x)
        on_sphere = xi @ self.rotation.T
        return conformal_weight_factor(x, self.n, self.sigma) * sample_field(self.source, on_sphere)

    def radial(self, radii: np.ndarray, direction: Optional[np.ndarray] = None) -> RadialField:
        """Profile along one ray (exactly radial for zonal fields centred at a pole)."""
        radii = np.asarray(radii, dtype=float)
        direction = np.eye(self.n)[0] if direction is None else np.asarray(direction, dtype=float)
        return RadialField(self.n, radii, self(radii[:, None] * direction[None, :]))


def pull_to_plane(
    v: SphereField, sigma: float, center: Optional[np.ndarray] = None, *, n: Optional[int] = None
) -> PlanarField:
    """Planar representative of v with respect to projection from ``center``'s antipode.

    Point functions need ``n`` or an explicit ``center``.
    """
    if isinstance(v, GridField):
        n = v.grid.n
    elif n is None:
        if center is None:
            raise DomainError("pulling a point function to the plane needs n or a center")
        n = np.asarray(center).size - 1
    check_sigma(n, sigma)
    center = south_pole(n) if center is None else np.asarray(center, dtype=float)
    if isinstance(v, GridField):
        _check_zonal_center(v.grid, center)
    return PlanarField(source=v, sigma=sigma, center=center)


def node_radii(grid: Grid) -> np.ndarray:
    """Planar radii of the zonal nodes under projection from the north pole."""
    return np.sqrt((1.0 + grid.t) / (1.0 - grid.t))


def push_to_sphere(
    u: Union[PointFunction, RadialField],
    sigma: float,
    grid: Grid,
    center: Optional[np.ndarray] = None,
) -> GridField:
    """Inverse of pull_to_plane: v(xi) = u(x) / H(x) with x = F_c^{-1}(xi)."""
    n = grid.n
    check_sigma(n, sigma)
    center = south_pole(n) if center is None else np.asarray(center, dtype=float)
    rotation = rotation_to_pole(center)
    x = stereo_inverse(grid.points @ rotation.T)
    if isinstance(u, RadialField):
        values = u(np.linalg.norm(x, axis=-1))
    else:
        values = u(x)
    return GridField(grid, values / conformal_weight_factor(x, n, sigma))


# ---------------------------------------------------------------------------
# Mobius dilations


@dataclass(frozen=True, eq=False)
class MobiusMap:
    center: np.ndarray
    scale: float

    def __post_init__(self) -> None:
        center = np.asarray(self.center, dtype=float)
        if not math.isclose(float(np.linalg.norm(center)), 1.0, rel_tol=0.0, abs_tol=1e-12):
            raise DomainError("Mobius center must be a unit vector")
        if not self.scale > 0.0:
            raise DomainError("Mobius scale must be positive")
        object.__setattr__(self, "center", center)

    @property
    def n(self) -> int:
        return self.center.size - 1

    @cached_property
    def rotation(self) -> np.ndarray:
        return rotation_to_pole(self.center)

    def compose(self, other: "MobiusMap") -> "MobiusMap":
        if not np.allclose(self.center, other.center, atol=1e-14):
            raise DomainError("only same-center dilations compose in closed form")
        return MobiusMap(self.center, self.scale * other.scale)

    def inverse(self) -> "MobiusMap":
        return MobiusMap(self.center, 1.0 / self.scale)

    def _parts(self, xi: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        local = np.atleast_2d(np.asarray(xi, dtype=float)) @ self.rotation.T
        a = 1.0 - local[:, -1]
        b = 1.0 + local[:, -1]
        return local, a, b


def mobius_apply(phi: MobiusMap, xi: np.ndarray) -> np.ndarray:
    local, a, b = phi._parts(xi)
    lam = phi.scale
    denominator = a + lam * lam * b
    image = np.empty_like(local)
    image[:, :-1] = 2.0 * lam * local[:, :-1] / denominator[:, None]
    image[:, -1] = (lam * lam * b - a) / denominator
    return image @ phi.rotation.T


def conformal_factor(phi: MobiusMap, xi: np.ndarray) -> np.ndarray:
    """|det d phi(xi)| = (2 lam / (1 - xi'_{n+1} + lam^2 (1 + xi'_{n+1})))^n."""
    _, a, b = phi._parts(xi)
    return (2.0 * phi.scale / (a + phi.scale**2 * b)) ** phi.n


def t_phi_transform(
    v: Union[GridField, PointFunction],
    phi: MobiusMap,
    sigma: float,
    grid: Optional[Grid] = None,
) -> GridField:
    """(v o phi) |det d phi|^{(n - 2 sigma)/(2n)} sampled on the grid."""
    if grid is None:
        if not isinstance(v, GridField):
            raise DomainError("a grid is required when v is given as a function")
        grid = v.grid
    check_sigma(grid.n, sigma)
    _check_zonal_center(grid, phi.center)
    images = mobius_apply(phi, grid.points)
    values = sample_field(v, images)
    factor = conformal_factor(phi, grid.points) ** ((0.5 * grid.n - sigma) / grid.n)
    return GridField(grid, values * factor)


# ---------------------------------------------------------------------------
# Bubbles


@dataclass(frozen=True, eq=False)
class SphereBubble:
    """v(xi) = (2 lam / (2 + (lam^2 - 1)(1 - xi . c)))^{(n - 2 sigma)/2}."""

    center: np.ndarray
    scale: float
    n: int
    sigma: float

    def __post_init__(self) -> None:
        check_sigma(self.n, self.sigma)
        if not self.scale > 0.0:
            raise DomainError("bubble scale must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        cosine = np.clip(np.atleast_2d(points) @ self.center, -1.0, 1.0)
        lam = self.scale
        # 2 + (lam^2 - 1)(1 - c) written without cancellation for large lam
        denominator = (1.0 + cosine) + lam * lam * (1.0 - cosine)
        return (2.0 * lam / denominator) ** (0.5 * self.n - self.sigma)

    def on(self, grid: Grid) -> GridField:
        return GridField(grid, self(grid.points))


def bubble_sphere(center: np.ndarray, lam: float, n: int, sigma: float, grid: Grid) -> GridField:
    if grid.n != n:
        raise GeometryMismatch(f"grid is on S^{grid.n}, bubble on S^{n}")
    center = np.asarray(center, dtype=float)
    _check_zonal_center(grid, center)
    return SphereBubble(center, lam, n, sigma).on(grid)


def planar_bubble_constant(n: int, sigma: float, K0: float) -> float:
    """k = (K0 pi^{n/2} Gamma(sigma) / Gamma(n/2 + sigma))^{1/sigma}."""
    if not K0 > 0.0:
        raise DomainError("K0 must be positive")
    check_sigma(n, sigma)
    log_k = (
        math.log(K0)
        + 0.5 * n * math.log(math.pi)
        + log_gamma(sigma)
        - log_gamma(0.5 * n + sigma)
    ) / sigma
    return math.exp(log_k)


def unit_bubble_height(n: int, sigma: float) -> float:
    """The K0 for which the planar bubble constant k equals 1."""
    return math.exp(log_gamma(0.5 * n + sigma) - 0.5 * n * math.log(math.pi) - log_gamma(sigma))


@dataclass(frozen=True)
class RadialKernel:
    """rho(r, s) = integral over S^{n-1} of |r e_1 - s theta|^{2 sigma - n}.

    Closed form: ``omega_{n-1} M^{2 sigma - n} 2F1((n - 2 sigma)/2, 1 - sigma; n/2; (m/M)^2)``
    where m and M are the smaller and larger of r and s.
    """

    n: int
    sigma: float

    @property
    def _params(self) -> Tuple[float, float, float]:
        return 0.5 * self.n - self.sigma, 1.0 - self.sigma, 0.5 * self.n

    def __call__(self, r: np.ndarray, s: np.ndarray) -> np.ndarray:
        r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
        big = np.maximum(r, s)
        small = np.minimum(r, s)
        a, b, c = self._params
        z = (small / big) ** 2
        return sphere_area(self.n - 1) * big ** (2.0 * self.sigma - self.n) * hyp2f1(a, b, c, z)

    def dr(self, r: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Partial derivative of rho in its first argument (r != s)."""
        r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
        a, b, c = self._params
        shell = sphere_area(self.n - 1)
        exponent = 2.0 * self.sigma - self.n
        inner = r < s
        big = np.where(inner, s, r)
        small = np.where(inner, r, s)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (small / big) ** 2
            value = hyp2f1(a, b, c, z)
            slope = (a * b / c) * hyp2f1(a + 1.0, b + 1.0, c + 1.0, z)
            below = shell * big**exponent * slope * 2.0 * r / big**2
            above = shell * (
                exponent * r ** (exponent - 1.0) * value
                - r**exponent * slope * 2.0 * s * s / r**3
            )
        return np.where(inner, below, above)


@lru_cache(maxsize=16)
def radial_kernel(n: int, sigma: float) -> RadialKernel:
    check_sigma(n, sigma)
    return RadialKernel(n, sigma)


@dataclass(frozen=True)
class PlaneBubble:
    """u(x) = lam^{e} (1 + k lam^2 |x - x0|^2)^{-e}, e = (n - 2 sigma)/2.

    Solves ``u = integral K0 u^{(n+2 sigma)/(n-2 sigma)}(y) |x - y|^{2 sigma - n} dy``.
    """

    center: Tuple[float, ...]
    scale: float
    K0: float
    n: int
    sigma: float

    def __post_init__(self) -> None:
        check_sigma(self.n, self.sigma)
        if not self.scale > 0.0:
            raise DomainError("bubble scale must be positive")
        if not self.K0 > 0.0:
            raise DomainError("K0 must be positive")
        if len(self.center) != self.n:
            raise DomainError("planar bubble center must lie in R^n")

    @property
    def weight(self) -> float:
        return 0.5 * self.n - self.sigma

    @property
    def k(self) -> float:
        return planar_bubble_constant(self.n, self.sigma, self.K0)

    @property
    def amplitude(self) -> float:
        return self.scale**self.weight

    @property
    def exponent(self) -> float:
        return (self.n + 2.0 * self.sigma) / (self.n - 2.0 * self.sigma)

    def profile(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return self.amplitude * (1.0 + self.k * (self.scale * r) ** 2) ** (-self.weight)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        offset = x - np.asarray(self.center, dtype=float)
        return self.profile(np.sqrt(np.sum(offset * offset, axis=-1)))

    def potential(self, r: float) -> float:
        """integral K0 u^p(y) |x - y|^{2 sigma - n} dy at |x - x0| = r."""
        kernel = radial_kernel(self.n, self.sigma)
        p = self.exponent

        def integrand(s: float) -> float:
            return self.K0 * float(self.profile(s)) ** p * float(kernel(r, s)) * s ** (self.n - 1)

        options = dict(epsabs=1e-13, epsrel=1e-11, limit=400)
        if r > 0.0:
            inner, _ = quad(integrand, 0.0, r, **options)
            outer, _ = quad(integrand, r, np.inf, **options)
            return inner + outer
        value, _ = quad(integrand, 0.0, np.inf, **options)
        return value

    def residual(self, radii: np.ndarray) -> np.ndarray:
        """u(r) minus its integral-equation image at each radius."""
        radii = np.asarray(radii, dtype=float)
        return np.array([float(self.profile(r)) - self.potential(float(r)) for r in radii])


def bubble_plane(
    center: np.ndarray, lam: float, K0: float, n: int, sigma: float
) -> PlaneBubble:
    return PlaneBubble(tuple(float(c) for c in np.atleast_1d(center)), float(lam), float(K0), n, sigma)


__all__ = [
    "ConformalSpectrum",
    "MobiusMap",
    "PlaneBubble",
    "PlanarField",
    "RadialField",
    "RadialKernel",
    "SphereBubble",
    "apply_inverse_psigma",
    "apply_psigma",
    "bubble_plane",
    "bubble_sphere",
    "check_sigma",
    "conformal_factor",
    "conformal_weight_factor",
    "mobius_apply",
    "node_radii",
    "planar_bubble_constant",
    "pull_to_plane",
    "push_to_sphere",
    "radial_kernel",
    "riesz_direct",
    "sample_field",
    "sharp_constant",
    "spectrum_for",
    "stereo_forward",
    "stereo_inverse",
    "t_phi_transform",
    "unit_bubble_height",
]
