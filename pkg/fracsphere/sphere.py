"""Sphere geometry, quadrature grids and spectral transforms.

Two representations are supported:

* ``Mode.ZONAL``: axially symmetric fields on S^n for any n >= 2. Fields depend
  on ``t = cos(theta) = xi_{n+1}`` only, and the basis is the orthonormal
  Gegenbauer family ``C_k^{(n-1)/2}(t)``.
* ``Mode.FULL_S2``: general fields on S^2 in the real orthonormal spherical
  harmonic basis. Coefficient ``(l, m)`` sits at flat index ``l*l + l + m``.
  ``m < 0`` carries ``sin(|m| phi)`` and ``m > 0`` carries ``cos(m phi)``.

Transforms are dense matrix products against a basis matrix that is cached on
the (immutable) grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property, lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import BarycentricInterpolator, RegularGridInterpolator

from .errors import DomainError, GeometryMismatch, QuadratureError
from .specfun import gauss_jacobi, gegenbauer_table, log_gamma, sphere_area

logger = logging.getLogger(__name__)

# Evaluation points per block for the dense barycentric formula.
_INTERP_CHUNK = 1024


class Mode(str, Enum):
    ZONAL = "zonal"
    FULL_S2 = "fulls2"


@dataclass(frozen=True)
class Geometry:
    """Sphere dimension, representation mode and spectral degree cap."""

    n: int
    mode: Mode = Mode.ZONAL
    L: int = 16

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"sphere dimension must be an integer >= 2, got {self.n}")
        if int(self.L) != self.L or self.L < 0:
            raise DomainError(f"degree cap must be a non-negative integer, got {self.L}")
        if self.mode is Mode.FULL_S2 and self.n != 2:
            raise DomainError("full harmonic mode is only available on S^2")

    @property
    def size(self) -> int:
        if self.mode is Mode.ZONAL:
            return self.L + 1
        return (self.L + 1) ** 2

    @property
    def degrees(self) -> np.ndarray:
        if self.mode is Mode.ZONAL:
            return np.arange(self.L + 1)
        return np.repeat(np.arange(self.L + 1), 2 * np.arange(self.L + 1) + 1)

    @property
    def area(self) -> float:
        return sphere_area(self.n)

    def with_cap(self, L: int) -> "Geometry":
        return Geometry(n=self.n, mode=self.mode, L=L)


def full_index(l: int, m: int) -> int:
    """Flat index of the real harmonic of degree l and order m."""
    return l * l + l + m


def zonal_norms(n: int, L: int) -> np.ndarray:
    """sqrt(h_k * omega_{n-1}) for the Gegenbauer family C_k^{(n-1)/2}."""
    lam = 0.5 * (n - 1)
    k = np.arange(L + 1, dtype=float)
    log_h = (
        math.log(math.pi)
        + (1.0 - 2.0 * lam) * math.log(2.0)
        + log_gamma(k + 2.0 * lam)
        - log_gamma(k + 1.0)
        - np.log(k + lam)
        - 2.0 * log_gamma(lam)
    )
    return np.sqrt(np.exp(log_h) * sphere_area(n - 1))


def _legendre_table(L: int, t: np.ndarray) -> np.ndarray:
    """Associated Legendre functions with unit L2(-1, 1) norm, indexed [l, m, point]."""
    y = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    p = np.zeros((L + 1, L + 1, t.size))
    p[0, 0] = 1.0 / math.sqrt(2.0)
    for m in range(1, L + 1):
        p[m, m] = -math.sqrt(1.0 + 1.0 / (2 * m)) * y * p[m - 1, m - 1]
    for m in range(0, L):
        p[m + 1, m] = math.sqrt(2 * m + 3.0) * t * p[m, m]
        for l in range(m + 2, L + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            p[l, m] = a * (t * p[l - 1, m] - b * p[l - 2, m])
    return p


def basis_at(geometry: Geometry, points: np.ndarray) -> np.ndarray:
    """Orthonormal basis evaluated at points, shape (geometry.size, len(points))."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != geometry.n + 1:
        raise GeometryMismatch(
            f"points live in R^{points.shape[1]}, expected R^{geometry.n + 1}"
        )
    t = np.clip(points[:, -1], -1.0, 1.0)
    if geometry.mode is Mode.ZONAL:
        table = gegenbauer_table(geometry.L, 0.5 * (geometry.n - 1), t)
        return table / zonal_norms(geometry.n, geometry.L)[:, None]

    phi = np.arctan2(points[:, 1], points[:, 0])
    legendre = _legendre_table(geometry.L, t)
    out = np.empty((geometry.size, t.size))
    for l in range(geometry.L + 1):
        out[full_index(l, 0)] = legendre[l, 0] / math.sqrt(2.0 * math.pi)
        for m in range(1, l + 1):
            out[full_index(l, m)] = legendre[l, m] * np.cos(m * phi) / math.sqrt(math.pi)
            out[full_index(l, -m)] = legendre[l, m] * np.sin(m * phi) / math.sqrt(math.pi)
    return out


def zonal_points(t: np.ndarray, n: int) -> np.ndarray:
    """Points (sqrt(1-t^2), 0, ..., 0, t) on a meridian of S^n."""
    t = np.asarray(t, dtype=float)
    points = np.zeros((t.size, n + 1))
    points[:, 0] = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    points[:, -1] = t
    return points


def south_pole(n: int) -> np.ndarray:
    pole = np.zeros(n + 1)
    pole[-1] = -1.0
    return pole


def north_pole(n: int) -> np.ndarray:
    return -south_pole(n)


@dataclass(frozen=True, eq=False)
class Grid:
    """Quadrature nodes on S^n, with weights summing to omega_n.

    Zonal grids use Gauss-Jacobi nodes in t with alpha = (n-2)/2. Full S^2 grids
    use Gauss-Legendre colatitudes times 2*m_theta - 1 equispaced longitudes.
    """

    geometry: Geometry
    points: np.ndarray
    weights: np.ndarray
    t: np.ndarray
    colatitudes: Optional[np.ndarray] = None
    longitudes: Optional[np.ndarray] = None
    quadrature_weights: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.geometry.n

    @property
    def size(self) -> int:
        return int(self.weights.size)

    @cached_property
    def basis(self) -> np.ndarray:
        table = basis_at(self.geometry, self.points)
        table.setflags(write=False)
        return table

    @cached_property
    def barycentric_weights(self) -> np.ndarray:
        # Closed form for Gauss-Jacobi nodes: (-1)^j sqrt((1 - t_j^2) w_j)
        signs = np.where(np.arange(self.size) % 2 == 0, 1.0, -1.0)
        return signs * np.sqrt((1.0 - self.t**2) * self.quadrature_weights)


def _zonal_grid(geometry: Geometry, nodes: Optional[int]) -> Grid:
    m = 2 * (geometry.L + 1) if nodes is None else int(nodes)
    if m < geometry.L + 1:
        raise GeometryMismatch(f"zonal grid needs at least L+1 = {geometry.L + 1} nodes, got {m}")
    rule = gauss_jacobi(m, 0.5 * (geometry.n - 2))
    t = np.array(rule.nodes)
    weights = sphere_area(geometry.n - 1) * rule.weights
    points = zonal_points(t, geometry.n)
    for array in (t, weights, points):
        array.setflags(write=False)
    return Grid(
        geometry=geometry,
        points=points,
        weights=weights,
        t=t,
        quadrature_weights=rule.weights,
    )


def _full_grid(geometry: Geometry, nodes: Optional[int]) -> Grid:
    m_theta = geometry.L + 1 if nodes is None else int(nodes)
    if m_theta < geometry.L + 1:
        raise GeometryMismatch(
            f"S^2 grid needs at least L+1 = {geometry.L + 1} colatitudes, got {m_theta}"
        )
    m_phi = 2 * m_theta - 1
    rule = gauss_jacobi(m_theta, 0.0)
    colatitudes = np.arccos(rule.nodes)
    longitudes = 2.0 * math.pi * np.arange(m_phi) / m_phi
    t = np.repeat(rule.nodes, m_phi)
    theta = np.repeat(colatitudes, m_phi)
    phi = np.tile(longitudes, m_theta)
    points = np.column_stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), t])
    weights = np.repeat(rule.weights, m_phi) * (2.0 * math.pi / m_phi)
    for array in (t, points, weights, colatitudes, longitudes):
        array.setflags(write=False)
    return Grid(
        geometry=geometry,
        points=points,
        weights=weights,
        t=t,
        colatitudes=colatitudes,
        longitudes=longitudes,
        quadrature_weights=rule.weights,
    )


@lru_cache(maxsize=64)
def make_grid(geometry: Geometry, nodes: Optional[int] = None) -> Grid:
    """Quadrature grid for a geometry.

    ``nodes`` is the node count in t for zonal grids (default 2(L+1)) and the
    colatitude count for S^2 grids (default L+1). Oversampling keeps analysis
    exact for products of band-limited fields.
    """
    if geometry.mode is Mode.ZONAL:
        grid = _zonal_grid(geometry, nodes)
    else:
        grid = _full_grid(geometry, nodes)
    logger.debug("built %s grid n=%d L=%d with %d nodes", geometry.mode.value, geometry.n, geometry.L, grid.size)
    return grid


@dataclass(frozen=True, eq=False)
class GridField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.size,):
            raise GeometryMismatch(
                f"field has {values.size} values for a grid of {self.grid.size} nodes"
            )
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray) -> "GridField":
        return GridField(self.grid, values)


@dataclass(frozen=True, eq=False)
class SpectralField:
    geometry: Geometry
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        coefficients = np.asarray(self.coefficients, dtype=float)
        if coefficients.shape != (self.geometry.size,):
            raise GeometryMismatch(
                f"{coefficients.size} coefficients for a geometry with {self.geometry.size}"
            )
        if not np.all(np.isfinite(coefficients)):
            raise DomainError("spectral coefficients must be finite")
        object.__setattr__(self, "coefficients", coefficients)

    def coefficient(self, degree: int, order: int = 0) -> float:
        if self.geometry.mode is Mode.ZONAL:
            if order != 0:
                raise DomainError("zonal fields only carry order 0")
            return float(self.coefficients[degree])
        return float(self.coefficients[full_index(degree, order)])

    def truncate(self, L: int) -> "SpectralField":
        geometry = self.geometry.with_cap(L)
        out = np.zeros(geometry.size)
        keep = min(geometry.size, self.geometry.size)
        out[:keep] = self.coefficients[:keep]
        return SpectralField(geometry, out)


def analyze(f: GridField, geometry: Optional[Geometry] = None) -> SpectralField:
    """Quadrature projection onto the orthonormal basis of the grid's geometry."""
    geometry = geometry or f.grid.geometry
    if geometry != f.grid.geometry:
        raise GeometryMismatch(f"cannot analyze a {f.grid.geometry} field as {geometry}")
    return SpectralField(geometry, f.grid.basis @ (f.grid.weights * f.values))


def synthesize(c: SpectralField, grid: Grid) -> GridField:
    if c.geometry != grid.geometry:
        raise GeometryMismatch(f"coefficients for {c.geometry} do not fit a {grid.geometry} grid")
    return GridField(grid, grid.basis.T @ c.coefficients)


def integrate(f: GridField) -> float:
    return float(np.dot(f.grid.weights, f.values))


def evaluate(c: SpectralField, points: np.ndarray) -> np.ndarray:
    """Truncated expansion at arbitrary points of S^n."""
    return basis_at(c.geometry, points).T @ c.coefficients


def field_from_function(grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> GridField:
    return GridField(grid, fn(grid.points))


def interpolate(f: GridField, points: np.ndarray) -> np.ndarray:
    """Interpolate grid values at arbitrary points.

    Zonal fields use barycentric Lagrange interpolation in t through all nodes;
    S^2 fields use bilinear interpolation in (theta, phi) with a periodic pad.
    """
    grid = f.grid
    points = np.atleast_2d(np.asarray(points, dtype=float))
    t = np.clip(points[:, -1], -1.0, 1.0)
    if grid.geometry.mode is Mode.ZONAL:
        interpolator = BarycentricInterpolator(grid.t, f.values, wi=grid.barycentric_weights)
        out = np.empty(t.size)
        for start in range(0, t.size, _INTERP_CHUNK):
            out[start:start + _INTERP_CHUNK] = interpolator(t[start:start + _INTERP_CHUNK])
        return out

    m_theta = grid.colatitudes.size
    table = f.values.reshape(m_theta, -1)[::-1]
    theta = grid.colatitudes[::-1]
    phi = np.concatenate([[grid.longitudes[-1] - 2.0 * math.pi], grid.longitudes, [2.0 * math.pi]])
    padded = np.concatenate([table[:, -1:], table, table[:, :1]], axis=1)
    interpolator = RegularGridInterpolator(
        (theta, phi), padded, bounds_error=False, fill_value=None
    )
    query_phi = np.mod(np.arctan2(points[:, 1], points[:, 0]), 2.0 * math.pi)
    return interpolator(np.column_stack([np.arccos(t), query_phi]))


def antipodal_projection(c: SpectralField) -> SpectralField:
    """Keep the even degrees, i.e. the part with v(xi) = v(-xi)."""
    mask = (c.geometry.degrees % 2) == 0
    return SpectralField(c.geometry, np.where(mask, c.coefficients, 0.0))


def rotation_to_pole(center: np.ndarray) -> np.ndarray:
    """Householder isometry exchanging ``center`` and the south pole (symmetric, involutive)."""
    center = np.asarray(center, dtype=float)
    size = center.size
    pole = south_pole(size - 1)
    w = pole - center
    norm2 = float(np.dot(w, w))
    if norm2 < 1e-30:
        return np.eye(size)
    return np.eye(size) - 2.0 * np.outer(w, w) / norm2


def _gauss_legendre_on(a: float, b: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    rule = gauss_jacobi(m, 0.0)
    half = 0.5 * (b - a)
    return a + half * (rule.nodes + 1.0), half * rule.weights


def funk_hecke_multiplier(
    kernel: Callable[[np.ndarray], np.ndarray],
    k: int,
    geometry: Geometry,
    *,
    gap_kernel: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    singular_exponent: Optional[float] = None,
    delta: float = 1e-3,
    tol: float = 1e-8,
    start: int = 16,
    max_nodes: int = 4096,
) -> float:
    """Eigenvalue of zonal convolution by ``kernel(t)`` on degree-k harmonics.

    The interval splits at ``t = 1 - delta``. The regular piece is integrated
    in theta. The piece next to t = 1 is parametrised by the gap ``u = 1 - t =
    delta * s**q``, where q is 2 unless the kernel's endpoint exponent
    (kernel ~ (1-t)^gamma) is supplied. In that case the substitution makes the
    integrand polynomial in s at the endpoint. ``gap_kernel(u)``, the kernel
    written in terms of u, is used on that piece when given, since ``1 - u``
    rounds to 1 for the smallest nodes. Rules double until successive values
    agree to ``tol`` relative to the integral of the absolute integrand.
    """
    n = geometry.n
    lam = 0.5 * (n - 1)
    # C_k^lam(1) = Gamma(k + 2 lam) / (k! Gamma(2 lam))
    peak = math.exp(log_gamma(k + 2.0 * lam) - log_gamma(k + 1.0) - log_gamma(2.0 * lam))
    shell = sphere_area(n - 1)
    power = 2.0
    if singular_exponent is not None:
        a = singular_exponent + 0.5 * n
        if a <= 0.0:
            raise QuadratureError(f"kernel exponent {singular_exponent} is not integrable on S^{n}")
        power = math.ceil(a) / a
    near_kernel = gap_kernel or (lambda u: kernel(1.0 - u))
    theta_split = math.acos(1.0 - delta)

    def _integrands(m: int) -> tuple[np.ndarray, np.ndarray]:
        theta, w_theta = _gauss_legendre_on(theta_split, math.pi, m)
        t_reg = np.cos(theta)
        reg = kernel(t_reg) * gegenbauer_table(k, lam, t_reg)[k] * np.sin(theta) ** (n - 1) * w_theta
        s, w_s = _gauss_legendre_on(0.0, 1.0, m)
        gap = delta * s**power
        jac = delta * power * s ** (power - 1.0)
        # 1 - t^2 = u (2 - u)
        weight = (gap * (2.0 - gap)) ** (0.5 * (n - 2))
        sing = near_kernel(gap) * gegenbauer_table(k, lam, 1.0 - gap)[k] * weight * jac * w_s
        return reg, sing

    previous = None
    m = start
    change = math.inf
    while m <= max_nodes:
        reg, sing = _integrands(m)
        value = shell * (reg.sum() + sing.sum()) / peak
        scale = shell * (np.abs(reg).sum() + np.abs(sing).sum()) / peak
        if previous is not None:
            change = abs(value - previous)
            logger.debug("funk_hecke k=%d m=%d value=%.17g change=%.3g", k, m, value, change)
            if change <= tol * max(scale, 1e-300):
                return float(value)
        previous = value
        m *= 2
    raise QuadratureError(
        f"Funk-Hecke multiplier for degree {k} did not settle by {max_nodes} nodes",
        value=previous,
        last_change=change,
    )


__all__ = [
    "Geometry",
    "Grid",
    "GridField",
    "Mode",
    "SpectralField",
    "analyze",
    "antipodal_projection",
    "basis_at",
    "evaluate",
    "field_from_function",
    "full_index",
    "funk_hecke_multiplier",
    "integrate",
    "interpolate",
    "make_grid",
    "north_pole",
    "rotation_to_pole",
    "south_pole",
    "synthesize",
    "zonal_norms",
    "zonal_points",
]
