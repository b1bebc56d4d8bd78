"""Energies, Sobolev quotients, Kazdan-Warner integrals and Pohozaev residuals."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .conformal import ConformalSpectrum, SphereBubble, radial_kernel, spectrum_for
from .errors import DomainError, GeometryMismatch, MetadataError, TailDataError
from .schemas import KProfileSpec
from .specfun import gegenbauer_table, log_gamma, sphere_area
from .sphere import (
    Geometry,
    Grid,
    GridField,
    Mode,
    SpectralField,
    analyze,
    evaluate,
    make_grid,
    north_pole,
    south_pole,
    zonal_norms,
    zonal_points,
)

logger = logging.getLogger(__name__)

_FD_STEP = 1e-3


@dataclass(frozen=True)
class CriticalPoint:
    xi: Tuple[float, ...]
    beta: float = 2.0
    a: Tuple[float, ...] = ()
    flatness_order: Optional[float] = None
    regular: Optional[bool] = None


@dataclass(frozen=True, eq=False)
class KProfile:
    """Prescribed function K on S^n together with declared critical-point metadata.

    Zonal kinds (constant, affine height ``a + b xi_{n+1}``, polynomial in
    ``t = xi_{n+1}``) are differentiated analytically. Spectral profiles use the
    Gegenbauer derivative identity in zonal mode and Richardson central
    differences along a tangent frame on S^2.
    """

    kind: str
    n: int
    value: float = 1.0
    a: float = 0.0
    b: float = 0.0
    coefficients: Tuple[float, ...] = ()
    spectral: Optional[SpectralField] = None
    positive: bool = True
    critical_points: Tuple[CriticalPoint, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "affine_height", "zonal_polynomial", "spectral_file"):
            raise DomainError(f"unknown K kind {self.kind!r}")
        if self.kind == "spectral_file":
            if self.spectral is None:
                raise DomainError("spectral K needs coefficients")
            if self.spectral.geometry.n != self.n:
                raise GeometryMismatch("spectral K lives on a different sphere")
        for point in self.critical_points:
            if len(point.xi) != self.n + 1:
                raise MetadataError(f"critical point {point.xi} is not a point of S^{self.n}")

    @classmethod
    def constant(cls, value: float, n: int) -> "KProfile":
        return cls(kind="constant", n=n, value=float(value))

    @classmethod
    def affine_height(cls, a: float, b: float, n: int) -> "KProfile":
        return cls(kind="affine_height", n=n, a=float(a), b=float(b))

    @classmethod
    def zonal_polynomial(cls, coefficients: Sequence[float], n: int) -> "KProfile":
        return cls(kind="zonal_polynomial", n=n, coefficients=tuple(float(c) for c in coefficients))

    @classmethod
    def from_spectral(cls, field: SpectralField) -> "KProfile":
        return cls(kind="spectral_file", n=field.geometry.n, spectral=field)

    @classmethod
    def from_spec(cls, spec: KProfileSpec, n: int) -> "KProfile":
        points = tuple(
            CriticalPoint(
                xi=tuple(cp.xi),
                beta=cp.beta,
                a=tuple(cp.a),
                flatness_order=cp.flatness_order,
                regular=cp.regular,
            )
            for cp in spec.critical_points
        )
        spectral = None
        if spec.kind == "spectral_file":
            from .storage import load_spectral_field

            spectral = load_spectral_field(spec.path)
        return cls(
            kind=spec.kind,
            n=n,
            value=spec.value,
            a=spec.a,
            b=spec.b,
            coefficients=tuple(spec.coefficients),
            spectral=spectral,
            positive=spec.positive,
            critical_points=points,
        )

    @property
    def is_zonal(self) -> bool:
        if self.kind == "spectral_file":
            return self.spectral.geometry.mode is Mode.ZONAL
        return True

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or (self.kind == "affine_height" and self.b == 0.0)

    def values(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        t = points[:, -1]
        if self.kind == "constant":
            return np.full(t.shape, self.value)
        if self.kind == "affine_height":
            return self.a + self.b * t
        if self.kind == "zonal_polynomial":
            return npoly.polyval(t, self.coefficients)
        return evaluate(self.spectral, points)

    def on(self, grid: Grid) -> GridField:
        values = self.values(grid.points)
        if self.positive and not np.all(values > 0.0):
            raise DomainError("K is flagged positive but is not positive on the grid")
        return GridField(grid, values)

    def _zonal_slope(self, t: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.zeros_like(t)
        if self.kind == "affine_height":
            return np.full_like(t, self.b)
        if self.kind == "zonal_polynomial":
            return npoly.polyval(t, npoly.polyder(self.coefficients))
        geometry = self.spectral.geometry
        if geometry.L == 0:
            return np.zeros_like(t)
        lam = 0.5 * (self.n - 1)
        # d/dt C_k^lam = 2 lam C_{k-1}^{lam+1}
        shifted = gegenbauer_table(geometry.L - 1, lam + 1.0, np.clip(t, -1.0, 1.0))
        norms = zonal_norms(self.n, geometry.L)
        derivative_rows = 2.0 * lam * shifted / norms[1:, None]
        return self.spectral.coefficients[1:] @ derivative_rows

    def tangential_gradient(self, points: np.ndarray) -> np.ndarray:
        """Gradient of K along S^n, as ambient vectors orthogonal to each point."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_zonal:
            t = points[:, -1]
            axis = np.zeros(points.shape[1])
            axis[-1] = 1.0
            return self._zonal_slope(t)[:, None] * (axis[None, :] - t[:, None] * points)
        return self._richardson_gradient(points)

    def _richardson_gradient(self, points: np.ndarray) -> np.ndarray:
        gradient = np.zeros_like(points)
        for axis in range(points.shape[1]):
            unit = np.zeros(points.shape[1])
            unit[axis] = 1.0
            tangent = unit[None, :] - points[:, axis:axis + 1] * points
            length = np.linalg.norm(tangent, axis=1)
            safe = length > 1e-12
            direction = np.zeros_like(tangent)
            direction[safe] = tangent[safe] / length[safe, None]

            def slope(h: float) -> np.ndarray:
                ahead = math.cos(h) * points + math.sin(h) * direction
                behind = math.cos(h) * points - math.sin(h) * direction
                return (self.values(ahead) - self.values(behind)) / (2.0 * h)

            derivative = (4.0 * slope(0.5 * _FD_STEP) - slope(_FD_STEP)) / 3.0
            # grad K . e_axis = (directional derivative along e_axis's tangent part) * |tangent|
            gradient[:, axis] = derivative * length
        return gradient

    def derivative_along(self, points: np.ndarray, j: int) -> np.ndarray:
        """nabla_{X_j} K with X_j the tangential gradient of the coordinate xi_j (1-based)."""
        if not 1 <= j <= self.n + 1:
            raise DomainError(f"coordinate index must be in 1..{self.n + 1}")
        return self.tangential_gradient(points)[:, j - 1]

    def maximum(self) -> Tuple[float, np.ndarray]:
        """Maximum value of K and a point where it is attained."""
        if self.kind == "constant":
            return self.value, north_pole(self.n)
        if self.kind == "affine_height":
            pole = north_pole(self.n) if self.b >= 0.0 else south_pole(self.n)
            return self.a + abs(self.b), pole
        if self.is_zonal:
            t = np.linspace(-1.0, 1.0, 4001)
            values = self.values(zonal_points(t, self.n))
            best = int(np.argmax(values))
            lo, hi = t[max(best - 1, 0)], t[min(best + 1, t.size - 1)]
            result = minimize_scalar(
                lambda s: -float(self.values(zonal_points(np.array([s]), self.n))[0]),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-12},
            )
            s = float(result.x) if -result.fun >= values[best] else float(t[best])
            point = zonal_points(np.array([s]), self.n)[0]
            return float(self.values(point[None, :])[0]), point
        grid = make_grid(Geometry(2, Mode.FULL_S2, self.spectral.geometry.L), 4 * (self.spectral.geometry.L + 1))
        values = self.values(grid.points)
        best = int(np.argmax(values))
        return float(values[best]), np.array(grid.points[best])

    def sup_gradient(self, grid: Grid) -> float:
        return float(np.max(np.linalg.norm(self.tangential_gradient(grid.points), axis=1)))


# ---------------------------------------------------------------------------
# Energies and quotients


def energy(v: SpectralField, spectrum: ConformalSpectrum) -> float:
    """integral v P_sigma v = sum_k e_k c_k^2."""
    return float(np.sum(spectrum.multipliers(v.geometry) * v.coefficients**2))


def hs_norm(v: SpectralField, sigma: float) -> float:
    k = v.geometry.degrees.astype(float)
    symbol = (1.0 + k * (k + v.geometry.n - 1.0)) ** sigma
    return float(math.sqrt(np.sum(symbol * v.coefficients**2)))


@dataclass(frozen=True, eq=False)
class QuotientFunctional:
    """Q_p on coefficient vectors for a fixed grid, spectrum, K and exponent."""

    grid: Grid
    spectrum: ConformalSpectrum
    K: np.ndarray
    p: float

    def __post_init__(self) -> None:
        if self.p <= 1.0 or self.p > self.spectrum.critical_exponent + 1e-12:
            raise DomainError(f"exponent p={self.p} outside (1, {self.spectrum.critical_exponent}]")
        if self.K.shape != (self.grid.size,):
            raise GeometryMismatch("K values do not match the grid")

    @cached_property
    def multipliers(self) -> np.ndarray:
        return self.spectrum.multipliers(self.grid.geometry)

    def field(self, c: np.ndarray) -> np.ndarray:
        return self.grid.basis.T @ c

    def energy(self, c: np.ndarray) -> float:
        return float(np.dot(self.multipliers * c, c))

    def denominator(self, c: np.ndarray, v: Optional[np.ndarray] = None) -> float:
        v = self.field(c) if v is None else v
        return float(np.dot(self.grid.weights, self.K * np.abs(v) ** (self.p + 1.0)))

    def nonlinear(self, c: np.ndarray, v: Optional[np.ndarray] = None) -> np.ndarray:
        """Coefficients of K |v|^{p-1} v."""
        v = self.field(c) if v is None else v
        return self.grid.basis @ (self.grid.weights * self.K * np.abs(v) ** (self.p - 1.0) * v)

    def value(self, c: np.ndarray) -> float:
        denominator = self.denominator(c)
        if not denominator > 0.0:
            raise DomainError("Sobolev quotient has a zero denominator")
        return self.energy(c) / denominator ** (2.0 / (self.p + 1.0))

    def gradient(self, c: np.ndarray) -> np.ndarray:
        v = self.field(c)
        denominator = self.denominator(c, v)
        if not denominator > 0.0:
            raise DomainError("Sobolev quotient has a zero denominator")
        scale = 2.0 / denominator ** (2.0 / (self.p + 1.0))
        return scale * (self.multipliers * c - (self.energy(c) / denominator) * self.nonlinear(c, v))

    def el_residual(self, c: np.ndarray) -> Tuple[float, float]:
        """(||P v - lam K v^p||, lam) with lam = energy / denominator."""
        v = self.field(c)
        lam = self.energy(c) / self.denominator(c, v)
        residual = self.multipliers * c - lam * self.nonlinear(c, v)
        return float(np.linalg.norm(residual)), lam


def sobolev_quotient(v: GridField, K: KProfile, p: float, spectrum: ConformalSpectrum) -> float:
    """Q_p[v] = integral v P_sigma v / (integral K |v|^{p+1})^{2/(p+1)}."""
    functional = QuotientFunctional(v.grid, spectrum, K.values(v.grid.points), p)
    return functional.value(analyze(v).coefficients)


def quotient_gradient(v: GridField, K: KProfile, p: float, spectrum: ConformalSpectrum) -> SpectralField:
    functional = QuotientFunctional(v.grid, spectrum, K.values(v.grid.points), p)
    return SpectralField(v.grid.geometry, functional.gradient(analyze(v).coefficients))


# ---------------------------------------------------------------------------
# Kazdan-Warner


def kazdan_warner(v: GridField, K: KProfile, j: int, sigma: float) -> float:
    """integral (nabla_{X_j} K) v^{2n/(n - 2 sigma)} over S^n."""
    grid = v.grid
    n = grid.n
    if not 1 <= j <= n + 1:
        raise DomainError(f"coordinate index must be in 1..{n + 1}")
    if grid.geometry.mode is Mode.ZONAL and K.is_zonal and j <= n:
        # Odd in the transverse coordinate: vanishes identically for axially symmetric data.
        return 0.0
    power = 2.0 * n / (n - 2.0 * sigma)
    integrand = K.derivative_along(grid.points, j) * np.abs(v.values) ** power
    return float(np.dot(grid.weights, integrand))


def kazdan_warner_vector(v: GridField, K: KProfile, sigma: float) -> np.ndarray:
    return np.array([kazdan_warner(v, K, j, sigma) for j in range(1, v.grid.n + 2)])


# ---------------------------------------------------------------------------
# Pohozaev identity on a ball


RadialFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PohozaevTerms:
    interior: float
    gradient_K: float
    tail: float
    tail_gradient: float
    boundary: float

    @property
    def residual(self) -> float:
        return self.interior + self.gradient_K - (self.tail + self.tail_gradient - self.boundary)

    @property
    def scale(self) -> float:
        return max(abs(self.interior), abs(self.gradient_K), abs(self.tail), abs(self.tail_gradient), abs(self.boundary))


def _tail_from_u(
    u: RadialFunction,
    K: RadialFunction,
    p: float,
    R: float,
    n: int,
    sigma: float,
) -> Tuple[RadialFunction, RadialFunction]:
    kernel = radial_kernel(n, sigma)
    try:
        float(np.asarray(u(np.array([2.0 * R])))[0])
    except DomainError as exc:
        raise TailDataError("u is not defined beyond R; supply the tail h_R") from exc

    def density(s: float) -> float:
        return float(K(np.array([s]))[0]) * float(np.asarray(u(np.array([s])))[0]) ** p * s ** (n - 1)

    options = dict(epsabs=1e-13, epsrel=1e-11, limit=400)

    def h(r: np.ndarray) -> np.ndarray:
        return np.array([quad(lambda s: density(s) * float(kernel(x, s)), R, np.inf, **options)[0] for x in np.atleast_1d(r)])

    def dh(r: np.ndarray) -> np.ndarray:
        return np.array([quad(lambda s: density(s) * float(kernel.dr(x, s)), R, np.inf, **options)[0] for x in np.atleast_1d(r)])

    return h, dh


def pohozaev_terms(
    u: RadialFunction,
    K: Union[float, RadialFunction],
    p: float,
    R: float,
    *,
    n: int,
    sigma: float,
    h_R: Optional[Tuple[RadialFunction, RadialFunction]] = None,
    K_slope: Optional[RadialFunction] = None,
    nodes: int = 400,
) -> PohozaevTerms:
    """Constituent terms of the Pohozaev identity for radial data on B_R.

    ``h_R`` is a pair (h, dh/dr); without it the tail is computed from u beyond R.
    Integrals over B_R use the midpoint rule in r with ``nodes`` cells.
    """
    if callable(K):
        K_fn = K
        slope = K_slope or (lambda r: np.zeros_like(np.asarray(r, dtype=float)))
    else:
        value = float(K)
        K_fn = lambda r: np.full_like(np.asarray(r, dtype=float), value)
        slope = lambda r: np.zeros_like(np.asarray(r, dtype=float))
    if h_R is None:
        h_R = _tail_from_u(u, K_fn, p, R, n, sigma)
    h, dh = h_R
    shell = sphere_area(n - 1)
    r = (np.arange(nodes) + 0.5) * (R / nodes)
    weights = shell * r ** (n - 1) * (R / nodes)
    u_r = np.clip(np.asarray(u(r), dtype=float), 0.0, None)
    K_r = K_fn(r)
    weight_exponent = 0.5 * n - sigma
    interior = (weight_exponent - n / (p + 1.0)) * float(np.dot(weights, K_r * u_r ** (p + 1.0)))
    gradient_K = -float(np.dot(weights, r * slope(r) * u_r ** (p + 1.0))) / (p + 1.0)
    tail = weight_exponent * float(np.dot(weights, K_r * u_r**p * h(r)))
    tail_gradient = float(np.dot(weights, r * dh(r) * K_r * u_r**p))
    u_R = max(float(np.asarray(u(np.array([R])))[0]), 0.0)
    boundary = R / (p + 1.0) * shell * R ** (n - 1) * float(K_fn(np.array([R]))[0]) * u_R ** (p + 1.0)
    return PohozaevTerms(interior, gradient_K, tail, tail_gradient, boundary)


def pohozaev_residual(
    u: RadialFunction,
    K: Union[float, RadialFunction],
    p: float,
    R: float,
    h_R: Optional[Tuple[RadialFunction, RadialFunction]] = None,
    **kwargs,
) -> float:
    return pohozaev_terms(u, K, p, R, h_R=h_R, **kwargs).residual


# ---------------------------------------------------------------------------
# Two-bubble test functions


def expansion_constant_A(n: int, sigma: float) -> float:
    """2^{-e} omega_{n-1} 2^n integral_0^inf r^{n-1} (1+r^2)^{-(n+2 sigma)/2} dr."""
    weight = 0.5 * n - sigma
    radial = 0.5 * math.exp(log_gamma(0.5 * n) + log_gamma(sigma) - log_gamma(0.5 * n + sigma))
    return 2.0 ** (-weight) * sphere_area(n - 1) * 2.0**n * radial


def _pair_points(K: KProfile) -> Tuple[np.ndarray, np.ndarray]:
    _, first = K.maximum()
    return first, -first


def two_bubble_quotient(
    beta: float,
    K: KProfile,
    sigma: float,
    *,
    nodes: int = 4096,
) -> float:
    """Q at the critical exponent of v_{1,beta} + v_{2,beta} centred at antipodal maxima.

    ``v_{i,beta} = (sqrt(beta^2 - 1) / (beta - cos r_i))^e`` is the sphere bubble
    with scale ``sqrt((beta + 1)/(beta - 1))``. Each summand satisfies
    ``P v_i = c(n, sigma) v_i^p``, so the energy is evaluated as
    ``c(n, sigma) integral (v_1 + v_2)(v_1^p + v_2^p)``.
    """
    if not 1.0 < beta <= 2.0:
        raise DomainError(f"beta must lie in (1, 2], got {beta}")
    n = K.n
    spectrum = spectrum_for(n, sigma, 0)
    first, second = _pair_points(K)
    if not K.is_zonal or abs(first[-1]) < 1.0 - 1e-12:
        raise DomainError("test functions are built on a zonal K with a maximum at a pole")
    grid = make_grid(Geometry(n, Mode.ZONAL, 0), nodes)
    scale = math.sqrt((beta + 1.0) / (beta - 1.0))
    p = spectrum.critical_exponent
    v1 = SphereBubble(first, scale, n, sigma)(grid.points)
    v2 = SphereBubble(second, scale, n, sigma)(grid.points)
    v = v1 + v2
    numerator = spectrum.p_sigma_one * float(np.dot(grid.weights, v * (v1**p + v2**p)))
    denominator = float(np.dot(grid.weights, K.values(grid.points) * v ** (p + 1.0)))
    return numerator / denominator ** (2.0 / (p + 1.0))


def two_bubble_ratio(beta: float, K: KProfile, sigma: float, *, nodes: int = 4096) -> float:
    """Q[v_beta] K(xi_1)^{(n-2 sigma)/n} / (P_sigma(1) omega_n^{2 sigma/n} 2^{2 sigma/n}) - 1."""
    threshold = antipodal_threshold(K, sigma)
    return two_bubble_quotient(beta, K, sigma, nodes=nodes) / threshold - 1.0


@dataclass(frozen=True)
class ExpansionFit:
    slope: float
    curvature: float
    origin_slope: float
    power: float


def fit_expansion_slope(betas: Sequence[float], ratios: Sequence[float], weight: float) -> ExpansionFit:
    """Least-squares fit of ratio ~ slope x + curvature x^q with x = (beta - 1)^weight.

    ``q = min(2, 1/weight)`` is the next power in the expansion. ``origin_slope`` is
    the single-term fit through the origin.
    """
    x = (np.asarray(betas, dtype=float) - 1.0) ** weight
    y = np.asarray(ratios, dtype=float)
    power = min(2.0, 1.0 / weight)
    design = np.column_stack([x, x**power])
    (slope, curvature), *_ = np.linalg.lstsq(design, y, rcond=None)
    origin = float(np.dot(x, y) / np.dot(x, x))
    return ExpansionFit(float(slope), float(curvature), origin, power)


def antipodal_threshold(K: KProfile, sigma: float) -> float:
    """P_sigma(1) omega_n^{2 sigma/n} 2^{2 sigma/n} / (max K)^{(n - 2 sigma)/n}."""
    n = K.n
    k_max, _ = K.maximum()
    if not k_max > 0.0:
        raise DomainError("antipodal threshold needs max K > 0")
    spectrum = spectrum_for(n, sigma, 0)
    return (
        spectrum.p_sigma_one
        * sphere_area(n) ** (2.0 * sigma / n)
        * 2.0 ** (2.0 * sigma / n)
        / k_max ** ((n - 2.0 * sigma) / n)
    )


# ---------------------------------------------------------------------------
# Index count


@dataclass(frozen=True)
class IndexCount:
    hypothesis_holds: bool
    sum: int
    contributing: List[int] = field(default_factory=list)


def index_count_check(K: KProfile, n: Optional[int] = None) -> IndexCount:
    """Signed count over critical points with sum(a_j) < 0 of (-1)^{#{a_j < 0}}, compared to (-1)^n."""
    n = K.n if n is None else n
    if not K.critical_points:
        raise MetadataError("K declares no critical points")
    total = 0
    contributing: List[int] = []
    for index, point in enumerate(K.critical_points):
        if len(point.a) != n:
            raise MetadataError(f"critical point {index} needs {n} coefficients a_j, has {len(point.a)}")
        if any(a == 0.0 for a in point.a):
            raise MetadataError(f"critical point {index} has a vanishing coefficient a_j")
        weight = sum(point.a)
        if weight == 0.0:
            raise MetadataError(f"critical point {index} has sum(a_j) = 0")
        if weight < 0.0:
            total += (-1) ** sum(1 for a in point.a if a < 0.0)
            contributing.append(index)
    return IndexCount(hypothesis_holds=total != (-1) ** n, sum=total, contributing=contributing)


__all__ = [
    "CriticalPoint",
    "ExpansionFit",
    "IndexCount",
    "KProfile",
    "PohozaevTerms",
    "QuotientFunctional",
    "antipodal_threshold",
    "energy",
    "expansion_constant_A",
    "fit_expansion_slope",
    "hs_norm",
    "index_count_check",
    "kazdan_warner",
    "kazdan_warner_vector",
    "pohozaev_residual",
    "pohozaev_terms",
    "quotient_gradient",
    "sobolev_quotient",
    "two_bubble_quotient",
    "two_bubble_ratio",
]
