"""Special functions and one-dimensional quadrature.

Everything downstream (zonal bases, Funk-Hecke multipliers, the eigenvalues of
P_sigma) leans on four pieces defined here: a log-Gamma, Gamma ratios,
Gegenbauer polynomials and Gauss-Jacobi rules.

Gegenbauer normalization: ``C_k^alpha`` follows the usual three-term recurrence
for ``alpha != 0``. At ``alpha == 0`` the family degenerates, and we use the
Chebyshev limit ``C_k^0 = (2/k) T_k`` for ``k >= 1`` (``C_0^0 = 1``), which is also
what ``scipy.special.eval_gegenbauer`` returns.

log-Gamma uses the Lanczos approximation with ``g = 7`` and the nine-term
coefficient set below. Around the zeros of ln Gamma at 1 and 2 the Taylor series
in zeta values takes over, so that the relative error stays near machine
precision there too.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import zeta

from .errors import DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

_LANCZOS_G = 7.0
_LANCZOS_COEFFICIENTS = np.array(
    [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ]
)
_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)
_EULER_GAMMA = 0.57721566490153286061
_SERIES_RADIUS = 0.25
_SERIES_TERMS = 40

# Integer gaps up to this size use the exact product form of Gamma(z+1) = z Gamma(z).
_RECURRENCE_LIMIT = 64

_NEWTON_TOLERANCE = 1e-14
_NEWTON_MAX_STEPS = 12


@dataclass(frozen=True, eq=False)
class QuadratureRule1D:
    """Gauss rule for the weight ``(1 - t^2)^alpha`` on (-1, 1). Arrays are read-only."""

    nodes: np.ndarray
    weights: np.ndarray
    alpha: float

    def __post_init__(self) -> None:
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise DomainError("nodes and weights must be 1-D arrays of equal length")

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def _check_positive(values: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
        raise DomainError(f"{name} requires finite arguments > 0")


@lru_cache(maxsize=1)
def _series_coefficients() -> np.ndarray:
    k = np.arange(2, _SERIES_TERMS + 1, dtype=float)
    return ((-1.0) ** k) * zeta(k) / k


def _log_gamma_one_plus(z: np.ndarray) -> np.ndarray:
    # ln Gamma(1+z) = -gamma z + sum_k (-1)^k zeta(k) z^k / k, |z| <= 1/4
    poly = np.zeros_like(z)
    for coefficient in _series_coefficients()[::-1]:
        poly = poly * z + coefficient
    return -_EULER_GAMMA * z + z * z * poly


def _lanczos(x: np.ndarray) -> np.ndarray:
    z = x - 1.0
    acc = np.full_like(z, _LANCZOS_COEFFICIENTS[0])
    for index in range(1, _LANCZOS_COEFFICIENTS.size):
        acc = acc + _LANCZOS_COEFFICIENTS[index] / (z + index)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_TWO_PI + (z + 0.5) * np.log(t) - t + np.log(acc)


def _log_gamma_core(x: np.ndarray) -> np.ndarray:
    """ln Gamma for x >= 1/2."""
    out = np.empty_like(x)
    near_one = np.abs(x - 1.0) <= _SERIES_RADIUS
    near_two = np.abs(x - 2.0) <= _SERIES_RADIUS
    rest = ~(near_one | near_two)
    if rest.any():
        out[rest] = _lanczos(x[rest])
    if near_one.any():
        out[near_one] = _log_gamma_one_plus(x[near_one] - 1.0)
    if near_two.any():
        z = x[near_two] - 2.0
        out[near_two] = np.log1p(z) + _log_gamma_one_plus(z)
    return out


def log_gamma(x: ArrayLike) -> ArrayLike:
    """Natural log of Gamma(x) for x > 0; scalar in, scalar out."""
    arr = np.asarray(x, dtype=float)
    _check_positive(arr, "log_gamma")
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    small = flat < 0.5
    if (~small).any():
        out[~small] = _log_gamma_core(flat[~small])
    if small.any():
        xs = flat[small]
        # Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        out[small] = np.log(math.pi / np.sin(math.pi * xs)) - _log_gamma_core(1.0 - xs)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def _recurrence_ratio(a: np.ndarray, b: np.ndarray, steps: np.ndarray) -> np.ndarray:
    numerator = np.ones_like(a)
    denominator = np.ones_like(a)
    for j in range(int(np.max(np.abs(steps), initial=0))):
        up = steps > j
        down = steps < -j
        numerator[up] *= b[up] + j
        denominator[down] *= a[down] + j
    return numerator / denominator


def gamma_ratio(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """Gamma(a) / Gamma(b) for a, b > 0.

    Exact products are used where ``a - b`` is an integer of modulus at most 64,
    and the log-Gamma difference is used elsewhere.
    """
    a_arr, b_arr = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    _check_positive(a_arr, "gamma_ratio")
    _check_positive(b_arr, "gamma_ratio")
    scalar = a_arr.ndim == 0
    a_flat = np.atleast_1d(a_arr).ravel()
    b_flat = np.atleast_1d(b_arr).ravel()
    gap = a_flat - b_flat
    steps = np.rint(gap)
    exact = (gap == steps) & (np.abs(steps) <= _RECURRENCE_LIMIT)
    out = np.empty_like(a_flat)
    if exact.any():
        out[exact] = _recurrence_ratio(a_flat[exact], b_flat[exact], steps[exact].astype(int))
    if (~exact).any():
        out[~exact] = np.exp(log_gamma(a_flat[~exact]) - log_gamma(b_flat[~exact]))
    if scalar:
        return float(out[0])
    return out.reshape(a_arr.shape)


def sphere_area(n: int) -> float:
    """omega_n = 2 pi^{(n+1)/2} / Gamma((n+1)/2), the area of the unit n-sphere (omega_0 = 2)."""
    if n < 0:
        raise DomainError("sphere dimension must be >= 0")
    half = 0.5 * (n + 1)
    return float(math.exp(math.log(2.0) + half * math.log(math.pi) - log_gamma(half)))


def gegenbauer_table(kmax: int, alpha: float, t: ArrayLike) -> np.ndarray:
    """Rows C_0^alpha(t) .. C_kmax^alpha(t), shape ``(kmax + 1,) + t.shape``."""
    if kmax < 0:
        raise DomainError("degree must be non-negative")
    if alpha <= -0.5:
        raise DomainError("gegenbauer requires alpha > -1/2")
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + 1e-12):
        raise DomainError("gegenbauer requires |t| <= 1")
    table = np.empty((kmax + 1,) + t.shape)
    table[0] = 1.0
    if kmax == 0:
        return table
    if alpha == 0.0:
        previous, current = np.ones_like(t), t.copy()
        table[1] = 2.0 * t
        for k in range(1, kmax):
            previous, current = current, 2.0 * t * current - previous
            table[k + 1] = 2.0 * current / (k + 1)
        return table
    table[1] = 2.0 * alpha * t
    for k in range(1, kmax):
        table[k + 1] = (
            2.0 * t * (k + alpha) * table[k] - (k + 2.0 * alpha - 1.0) * table[k - 1]
        ) / (k + 1)
    return table


def gegenbauer(k: int, alpha: float, t: ArrayLike) -> ArrayLike:
    """Value of C_k^alpha(t)."""
    values = gegenbauer_table(k, alpha, t)[k]
    if np.ndim(values) == 0:
        return float(values)
    return values


def _gegenbauer_pair(m: int, lam: float, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    previous = np.ones_like(x)
    current = 2.0 * lam * x
    for k in range(1, m):
        previous, current = current, (
            2.0 * x * (k + lam) * current - (k + 2.0 * lam - 1.0) * previous
        ) / (k + 1)
    return current, previous


def _jacobi_matrix(m: int, a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
    j = np.arange(m, dtype=float)
    s = 2.0 * j + a + b
    diag = np.empty(m)
    diag[0] = (b - a) / (a + b + 2.0)
    if m > 1:
        diag[1:] = (b * b - a * a) / (s[1:] * (s[1:] + 2.0))
    jj = j[1:]
    ss = s[1:]
    off = np.sqrt(4.0 * jj * (jj + a) * (jj + b) * (jj + a + b) / (ss**2 * (ss + 1.0) * (ss - 1.0)))
    return diag, off


def jacobi_rule(m: int, a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
    """Golub-Welsch rule for the weight (1-t)^a (1+t)^b on (-1, 1), a, b > -1."""
    if m < 1:
        raise DomainError("rule size must be >= 1")
    if a <= -1.0 or b <= -1.0:
        raise DomainError("Jacobi exponents must exceed -1")
    total = math.exp(
        (a + b + 1.0) * math.log(2.0)
        + log_gamma(a + 1.0)
        + log_gamma(b + 1.0)
        - log_gamma(a + b + 2.0)
    )
    if m == 1:
        return np.array([(b - a) / (a + b + 2.0)]), np.array([total])
    diag, off = _jacobi_matrix(m, a, b)
    nodes, vectors = eigh_tridiagonal(diag, off)
    return nodes, total * vectors[0] ** 2


def jacobi_total(alpha: float) -> float:
    """Integral of (1 - t^2)^alpha over (-1, 1)."""
    return float(math.sqrt(math.pi) * math.exp(log_gamma(alpha + 1.0) - log_gamma(alpha + 1.5)))


def _freeze(rule_nodes: np.ndarray, rule_weights: np.ndarray, alpha: float) -> QuadratureRule1D:
    rule_nodes.setflags(write=False)
    rule_weights.setflags(write=False)
    return QuadratureRule1D(nodes=rule_nodes, weights=rule_weights, alpha=alpha)


@lru_cache(maxsize=128)
def gauss_jacobi(m: int, alpha: float = 0.0) -> QuadratureRule1D:
    """m-point symmetric Gauss rule for (1 - t^2)^alpha, alpha >= 0.

    Initial nodes are the eigenvalues of the Jacobi matrix. Newton steps on the
    Gegenbauer recurrence (lambda = alpha + 1/2) then polish them to 1e-14, and the
    weights come from the closed form in terms of C_m'.
    """
    if m < 1 or int(m) != m:
        raise DomainError("gauss_jacobi requires a positive integer size")
    if alpha < 0.0:
        raise DomainError("gauss_jacobi requires alpha >= 0")
    m = int(m)
    alpha = float(alpha)
    if m == 1:
        return _freeze(np.zeros(1), np.array([jacobi_total(alpha)]), alpha)

    lam = alpha + 0.5
    diag, off = _jacobi_matrix(m, alpha, alpha)
    x = eigh_tridiagonal(diag, off, eigvals_only=True)
    for step in range(_NEWTON_MAX_STEPS):
        c_m, c_prev = _gegenbauer_pair(m, lam, x)
        derivative = (-m * x * c_m + (m + 2.0 * lam - 1.0) * c_prev) / (1.0 - x * x)
        dx = c_m / derivative
        x = x - dx
        if np.max(np.abs(dx)) <= _NEWTON_TOLERANCE:
            break
    else:
        logger.debug("gauss_jacobi(%d, %g): Newton stopped at the step cap", m, alpha)

    c_m, c_prev = _gegenbauer_pair(m, lam, x)
    derivative = (-m * x * c_m + (m + 2.0 * lam - 1.0) * c_prev) / (1.0 - x * x)
    log_scale = (
        (2.0 - 2.0 * lam) * math.log(2.0)
        + math.log(math.pi)
        + log_gamma(m + 2.0 * lam)
        - 2.0 * log_gamma(lam)
        - log_gamma(m + 1.0)
    )
    weights = math.exp(log_scale) / ((1.0 - x * x) * derivative**2)
    nodes = 0.5 * (x - x[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return _freeze(nodes, weights, alpha)


@lru_cache(maxsize=32)
def gauss_chebyshev(m: int) -> QuadratureRule1D:
    """Closed-form Gauss rule for (1 - t^2)^(-1/2); used for circle averages."""
    if m < 1:
        raise DomainError("rule size must be >= 1")
    j = np.arange(m, 0, -1, dtype=float)
    nodes = np.cos((2.0 * j - 1.0) * math.pi / (2.0 * m))
    return _freeze(nodes, np.full(m, math.pi / m), -0.5)


__all__ = [
    "QuadratureRule1D",
    "gamma_ratio",
    "gauss_chebyshev",
    "gauss_jacobi",
    "gegenbauer",
    "gegenbauer_table",
    "jacobi_rule",
    "jacobi_total",
    "log_gamma",
    "sphere_area",
]
