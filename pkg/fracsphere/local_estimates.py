"""Nystrom discretization of u = integral_{B_3} V u |x - y|^{2 sigma - n} dy + h on balls in R^1 and R^2."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve
from scipy.spatial.distance import pdist, squareform

from .errors import DomainError, IllConditionedSystem
from .schemas import EnsembleSpec
from .specfun import sphere_area

logger = logging.getLogger(__name__)

OUTER_RADIUS = 3.0
RCOND_THRESHOLD = 1e-12
SPECTRAL_CAP = 0.9

_SUBSAMPLES = 8
_POWER_ITERATIONS = 500
_POWER_RTOL = 1e-12
_FEATURES = 32
_BANDWIDTH = 1.5


@dataclass(frozen=True, eq=False)
class BallGrid:
    """Uniform Cartesian cells of side ``2 R / cells`` intersected with B_R.

    Each cell is sampled on an ``8^n`` sub-lattice; the cell keeps the measure of
    its inside samples and the node sits at their centroid.
    """

    n: int
    cells: int
    nodes: np.ndarray
    measures: np.ndarray
    radius: float = OUTER_RADIUS

    @property
    def size(self) -> int:
        return int(self.measures.size)

    @property
    def spacing(self) -> float:
        return 2.0 * self.radius / self.cells

    @cached_property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=1)

    def inside(self, radius: float) -> np.ndarray:
        return self.norms <= radius + 1e-12

    @property
    def ball_measure(self) -> float:
        return sphere_area(self.n - 1) * self.radius**self.n / self.n


def ball_grid(n: int, cells: int, radius: float = OUTER_RADIUS) -> BallGrid:
    if n not in (1, 2):
        raise DomainError(f"ball grids are available for n in (1, 2), not {n}")
    if cells < 2:
        raise DomainError("need at least 2 cells per diameter")
    h = 2.0 * radius / cells
    edges = -radius + h * np.arange(cells)
    offsets = (np.arange(_SUBSAMPLES) + 0.5) * (h / _SUBSAMPLES)
    corners = np.stack(np.meshgrid(*([edges] * n), indexing="ij"), axis=-1).reshape(-1, n)
    sub = np.stack(np.meshgrid(*([offsets] * n), indexing="ij"), axis=-1).reshape(-1, n)
    samples = corners[:, None, :] + sub[None, :, :]
    mask = np.sum(samples * samples, axis=-1) <= radius * radius
    counts = mask.sum(axis=1)
    keep = counts > 0
    centroids = (samples * mask[..., None]).sum(axis=1)[keep] / counts[keep, None]
    measures = counts[keep] * (h / _SUBSAMPLES) ** n
    centroids.setflags(write=False)
    measures.setflags(write=False)
    grid = BallGrid(n=n, cells=cells, nodes=centroids, measures=measures, radius=radius)
    logger.debug("ball grid n=%d cells=%d nodes=%d measure=%.6g", n, cells, grid.size, measures.sum())
    return grid


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """A = k diag(measures) with k symmetric; A_ij measure_i = A_ji measure_j."""

    grid: BallGrid
    sigma: float
    kernel: np.ndarray

    @cached_property
    def matrix(self) -> np.ndarray:
        matrix = self.kernel * self.grid.measures[None, :]
        matrix.setflags(write=False)
        return matrix

    @property
    def size(self) -> int:
        return self.grid.size

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.matrix @ f


def _check_sigma(n: int, sigma: float) -> None:
    if not (0.0 < sigma < 0.5 * n):
        raise DomainError(f"sigma must lie in (0, {0.5 * n}) for n={n}, got {sigma}")


def assemble_kernel(grid: BallGrid, sigma: float) -> KernelMatrix:
    """Midpoint rule off the diagonal; the diagonal integrates |y|^{2 sigma - n} over the equal-measure ball."""
    n = grid.n
    _check_sigma(n, sigma)
    distances = squareform(pdist(grid.nodes))
    exponent = 2.0 * sigma - n
    with np.errstate(divide="ignore"):
        kernel = distances**exponent
    shell = sphere_area(n - 1)
    r0 = (n * grid.measures / shell) ** (1.0 / n)
    self_integral = shell * r0 ** (2.0 * sigma) / (2.0 * sigma)
    kernel[np.diag_indices_from(kernel)] = self_integral / grid.measures
    kernel.setflags(write=False)
    return KernelMatrix(grid=grid, sigma=sigma, kernel=kernel)


def spectral_radius(A: KernelMatrix, V: np.ndarray) -> float:
    """Perron root of A diag(V) by power iteration on its symmetric similar form."""
    V = np.asarray(V, dtype=float)
    if np.any(V < 0.0):
        raise DomainError("potential must be non-negative")
    root = np.sqrt(A.grid.measures * V)
    symmetric = root[:, None] * A.kernel * root[None, :]
    x = np.full(A.size, 1.0 / math.sqrt(A.size))
    estimate = 0.0
    for _ in range(_POWER_ITERATIONS):
        y = symmetric @ x
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            return 0.0
        x = y / norm
        previous, estimate = estimate, float(x @ (symmetric @ x))
        if abs(estimate - previous) <= _POWER_RTOL * abs(estimate):
            break
    return estimate


def solve_linear_ie(A: KernelMatrix, V: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Solve (I - A diag(V)) u = h by LU, refusing near-singular systems."""
    V = np.asarray(V, dtype=float)
    h = np.asarray(h, dtype=float)
    if V.shape != (A.size,) or h.shape != (A.size,):
        raise DomainError("V and h must be sampled on the kernel's nodes")
    system = np.eye(A.size) - A.matrix * V[None, :]
    anorm = float(np.max(np.sum(np.abs(system), axis=0)))
    lu, pivots = lu_factor(system)
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond < RCOND_THRESHOLD:
        raise IllConditionedSystem(f"Nystrom system is near singular (rcond={rcond:.3e})", rcond=float(rcond))
    return lu_solve((lu, pivots), h)


def neumann_series(A: KernelMatrix, V: np.ndarray, h: np.ndarray, terms: int = 50) -> np.ndarray:
    """sum_{k < terms} (A diag(V))^k h."""
    h = np.asarray(h, dtype=float)
    total = h.copy()
    term = h.copy()
    for _ in range(terms - 1):
        term = A.matrix @ (V * term)
        total += term
    return total


# ---------------------------------------------------------------------------
# Estimates


def harnack_ratio(u: np.ndarray, grid: BallGrid) -> float:
    """max u / min u over the nodes of the closed unit ball."""
    values = np.asarray(u, dtype=float)[grid.inside(1.0)]
    if values.size == 0:
        raise DomainError("no nodes inside the unit ball")
    if np.any(values <= 0.0):
        raise DomainError("Harnack ratio needs u > 0 on the unit ball")
    return float(values.max() / values.min())


def holder_seminorm(u: np.ndarray, grid: BallGrid, alpha: float, radius: float = 1.0) -> float:
    if not 0.0 < alpha < 1.0:
        raise DomainError("Holder exponent must lie in (0, 1)")
    mask = grid.inside(radius)
    values = np.asarray(u, dtype=float)[mask]
    if values.size < 2:
        return 0.0
    distances = pdist(grid.nodes[mask])
    jumps = pdist(values[:, None])
    return float(np.max(jumps / distances**alpha))


def lp_norm(f: np.ndarray, grid: BallGrid, p: float, radius: Optional[float] = None) -> float:
    mask = grid.inside(grid.radius if radius is None else radius)
    values = np.abs(np.asarray(f, dtype=float)[mask])
    return float(np.dot(grid.measures[mask], values**p) ** (1.0 / p))


def holder_norm(f: np.ndarray, grid: BallGrid, alpha: float, radius: Optional[float] = None) -> float:
    radius = grid.radius if radius is None else radius
    values = np.asarray(f, dtype=float)[grid.inside(radius)]
    return float(np.max(np.abs(values))) + holder_seminorm(f, grid, alpha, radius)


def brezis_kato_exponent(n: int, sigma: float) -> float:
    """n / (2 sigma), the Lebesgue exponent in which V must be small."""
    return n / (2.0 * sigma)


def _exponents(n: int, sigma: float) -> tuple[float, float]:
    return 2.0 * n / (n - 2.0 * sigma), 4.0 * n / (n - 2.0 * sigma)


def brezis_kato_ratio(u: np.ndarray, h: np.ndarray, grid: BallGrid, sigma: float) -> float:
    """||u||_{L^nu(B_1)} / (||u||_{L^r(B_3)} + ||h||_{L^nu(B_2)}) with r = 2n/(n-2 sigma), nu = 2r."""
    r, nu = _exponents(grid.n, sigma)
    return lp_norm(u, grid, nu, 1.0) / (lp_norm(u, grid, r) + lp_norm(h, grid, nu, 2.0))


def holder_ratio(u: np.ndarray, h: np.ndarray, grid: BallGrid, sigma: float, alpha: float) -> float:
    """[u]_{C^alpha(B_1)} / (||u||_{L^r(B_3)} + ||h||_{C^alpha(B_3)})."""
    r, _ = _exponents(grid.n, sigma)
    return holder_seminorm(u, grid, alpha) / (lp_norm(u, grid, r) + holder_norm(h, grid, alpha))


# ---------------------------------------------------------------------------
# Ensembles


def random_potential(
    A: KernelMatrix,
    seed: int,
    *,
    norm: float,
    lp_exponent: float,
) -> np.ndarray:
    """Smoothed squared random-feature field with ||V||_{L^p(B_3)} = norm.

    The feature frequencies and phases depend only on the seed, so one seed
    discretizes the same field at every resolution.
    """
    grid = A.grid
    rng = np.random.default_rng(seed)
    frequencies = _BANDWIDTH * rng.standard_normal((_FEATURES, grid.n))
    phases = rng.uniform(0.0, 2.0 * math.pi, _FEATURES)
    amplitudes = rng.standard_normal(_FEATURES)
    field = math.sqrt(2.0 / _FEATURES) * np.cos(grid.nodes @ frequencies.T + phases) @ amplitudes
    smoothed = A.apply(field**2)
    scale = lp_norm(smoothed, grid, lp_exponent)
    if scale == 0.0:
        return np.zeros(grid.size)
    return smoothed * (norm / scale)


def forcing(grid: BallGrid, c0: float = 1.0) -> np.ndarray:
    """h = c0^{(x_1 + 1)/2}: positive, with max h = c0 min h over the unit ball."""
    if c0 < 1.0:
        raise DomainError("c0 must be at least 1")
    return c0 ** (0.5 * (grid.nodes[:, 0] + 1.0))


@dataclass(frozen=True)
class EnsembleRow:
    seed: int
    norm_V: float
    bk_norm_V: float
    bk_admissible: bool
    harnack_ratio: float
    holder_ratio: float
    bk_ratio: float
    grid_cells: int
    min_excess: float
    rescaled: bool = False
    bk_clamped: bool = False

    COLUMNS = (
        "seed",
        "norm_V",
        "bk_norm_V",
        "bk_admissible",
        "harnack_ratio",
        "holder_ratio",
        "bk_ratio",
        "grid_cells",
    )

    def as_row(self) -> List[float]:
        return [getattr(self, column) for column in self.COLUMNS]


def ensemble_member(A: KernelMatrix, spec: EnsembleSpec, seed: int) -> EnsembleRow:
    grid = A.grid
    p = spec.exponent()
    rng = np.random.default_rng([seed, 1])
    norm = spec.norm_bound * float(rng.uniform(0.5, 1.0))
    V = random_potential(A, seed, norm=norm, lp_exponent=p)
    bk_exponent = brezis_kato_exponent(grid.n, spec.sigma)
    bk_clamped = False
    if spec.enforce_bk:
        bk_norm = lp_norm(V, grid, bk_exponent)
        if bk_norm > spec.bk_bound:
            V = V * (spec.bk_bound / bk_norm)
            bk_clamped = True
            logger.debug("seed %d: ||V|| = %.4g scaled to the Brezis-Kato bound %.2g", seed, bk_norm, spec.bk_bound)
    rescaled = False
    radius = spectral_radius(A, V)
    if radius >= SPECTRAL_CAP:
        V = V * (SPECTRAL_CAP / radius)
        rescaled = True
        logger.warning("seed %d: spectral radius %.4g rescaled to %.2g", seed, radius, SPECTRAL_CAP)
    h = forcing(grid, spec.c0)
    u = solve_linear_ie(A, V, h)
    excess = float(np.min(u - h))
    if excess < -1e-12:
        logger.warning("seed %d: u - h reaches %.3e", seed, excess)
    bk_norm = lp_norm(V, grid, bk_exponent)
    admissible = bk_norm <= spec.bk_bound * (1.0 + 1e-12)
    if not admissible:
        logger.info("seed %d: ||V|| = %.4g exceeds the Brezis-Kato bound %.2g", seed, bk_norm, spec.bk_bound)
    return EnsembleRow(
        seed=seed,
        norm_V=lp_norm(V, grid, p),
        bk_norm_V=bk_norm,
        bk_admissible=admissible,
        harnack_ratio=harnack_ratio(u, grid),
        holder_ratio=holder_ratio(u, h, grid, spec.sigma, spec.alpha),
        bk_ratio=brezis_kato_ratio(u, h, grid, spec.sigma),
        grid_cells=grid.cells,
        min_excess=excess,
        rescaled=rescaled,
        bk_clamped=bk_clamped,
    )


def run_ensemble(spec: EnsembleSpec, cells: int, seeds: Optional[Sequence[int]] = None) -> List[EnsembleRow]:
    seeds = range(spec.samples) if seeds is None else seeds
    A = assemble_kernel(ball_grid(spec.n, cells), spec.sigma)
    return [ensemble_member(A, spec, int(seed)) for seed in seeds]


__all__ = [
    "BallGrid",
    "EnsembleRow",
    "KernelMatrix",
    "assemble_kernel",
    "ball_grid",
    "brezis_kato_exponent",
    "brezis_kato_ratio",
    "ensemble_member",
    "forcing",
    "harnack_ratio",
    "holder_norm",
    "holder_ratio",
    "holder_seminorm",
    "lp_norm",
    "neumann_series",
    "random_potential",
    "run_ensemble",
    "solve_linear_ie",
    "spectral_radius",
]
