"""Subcritical minimization of Q_p, continuation toward the critical exponent, blow-up reports."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize

from .conformal import (
    ConformalSpectrum,
    MobiusMap,
    PlanarField,
    RadialField,
    SphereField,
    conformal_factor,
    mobius_apply,
    planar_bubble_constant,
    pull_to_plane,
    sample_field,
    spectrum_for,
    t_phi_transform,
)
from .errors import ContinuationError, DomainError, PositivityError, SolverDivergence, SolverError
from .functionals import (
    KProfile,
    QuotientFunctional,
    antipodal_threshold,
    hs_norm,
    kazdan_warner_vector,
)
from .schemas import SolverConfig
from .sphere import (
    Grid,
    GridField,
    Mode,
    SpectralField,
    analyze,
    evaluate,
    north_pole,
    south_pole,
)

logger = logging.getLogger(__name__)

_CLAMP_FLOOR = 1e-12
_ACCEPT_SLACK = 1e-14
_PROFILE_SAMPLES = 201
_CRITPT_SAMPLES = 400


@dataclass(frozen=True)
class HistoryEntry:
    iteration: int
    value: float
    grad_norm: float
    max_v: float
    center: Tuple[float, ...]


@dataclass
class SolverState:
    """Iterate of a single minimization run.

    ``coefficients`` always satisfy ``integral K |v|^{p+1} = 1`` on the run's grid.
    """

    grid: Grid
    p: float
    coefficients: np.ndarray
    value: float = math.inf
    grad_norm: float = math.inf
    iterations: int = 0
    converged: bool = False
    clamps: int = 0
    halvings: int = 0
    history: List[HistoryEntry] = field(default_factory=list)

    @property
    def v(self) -> GridField:
        return GridField(self.grid, self.grid.basis.T @ self.coefficients)

    @property
    def spectral(self) -> SpectralField:
        return SpectralField(self.grid.geometry, self.coefficients.copy())

    def record(self) -> None:
        values = self.grid.basis.T @ self.coefficients
        index = int(np.argmax(values))
        self.history.append(
            HistoryEntry(
                iteration=self.iterations,
                value=self.value,
                grad_norm=self.grad_norm,
                max_v=float(values[index]),
                center=tuple(float(x) for x in self.grid.points[index]),
            )
        )


def _initial_coefficients(grid: Grid, seed: Optional[int], perturbation: float) -> np.ndarray:
    geometry = grid.geometry
    c = np.zeros(geometry.size)
    c[0] = math.sqrt(geometry.area)
    if seed is not None and perturbation > 0.0 and geometry.size > 1:
        rng = np.random.default_rng(seed)
        decay = 1.0 / (1.0 + geometry.degrees[1:].astype(float)) ** 2
        c[1:] = perturbation * c[0] * decay * rng.standard_normal(geometry.size - 1)
    return c


def _project(c: np.ndarray, grid: Grid, config: SolverConfig) -> np.ndarray:
    keep = np.ones(c.shape, dtype=bool)
    if config.symmetry == "antipodal":
        keep &= grid.geometry.degrees % 2 == 0
    if config.band_limit is not None:
        keep &= grid.geometry.degrees <= config.band_limit
    return np.where(keep, c, 0.0)


def _normalize(functional: QuotientFunctional, c: np.ndarray) -> np.ndarray:
    denominator = functional.denominator(c)
    if not denominator > 0.0:
        raise PositivityError("iterate has a vanishing constraint integral")
    return c * denominator ** (-1.0 / (functional.p + 1.0))


def _repair(state: SolverState, c: np.ndarray, config: SolverConfig) -> Optional[np.ndarray]:
    """Positive-at-every-node coefficients, or None when clamping cannot restore positivity."""
    values = state.grid.basis.T @ c
    if np.all(values > 0.0):
        return c
    if not np.any(values > 0.0):
        raise PositivityError("positivity repair found no positive node", state=state)
    state.clamps += 1
    logger.warning("clamping %d non-positive nodes at iteration %d", int(np.sum(values <= 0.0)), state.iterations)
    clamped = np.maximum(values, _CLAMP_FLOOR)
    repaired = _project(analyze(GridField(state.grid, clamped)).coefficients, state.grid, config)
    # analysis of the clamped values is not the identity on the oversampled grid
    if np.all(state.grid.basis.T @ repaired > 0.0):
        return repaired
    return None


def _descend(
    K: KProfile,
    config: SolverConfig,
    grid: Grid,
    sigma: float,
    p: float,
    initial: Optional[np.ndarray],
    seed: Optional[int],
) -> Tuple[GridField, float, SolverState]:
    if config.band_limit is not None and config.band_limit > grid.geometry.L:
        raise DomainError(f"band limit {config.band_limit} exceeds the grid degree cap {grid.geometry.L}")
    spectrum = spectrum_for(grid.n, sigma, grid.geometry.L)
    K_values = K.on(grid).values
    functional = QuotientFunctional(grid, spectrum, K_values, p)
    e = functional.multipliers

    c = _initial_coefficients(grid, seed, config.perturbation) if initial is None else np.array(initial, dtype=float)
    c = _project(c, grid, config)
    state = SolverState(grid=grid, p=p, coefficients=c)
    repaired = _repair(state, c, config)
    if repaired is None:
        raise PositivityError("initial iterate could not be made positive", state=state)
    c = _normalize(functional, repaired)
    state.coefficients = c

    while True:
        v = grid.basis.T @ c
        lam = functional.energy(c)
        magnitude = np.abs(v) ** p
        target = grid.basis @ (grid.weights * K_values * magnitude)
        residual = _project(e * c - lam * grid.basis @ (grid.weights * K_values * magnitude * np.sign(v)), grid, config)
        state.value = lam
        state.grad_norm = float(np.linalg.norm(residual))
        if state.grad_norm <= config.tolerance * lam:
            state.converged = True
            state.record()
            break
        if state.iterations >= config.max_iterations:
            state.record()
            raise SolverDivergence(
                f"gradient {state.grad_norm:.3e} above tolerance after {state.iterations} iterations (p={p})",
                state=state,
            )
        if state.iterations % config.log_every == 0:
            state.record()
            logger.debug(
                "iteration %d p=%.6g Q=%.17g residual=%.3e", state.iterations, p, lam, state.grad_norm
            )

        fixed_point = lam * target / e
        eta = config.eta
        for _ in range(config.max_halvings + 1):
            candidate = _repair(state, _project((1.0 - eta) * c + eta * fixed_point, grid, config), config)
            if candidate is not None:
                candidate = _normalize(functional, candidate)
                if functional.energy(candidate) <= lam * (1.0 + _ACCEPT_SLACK):
                    break
            eta *= 0.5
            state.halvings += 1
            logger.debug("iteration %d: halving step to %.3e", state.iterations, eta)
        else:
            state.record()
            raise SolverDivergence(
                f"line search failed after {config.max_halvings} halvings at iteration {state.iterations}",
                state=state,
            )
        c = candidate
        state.coefficients = c
        state.iterations += 1

    v_field = state.v
    if not np.all(v_field.values > 0.0):
        raise PositivityError("converged iterate is not positive", state=state)
    logger.debug("converged p=%.6g lam=%.17g in %d iterations", p, state.value, state.iterations)
    return v_field, state.value, state


def subcritical_minimize(
    K: KProfile,
    config: SolverConfig,
    grid: Grid,
    sigma: float,
    *,
    initial: Optional[np.ndarray] = None,
    seed: Optional[int] = None,
) -> Tuple[GridField, float, SolverState]:
    """Minimize Q_p over positive fields on ``grid`` for ``p = critical - tau``.

    Each step moves toward ``lam P_sigma^{-1}(K |v|^p)``, which is positivity
    improving, then renormalizes so that ``integral K v^{p+1} = 1``. The step
    length is halved until Q_p does not increase. Returns ``(v_p, lam_p, state)``.
    """
    if not config.tau > 0.0:
        raise DomainError("subcritical minimization needs tau > 0")
    return _descend(K, config, grid, sigma, config.exponent(grid.n, sigma), initial, seed)


def critical_residual(v: GridField, K: KProfile, spectrum: ConformalSpectrum) -> float:
    """||P_sigma v - lam K v^{p*}|| / lam at the critical exponent, lam = energy / constraint."""
    functional = QuotientFunctional(v.grid, spectrum, K.values(v.grid.points), spectrum.critical_exponent)
    residual, lam = functional.el_residual(analyze(v).coefficients)
    return residual / lam


# ---------------------------------------------------------------------------
# Blow-up diagnostics


@dataclass(frozen=True)
class BlowupReport:
    max_v: float
    center: Tuple[float, ...]
    tau: float
    profile_error: float
    wbar_critical_points: int
    tphi_error: float
    hs_norm: float
    blowup: bool
    center_method: str
    k: float
    lam: float
    trigger: str = ""


def _locate_center(v: SphereField, grid: Grid, method: str) -> Tuple[np.ndarray, float]:
    values = v.values if isinstance(v, GridField) else sample_field(v, grid.points)
    index = int(np.argmax(values))
    point = np.array(grid.points[index])
    if grid.geometry.mode is Mode.ZONAL:
        pole = north_pole(grid.n) if point[-1] >= 0.0 else south_pole(grid.n)
        if index not in (0, grid.size - 1):
            logger.warning("zonal maximum at t=%.6g snapped to the pole t=%+.0f", point[-1], pole[-1])
        if method == "grid":
            return pole, float(values[index])
        return pole, float(sample_field(v, pole[None, :])[0])
    if method == "grid":
        return point, float(values[index])
    sample = partial(evaluate, analyze(v)) if isinstance(v, GridField) else partial(sample_field, v)

    def negative(angles: np.ndarray) -> float:
        theta, phi = angles
        xi = np.array([[math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)]])
        return -float(sample(xi)[0])

    start = np.array([math.acos(np.clip(point[2], -1.0, 1.0)), math.atan2(point[1], point[0])])
    result = minimize(negative, start, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
    if -result.fun < values[index]:
        return point, float(values[index])
    theta, phi = result.x
    center = np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
    return center, float(-result.fun)


def _directions(n: int) -> np.ndarray:
    if n == 2:
        angles = 2.0 * math.pi * np.arange(64) / 64
        return np.column_stack([np.cos(angles), np.sin(angles)])
    if n == 3:
        nodes, _ = np.polynomial.legendre.leggauss(8)
        azimuth = 2.0 * math.pi * np.arange(16) / 16
        polar = np.repeat(nodes, azimuth.size)
        ring = np.sqrt(1.0 - polar**2)
        phi = np.tile(azimuth, nodes.size)
        return np.column_stack([ring * np.cos(phi), ring * np.sin(phi), polar])
    raise DomainError(f"angular averages of non-radial fields are available for n in (2, 3), not {n}")


def _direction_weights(n: int) -> np.ndarray:
    if n == 2:
        return np.full(64, 1.0 / 64)
    _, weights = np.polynomial.legendre.leggauss(8)
    return np.repeat(weights, 16) / (2.0 * 16)


def spherical_average_profile(
    u: Union[RadialField, PlanarField, Callable[[np.ndarray], np.ndarray]],
    center: Optional[Sequence[float]],
    radii: Sequence[float],
    *,
    p: float,
    sigma: float,
    n: Optional[int] = None,
    radial: Optional[bool] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """(ubar(r), wbar(r)) with ubar the average of u over |x - center| = r and wbar = r^{2 sigma/(p-1)} ubar.

    Radial inputs (a RadialField, or a zonal field centred at a pole) are sampled on a
    single ray; otherwise the circle (n = 2) or a product rule on S^2 (n = 3) is used.
    """
    radii = np.asarray(radii, dtype=float)
    if np.any(radii < 0.0):
        raise DomainError("radii must be non-negative")
    if isinstance(u, RadialField):
        ubar = np.asarray(u(radii), dtype=float)
    else:
        if n is None:
            n = u.n if isinstance(u, PlanarField) else None
        if n is None:
            raise DomainError("dimension n is required for a plain planar callable")
        if radial is None:
            radial = (
                isinstance(u, PlanarField)
                and isinstance(u.source, GridField)
                and u.source.grid.geometry.mode is Mode.ZONAL
            )
        origin = np.zeros(n) if center is None else np.asarray(center, dtype=float)
        if radial:
            ray = np.eye(n)[0]
            ubar = np.asarray(u(origin[None, :] + radii[:, None] * ray[None, :]), dtype=float)
        else:
            directions = _directions(n)
            weights = _direction_weights(n)
            samples = origin[None, None, :] + radii[:, None, None] * directions[None, :, :]
            values = np.asarray(u(samples.reshape(-1, n)), dtype=float).reshape(radii.size, -1)
            ubar = values @ weights
    wbar = radii ** (2.0 * sigma / (p - 1.0)) * ubar
    return ubar, wbar


def count_interior_critical_points(values: np.ndarray) -> int:
    """Strict sign changes of the forward differences of a sampled profile."""
    slope = np.diff(np.asarray(values, dtype=float))
    signs = np.sign(slope[slope != 0.0])
    return int(np.sum(signs[1:] != signs[:-1]))


@dataclass(frozen=True, eq=False)
class RescaledProfile:
    """U(m^{-(p-1)/(2 sigma)} y) / m for U the planar solution of u = integral K u^p |x-y|^{2 sigma-n}."""

    planar: PlanarField
    amplitude: float
    height: float
    p: float
    sigma: float

    @property
    def n(self) -> int:
        return self.planar.n

    @property
    def dilation(self) -> float:
        return self.height ** (-(self.p - 1.0) / (2.0 * self.sigma))

    def __call__(self, y: np.ndarray) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return self.amplitude * self.planar(self.dilation * y) / self.height


def _normalizing_map(center: np.ndarray, m: float, weight: float) -> MobiusMap:
    # T_phi sends the bubble of height m centred at ``center`` to the constant 1
    return MobiusMap(center, m ** (-1.0 / weight))


def conformal_lambda(
    v: SphereField, p: float, K: KProfile, sigma: float, grid: Grid, center: np.ndarray, m: float
) -> float:
    """lam in ``P_sigma v = lam K v^p``, read off the spread-out field ``w = T_phi v``.

    With ``J = |det d phi|`` the field w solves ``P_sigma w = lam (K o phi) J^{e (p* - p)/n} w^p``,
    so the energy / constraint ratio of w gives lam on grids that cannot resolve v itself.
    """
    spectrum = spectrum_for(grid.n, sigma, grid.geometry.L)
    phi = _normalizing_map(center, m, spectrum.weight)
    w = t_phi_transform(v, phi, sigma, grid)
    images = mobius_apply(phi, grid.points)
    excess = spectrum.weight * (spectrum.critical_exponent - p) / grid.n
    weights = K.values(images) * conformal_factor(phi, grid.points) ** excess
    functional = QuotientFunctional(grid, spectrum, weights, p)
    c = analyze(w).coefficients
    return functional.energy(c) / functional.denominator(c)


def blowup_report(
    v: SphereField,
    p: float,
    K: KProfile,
    sigma: float,
    config: Optional[SolverConfig] = None,
    *,
    grid: Optional[Grid] = None,
    lam: Optional[float] = None,
    profile_radius: Optional[float] = None,
    maxima: Sequence[float] = (),
) -> BlowupReport:
    """Concentration diagnostics for a positive solution of ``P_sigma v = lam K v^p``.

    ``v`` is a grid field or a point function on the sphere; a point function needs
    ``grid`` to locate its maximum and is otherwise sampled exactly, so concentrations
    finer than the grid are resolved. ``lam`` defaults to :func:`conformal_lambda`.
    ``maxima`` are the heights of earlier continuation steps: the report flags blow-up
    when max v exceeds the threshold, or when the heights grow superlinearly over three
    consecutive steps and the rescaled profile already matches the standard bubble.
    """
    config = config or SolverConfig()
    if isinstance(v, GridField):
        grid = v.grid
    elif grid is None:
        raise DomainError("a grid is required when v is given as a function")
    n = grid.n
    spectrum = spectrum_for(n, sigma, grid.geometry.L)
    center, m = _locate_center(v, grid, config.center_method)
    if lam is None:
        lam = conformal_lambda(v, p, K, sigma, grid, center, m)
    K_star = float(K.values(center[None, :])[0])
    k = planar_bubble_constant(n, sigma, K_star)
    weight = spectrum.weight

    # planar U = s H v(F_c x) solves U = integral K U^p |x - y|^{2 sigma - n}
    s = (lam * spectrum.riesz_constant) ** (1.0 / (p - 1.0))
    planar = pull_to_plane(v, sigma, center)
    height = s * (2.0**weight) * m
    profile = RescaledProfile(planar, s, height, p, sigma)
    R = config.profile_radius if profile_radius is None else profile_radius
    radii = np.linspace(0.0, R, _PROFILE_SAMPLES)
    reference = (1.0 + k * radii**2) ** (-weight)
    radial = grid.geometry.mode is Mode.ZONAL
    if radial:
        ubar, _ = spherical_average_profile(profile, None, radii, p=p, sigma=sigma, n=n, radial=True)
        profile_error = float(np.max(np.abs(ubar - reference)))
    else:
        directions = _directions(n)
        samples = (radii[:, None, None] * directions[None, :, :]).reshape(-1, n)
        values = profile(samples).reshape(radii.size, -1)
        profile_error = float(np.max(np.abs(values - reference[:, None])))

    crit_radii = np.linspace(0.0, config.rho, _CRITPT_SAMPLES + 1)[1:]
    _, wbar = spherical_average_profile(profile, None, crit_radii, p=p, sigma=sigma, n=n, radial=radial)
    critical_points = count_interior_critical_points(wbar)

    scale = (lam * K_star / spectrum.p_sigma_one) ** (1.0 / (p - 1.0))
    transformed = t_phi_transform(v, _normalizing_map(center, scale * m, weight), sigma, grid)
    tphi_error = float(np.max(np.abs(scale * transformed.values - 1.0)))

    sampled = v if isinstance(v, GridField) else GridField(grid, sample_field(v, grid.points))
    trigger = ""
    if m > config.blowup_threshold:
        trigger = f"max v exceeded {config.blowup_threshold}"
    elif (
        superlinear_run([*maxima, m], config.growth_threshold) >= 3
        and profile_error <= config.profile_tolerance
        and critical_points == 1
    ):
        trigger = "max v grew superlinearly over three consecutive steps with a bubble profile"
    report = BlowupReport(
        max_v=m,
        center=tuple(float(x) for x in center),
        tau=spectrum.critical_exponent - p,
        profile_error=profile_error,
        wbar_critical_points=critical_points,
        tphi_error=tphi_error,
        hs_norm=hs_norm(analyze(sampled), sigma),
        blowup=bool(trigger),
        center_method=config.center_method,
        k=k,
        lam=float(lam),
        trigger=trigger,
    )
    if not report.blowup:
        logger.debug("max v = %.6g below threshold %.6g: no blow-up", m, config.blowup_threshold)
    return report


def rescaled_profile_table(
    v: GridField, p: float, K: KProfile, sigma: float, config: SolverConfig, *, lam: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(r, ubar, wbar) of the rescaled planar profile on [0, profile_radius]."""
    spectrum = spectrum_for(v.grid.n, sigma, v.grid.geometry.L)
    center, m = _locate_center(v, v.grid, config.center_method)
    s = (lam * spectrum.riesz_constant) ** (1.0 / (p - 1.0))
    profile = RescaledProfile(pull_to_plane(v, sigma, center), s, s * 2.0**spectrum.weight * m, p, sigma)
    radii = np.linspace(0.0, config.profile_radius, _PROFILE_SAMPLES)
    ubar, wbar = spherical_average_profile(
        profile, None, radii, p=p, sigma=sigma, n=v.grid.n, radial=v.grid.geometry.mode is Mode.ZONAL
    )
    return radii, ubar, wbar


# ---------------------------------------------------------------------------
# Continuation


@dataclass(frozen=True)
class TrajectoryRow:
    tau: float
    iterations: int
    lambda_p: float
    max_v: float
    grad_norm: float
    hs_norm: float
    kw_residual_max: float
    profile_error: float
    tphi_error: float
    wbar_critpts: int

    COLUMNS = (
        "tau",
        "iterations",
        "lambda_p",
        "max_v",
        "grad_norm",
        "hs_norm",
        "kw_residual_max",
        "profile_error",
        "tphi_error",
        "wbar_critpts",
    )

    def as_row(self) -> List[Union[float, int]]:
        return [getattr(self, column) for column in self.COLUMNS]


@dataclass
class ContinuationResult:
    rows: List[TrajectoryRow]
    verdict: str
    report: Optional[BlowupReport]
    profile: Tuple[np.ndarray, np.ndarray, np.ndarray]
    final: GridField
    critical_residual: float
    lambda_monotone: bool
    antipodal_threshold: Optional[float]
    below_threshold: Optional[bool]
    reason: str = ""


def _kw_relative(v: GridField, K: KProfile, sigma: float) -> float:
    vector = np.abs(kazdan_warner_vector(v, K, sigma))
    gradient_scale = K.sup_gradient(v.grid)
    if gradient_scale == 0.0:
        return float(np.max(vector))
    power = 2.0 * v.grid.n / (v.grid.n - 2.0 * sigma)
    mass = float(np.dot(v.grid.weights, np.abs(v.values) ** power))
    return float(np.max(vector)) / (gradient_scale * mass)


def superlinear_run(max_values: Sequence[float], growth: float) -> int:
    """Length of the trailing run of steps where the increase of max v grows by more than ``growth``."""
    increments = np.diff(np.asarray(max_values, dtype=float))
    run = 0
    for previous, current in zip(increments[:-1], increments[1:]):
        if previous > 0.0 and current > (1.0 + growth) * previous:
            run += 1
        else:
            run = 0
    return run


def continuation_to_critical(
    K: KProfile,
    taus: Sequence[float],
    config: SolverConfig,
    grid: Grid,
    sigma: float,
    *,
    seed: Optional[int] = 0,
) -> ContinuationResult:
    """Warm-started minimization along a decreasing tau schedule.

    The verdict is ``blowup`` as soon as a step's :class:`BlowupReport` flags blow-up,
    ``converged`` when the final iterate meets the critical residual tolerance, and ``undetermined`` otherwise.
    """
    taus = [float(t) for t in taus]
    if not taus or any(b >= a for a, b in zip(taus, taus[1:])) or taus[-1] < 0.0:
        raise DomainError("tau schedule must be strictly decreasing with tau_min >= 0")
    n = grid.n
    spectrum = spectrum_for(n, sigma, grid.geometry.L)
    rows: List[TrajectoryRow] = []
    maxima: List[float] = []
    coefficients: Optional[np.ndarray] = None
    v: Optional[GridField] = None
    report: Optional[BlowupReport] = None
    lam = math.nan
    p = spectrum.critical_exponent
    verdict = "undetermined"
    reason = ""

    for tau in taus:
        step = config.model_copy(update={"tau": tau})
        p = step.exponent(n, sigma)
        try:
            # tau = 0 closes the schedule with the same iteration at the critical exponent
            v, lam, state = _descend(K, step, grid, sigma, p, coefficients, seed if coefficients is None else None)
        except SolverError as exc:
            raise ContinuationError(f"minimization failed at tau={tau}: {exc}", trajectory=rows, tau=tau) from exc
        coefficients = state.coefficients
        report = blowup_report(v, p, K, sigma, step, lam=lam, maxima=maxima)
        row = TrajectoryRow(
            tau=tau,
            iterations=state.iterations,
            lambda_p=lam,
            max_v=report.max_v,
            grad_norm=state.grad_norm,
            hs_norm=report.hs_norm,
            kw_residual_max=_kw_relative(v, K, sigma),
            profile_error=report.profile_error,
            tphi_error=report.tphi_error,
            wbar_critpts=report.wbar_critical_points,
        )
        rows.append(row)
        maxima.append(report.max_v)
        logger.info("tau=%.6g lam=%.17g max v=%.6g iterations=%d", tau, lam, report.max_v, state.iterations)
        if report.blowup:
            verdict, reason = "blowup", report.trigger
            break

    residual = critical_residual(v, K, spectrum)
    if verdict != "blowup":
        if residual <= config.critical_tolerance:
            verdict, reason = "converged", f"critical residual {residual:.3e} within tolerance"
        else:
            reason = f"critical residual {residual:.3e} above tolerance without blow-up"
    lambdas = [row.lambda_p for row in rows]
    # compare on the volume-averaged measure, where the constant family is flat in p
    critical = spectrum.critical_exponent
    averaged = [
        row.lambda_p * grid.geometry.area ** (-(critical - row.tau - 1.0) / (critical - row.tau + 1.0)) for row in rows
    ]
    threshold: Optional[float] = None
    below: Optional[bool] = None
    if config.symmetry == "antipodal":
        threshold = antipodal_threshold(K, sigma)
        below = bool(lambdas[-1] < threshold)
    profile = rescaled_profile_table(v, p, K, sigma, config, lam=lam)
    logger.info("continuation verdict: %s (%s)", verdict, reason)
    return ContinuationResult(
        rows=rows,
        verdict=verdict,
        report=report,
        profile=profile,
        final=v,
        critical_residual=residual,
        lambda_monotone=bool(averaged[-1] <= averaged[0] + 1e-3),
        antipodal_threshold=threshold,
        below_threshold=below,
        reason=reason,
    )


__all__ = [
    "BlowupReport",
    "ContinuationResult",
    "HistoryEntry",
    "RescaledProfile",
    "SolverState",
    "TrajectoryRow",
    "blowup_report",
    "conformal_lambda",
    "continuation_to_critical",
    "count_interior_critical_points",
    "critical_residual",
    "rescaled_profile_table",
    "spherical_average_profile",
    "subcritical_minimize",
    "superlinear_run",
]
