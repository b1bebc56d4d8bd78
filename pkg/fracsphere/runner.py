"""Subcommand execution: builds the numerical pieces, fans work out, writes reports."""

from __future__ import annotations

import asyncio
import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Awaitable, Callable, Dict, List, Optional, Sequence, TypeVar

import numpy as np
from scipy.integrate import quad
from scipy.special import poch

from .config import Settings
from .conformal import (
    MobiusMap,
    SphereBubble,
    bubble_plane,
    riesz_direct,
    sharp_constant,
    spectrum_for,
    t_phi_transform,
    unit_bubble_height,
)
from .errors import SolverError
from .functionals import (
    KProfile,
    QuotientFunctional,
    expansion_constant_A,
    fit_expansion_slope,
    index_count_check,
    kazdan_warner,
    kazdan_warner_vector,
    pohozaev_terms,
    sobolev_quotient,
    two_bubble_ratio,
)
from .local_estimates import EnsembleRow, assemble_kernel, ball_grid, ensemble_member
from .schemas import ExperimentConfig, SolverConfig
from .solver import BlowupReport, TrajectoryRow, blowup_report, continuation_to_critical, subcritical_minimize
from .specfun import sphere_area
from .sphere import (
    Geometry,
    GridField,
    Mode,
    SpectralField,
    analyze,
    funk_hecke_multiplier,
    make_grid,
    north_pole,
    synthesize,
)
from .storage import ReportStore

logger = logging.getLogger(__name__)

T = TypeVar("T")

EXIT_OK = 0
EXIT_FAILED = 1

_VERIFY_L = 64
_RANDOM_FIELDS = 200
_GREEN_DEGREES = 8


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    reference: float
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tolerance)

    COLUMNS = ("name", "value", "reference", "error", "tolerance", "passed")

    def as_row(self) -> List[Any]:
        return [self.name, self.value, self.reference, self.error, self.tolerance, self.passed]


def _relative(value: float, reference: float) -> float:
    return abs(value - reference) / max(abs(reference), 1e-300)


# ---------------------------------------------------------------------------
# Identity suite


def check_eigenvalues(n: int, sigma: float) -> Check:
    spectrum = spectrum_for(n, sigma, 32)
    k = np.arange(33, dtype=float)
    reference = poch(k + 0.5 * n - sigma, 2.0 * sigma)
    errors = np.abs(spectrum.eigenvalues - reference) / np.abs(reference)
    worst = int(np.argmax(errors))
    return Check("eigenvalues", float(spectrum.eigenvalues[worst]), float(reference[worst]), float(errors[worst]), 1e-12)


def check_constant_quotient(n: int, sigma: float) -> Check:
    geometry = Geometry(n, Mode.ZONAL, 4)
    grid = make_grid(geometry)
    spectrum = spectrum_for(n, sigma, geometry.L)
    value = sobolev_quotient(GridField(grid, np.ones(grid.size)), KProfile.constant(1.0, n), spectrum.critical_exponent, spectrum)
    reference = sharp_constant(n, sigma)
    return Check("sharp_constant_v1", value, reference, _relative(value, reference), 1e-10)


def check_bubble_quotient(n: int, sigma: float) -> Check:
    geometry = Geometry(n, Mode.ZONAL, _VERIFY_L)
    grid = make_grid(geometry)
    spectrum = spectrum_for(n, sigma, geometry.L)
    bubble = SphereBubble(north_pole(n), 2.0, n, sigma).on(grid)
    value = sobolev_quotient(bubble, KProfile.constant(1.0, n), spectrum.critical_exponent, spectrum)
    reference = sharp_constant(n, sigma)
    return Check("sharp_constant_bubble", value, reference, _relative(value, reference), 1e-6)


def check_random_quotients(n: int, sigma: float, seed: int) -> Check:
    geometry = Geometry(n, Mode.ZONAL, 8)
    grid = make_grid(geometry, 8 * (geometry.L + 1))
    spectrum = spectrum_for(n, sigma, geometry.L)
    p = spectrum.critical_exponent
    functional = QuotientFunctional(grid, spectrum, np.ones(grid.size), p)
    rng = np.random.default_rng(seed)
    decay = 1.0 / (1.0 + geometry.degrees.astype(float)) ** 2
    lowest = math.inf
    for _ in range(_RANDOM_FIELDS):
        c = rng.standard_normal(geometry.size) * decay
        c[0] += 3.0
        lowest = min(lowest, functional.value(c))
    reference = sharp_constant(n, sigma)
    deficit = max(0.0, reference - lowest) / reference
    return Check("sharp_inequality_random", lowest, reference, deficit, 1e-8)


def _spectral_residual(n: int, sigma: float, scale: float, L: int) -> float:
    geometry = Geometry(n, Mode.ZONAL, L)
    grid = make_grid(geometry, 4 * (L + 1))
    spectrum = spectrum_for(n, sigma, L)
    truncated = synthesize(analyze(SphereBubble(north_pole(n), scale, n, sigma).on(grid)), grid)
    functional = QuotientFunctional(grid, spectrum, np.ones(grid.size), spectrum.critical_exponent)
    residual, lam = functional.el_residual(analyze(truncated).coefficients)
    return residual / lam


def check_constant_residual(n: int, sigma: float) -> Check:
    geometry = Geometry(n, Mode.ZONAL, 8)
    grid = make_grid(geometry)
    spectrum = spectrum_for(n, sigma, geometry.L)
    functional = QuotientFunctional(grid, spectrum, np.ones(grid.size), spectrum.critical_exponent)
    residual, lam = functional.el_residual(analyze(GridField(grid, np.ones(grid.size))).coefficients)
    return Check("constant_residual", residual / lam, 0.0, residual / lam, 1e-12)


def check_bubble_residual(n: int, sigma: float) -> Check:
    coarse = _spectral_residual(n, sigma, 3.0, 16)
    fine = _spectral_residual(n, sigma, 3.0, 32)
    # passes when the residual drops at least fourfold
    ratio = fine / max(coarse, 1e-300)
    return Check("bubble_residual_ratio", fine, coarse, ratio, 0.25)


def check_green_function(n: int, sigma: float) -> Check:
    geometry = Geometry(n, Mode.ZONAL, _GREEN_DEGREES)
    grid = make_grid(geometry)
    spectrum = spectrum_for(n, sigma, geometry.L)
    worst, worst_value, worst_reference = 0.0, 0.0, 0.0
    for k in range(_GREEN_DEGREES + 1):
        coefficients = np.zeros(geometry.size)
        coefficients[k] = 1.0
        harmonic = synthesize(SpectralField(geometry, coefficients), grid)
        potential = riesz_direct(harmonic, spectrum)
        value = analyze(potential).coefficients[k]
        reference = 1.0 / spectrum.eigenvalues[k]
        error = _relative(value, reference)
        if error >= worst:
            worst, worst_value, worst_reference = error, value, reference
    return Check("green_function", float(worst_value), float(worst_reference), worst, 1e-4)


def check_funk_hecke(n: int, sigma: float) -> Check:
    geometry = Geometry(n, Mode.ZONAL, _GREEN_DEGREES)
    spectrum = spectrum_for(n, sigma, geometry.L)
    worst, worst_value, worst_reference = 0.0, 0.0, 0.0
    for k in range(_GREEN_DEGREES + 1):
        value = funk_hecke_multiplier(
            spectrum.riesz_kernel,
            k,
            geometry,
            gap_kernel=spectrum.riesz_gap_kernel,
            singular_exponent=spectrum.riesz_exponent,
        )
        reference = 1.0 / spectrum.eigenvalues[k]
        error = _relative(value, reference)
        if error >= worst:
            worst, worst_value, worst_reference = error, value, reference
    return Check("funk_hecke", float(worst_value), float(worst_reference), worst, 1e-4)


def check_tphi_family(n: int, sigma: float) -> Check:
    grid = make_grid(Geometry(n, Mode.ZONAL, _VERIFY_L))
    pole = north_pole(n)
    source = SphereBubble(pole, 2.0, n, sigma).on(grid)
    transformed = t_phi_transform(source, MobiusMap(pole, 1.5), sigma)
    expected = SphereBubble(pole, 3.0, n, sigma)(grid.points)
    error = float(np.max(np.abs(transformed.values - expected)))
    return Check("tphi_bubble_family", float(np.max(transformed.values)), float(np.max(expected)), error, 1e-10)


def check_kazdan_warner_constant(n: int, sigma: float) -> Check:
    grid = make_grid(Geometry(n, Mode.ZONAL, 16))
    bubble = SphereBubble(north_pole(n), 2.0, n, sigma).on(grid)
    vector = kazdan_warner_vector(bubble, KProfile.constant(2.0, n), sigma)
    worst = float(np.max(np.abs(vector)))
    return Check("kazdan_warner_constant", worst, 0.0, worst, 1e-12)


def check_kazdan_warner_height(n: int, sigma: float) -> Check:
    K = KProfile.affine_height(0.0, 1.0, n)
    values = []
    for L in (16, 32):
        grid = make_grid(Geometry(n, Mode.ZONAL, L))
        bubble = SphereBubble(north_pole(n), 2.0, n, sigma).on(grid)
        values.append(kazdan_warner(bubble, K, n + 1, sigma))
    # error 0 when both resolutions give a positive value
    error = 0.0 if min(values) > 0.0 else 1.0
    return Check("kazdan_warner_height_sign", values[-1], values[0], error, 0.5)


def check_pohozaev(n: int, sigma: float) -> Check:
    K0 = unit_bubble_height(n, sigma)
    bubble = bubble_plane(np.zeros(n), 1.0, K0, n, sigma)
    p = bubble.exponent
    coarse = pohozaev_terms(bubble.profile, K0, p, 2.0, n=n, sigma=sigma, nodes=400)
    fine = pohozaev_terms(bubble.profile, K0, p, 2.0, n=n, sigma=sigma, nodes=800)
    relative = abs(fine.residual) / fine.scale
    # refinement must not make the residual worse
    settled = abs(fine.residual) <= abs(coarse.residual) + 1e-10 * coarse.scale
    return Check("pohozaev_bubble", fine.residual, 0.0, relative if settled else math.inf, 1e-3)


def check_plane_bubble(n: int, sigma: float) -> Check:
    bubble = bubble_plane(np.zeros(n), 1.0, unit_bubble_height(n, sigma), n, sigma)
    radii = np.array([0.0, 0.5, 1.0, 2.0, 5.0])
    residual = bubble.residual(radii)
    error = float(np.max(np.abs(residual) / bubble.profile(radii)))
    return Check("plane_bubble_equation", float(np.max(np.abs(residual))), 0.0, error, 1e-8)


def check_expansion_constant(n: int, sigma: float) -> Check:
    value = expansion_constant_A(n, sigma)
    integral, _ = quad(lambda r: r ** (n - 1) * (1.0 + r * r) ** (-(0.5 * n + sigma)), 0.0, np.inf, epsabs=1e-14, epsrel=1e-12)
    reference = 2.0 ** (-(0.5 * n - sigma)) * sphere_area(n - 1) * 2.0**n * integral
    return Check("expansion_constant", value, reference, _relative(value, reference), 1e-9)


def check_concentrated_bubble_report(n: int, sigma: float) -> Check:
    grid = make_grid(Geometry(n, Mode.ZONAL, 16))
    bubble = SphereBubble(north_pole(n), 1000.0, n, sigma)
    p = spectrum_for(n, sigma, 0).critical_exponent
    report = blowup_report(bubble, p, KProfile.constant(1.0, n), sigma, SolverConfig(), grid=grid)
    error = max(report.profile_error, report.tphi_error)
    return Check("concentrated_bubble_report", report.max_v, 1000.0 ** (0.5 * n - sigma), error, 1e-3)


def identity_suite(n: int, sigma: float, seed: int) -> List[Callable[[], Check]]:
    return [
        lambda: check_eigenvalues(n, sigma),
        lambda: check_constant_quotient(n, sigma),
        lambda: check_bubble_quotient(n, sigma),
        lambda: check_random_quotients(n, sigma, seed),
        lambda: check_constant_residual(n, sigma),
        lambda: check_bubble_residual(n, sigma),
        lambda: check_funk_hecke(n, sigma),
        lambda: check_green_function(n, sigma),
        lambda: check_tphi_family(n, sigma),
        lambda: check_concentrated_bubble_report(n, sigma),
        lambda: check_kazdan_warner_constant(n, sigma),
        lambda: check_kazdan_warner_height(n, sigma),
        lambda: check_pohozaev(n, sigma),
        lambda: check_plane_bubble(n, sigma),
        lambda: check_expansion_constant(n, sigma),
    ]


# ---------------------------------------------------------------------------
# Runner


def _report_payload(report: Optional[BlowupReport]) -> Optional[Dict[str, Any]]:
    if report is None:
        return None
    payload = asdict(report)
    payload["center"] = list(report.center)
    return payload


class ExperimentRunner:
    """Runs one resolved ExperimentConfig and writes its reports."""

    def __init__(self, config: ExperimentConfig, settings: Settings, store: Optional[ReportStore] = None) -> None:
        self.config = config
        self.settings = settings
        self.store = store or ReportStore(config.out)
        self._semaphore = asyncio.Semaphore(max(1, settings.threads))

    @property
    def resolved(self) -> Dict[str, Any]:
        return self.config.model_dump(by_alias=True, mode="json")

    async def _offload(self, fn: Callable[..., T], *args: Any, **kwargs: Any) -> T:
        async with self._semaphore:
            return await asyncio.to_thread(fn, *args, **kwargs)

    async def _fan_out(self, jobs: Sequence[Callable[[], T]]) -> List[T]:
        return list(await asyncio.gather(*(self._offload(job) for job in jobs)))

    def _geometry(self) -> Geometry:
        spec = self.config.geometry
        return Geometry(spec.n, Mode(spec.mode), spec.L)

    def _grid(self):
        return make_grid(self._geometry(), self.config.geometry.nodes)

    def _K(self) -> KProfile:
        return KProfile.from_spec(self.config.K, self.config.geometry.n)

    async def run(self) -> int:
        handlers: Dict[str, Callable[[], Awaitable[int]]] = {
            "spectrum": self.run_spectrum,
            "verify": self.run_verify,
            "solve": self.run_solve,
            "continue": self.run_continue,
            "testfn": self.run_testfn,
            "harnack": self.run_harnack,
            "index": self.run_index,
        }
        subcommand = self.config.subcommand
        logger.info("starting %s (n=%d sigma=%g)", subcommand, self.config.geometry.n, self.config.geometry.sigma)
        code = await handlers[subcommand]()
        logger.info("finished %s with exit code %d", subcommand, code)
        return code

    async def _summary(self, payload: Dict[str, Any]) -> None:
        payload = {"subcommand": self.config.subcommand, "config": self.resolved, **payload}
        await self.store.write_json("summary.json", payload)

    async def run_spectrum(self) -> int:
        spec = self.config.geometry
        spectrum = spectrum_for(spec.n, spec.sigma, spec.L)
        rows = [[k, float(e), 1.0 / float(e)] for k, e in enumerate(spectrum.eigenvalues)]
        await self.store.write_csv("spectrum.csv", ["k", "e_k", "inverse"], rows)
        await self._summary(
            {
                "pSigmaOne": spectrum.p_sigma_one,
                "rieszConstant": spectrum.riesz_constant,
                "sharpConstant": sharp_constant(spec.n, spec.sigma),
                "criticalExponent": spectrum.critical_exponent,
            }
        )
        return EXIT_OK

    async def run_verify(self) -> int:
        spec = self.config.geometry
        checks = await self._fan_out(identity_suite(spec.n, spec.sigma, self.config.seeds[0]))
        await self.store.write_csv("checks.csv", Check.COLUMNS, [check.as_row() for check in checks])
        failed = [check.name for check in checks if not check.passed]
        for check in checks:
            logger.info("%-26s %s error=%.3e", check.name, "ok" if check.passed else "FAILED", check.error)
        await self._summary({"passed": not failed, "failed": failed, "checks": len(checks)})
        return EXIT_OK if not failed else EXIT_FAILED

    def _solve_seed(self, seed: int) -> Dict[str, Any]:
        spec = self.config.geometry
        grid = self._grid()
        K = self._K()
        v, lam, state = subcritical_minimize(K, self.config.solver, grid, spec.sigma, seed=seed)
        spectrum = spectrum_for(spec.n, spec.sigma, spec.L)
        functional = QuotientFunctional(grid, spectrum, K.values(grid.points), state.p)
        residual, _ = functional.el_residual(state.coefficients)
        return {
            "seed": seed,
            "lambda": lam,
            "iterations": state.iterations,
            "gradNorm": state.grad_norm,
            "elResidual": residual / lam,
            "minV": float(np.min(v.values)),
            "maxV": float(np.max(v.values)),
            "clamps": state.clamps,
            "halvings": state.halvings,
            "kazdanWarner": [float(x) for x in kazdan_warner_vector(v, K, spec.sigma)],
            "_field": v,
            "_spectral": state.spectral,
        }

    async def run_solve(self) -> int:
        results = await self._fan_out([lambda s=seed: self._solve_seed(s) for seed in self.config.seeds])
        best = min(results, key=lambda r: r["lambda"])
        await self.store.write_grid_field("solution.csv", best["_field"])
        await self.store.write_spectral_field("solution.json", best["_spectral"])
        runs = [{k: v for k, v in result.items() if not k.startswith("_")} for result in results]
        await self._summary(
            {
                "exponent": self.config.solver.exponent(self.config.geometry.n, self.config.geometry.sigma),
                "bestSeed": best["seed"],
                "runs": runs,
            }
        )
        return EXIT_OK

    async def run_continue(self) -> int:
        spec = self.config.geometry
        taus = self.config.schedule.taus()
        grid = self._grid()
        K = self._K()
        try:
            result = await self._offload(
                continuation_to_critical, K, taus, self.config.solver, grid, spec.sigma, seed=self.config.seeds[0]
            )
        except SolverError as exc:
            rows = getattr(exc, "trajectory", [])
            await self.store.write_csv("trajectory.csv", TrajectoryRow.COLUMNS, [row.as_row() for row in rows])
            raise
        await self.store.write_csv("trajectory.csv", TrajectoryRow.COLUMNS, [row.as_row() for row in result.rows])
        radii, ubar, wbar = result.profile
        await self.store.write_csv("profile.csv", ["r", "ubar", "wbar"], zip(radii.tolist(), ubar.tolist(), wbar.tolist()))
        logger.info("verdict: %s", result.verdict)
        await self._summary(
            {
                "verdict": result.verdict,
                "reason": result.reason,
                "taus": taus,
                "report": _report_payload(result.report),
                "criticalResidual": result.critical_residual,
                "lambdaMonotone": result.lambda_monotone,
                "antipodalThreshold": result.antipodal_threshold,
                "belowThreshold": result.below_threshold,
            }
        )
        return EXIT_OK

    async def run_testfn(self) -> int:
        spec = self.config.geometry
        testfn = self.config.testfn
        K = self._K()
        betas = testfn.betas()
        ratios = await self._fan_out(
            [lambda b=beta: two_bubble_ratio(b, K, spec.sigma, nodes=testfn.nodes) for beta in betas]
        )
        weight = 0.5 * spec.n - spec.sigma
        fit = fit_expansion_slope(betas, ratios, weight)
        expected = -expansion_constant_A(spec.n, spec.sigma) / sphere_area(spec.n)
        rows = [[beta, (beta - 1.0) ** weight, ratio] for beta, ratio in zip(betas, ratios)]
        await self.store.write_csv("testfn.csv", ["beta", "x", "ratio"], rows)
        await self._summary(
            {
                "slope": fit.slope,
                "curvature": fit.curvature,
                "originSlope": fit.origin_slope,
                "power": fit.power,
                "expectedSlope": expected,
                "relativeError": _relative(fit.slope, expected),
                "A": expansion_constant_A(spec.n, spec.sigma),
            }
        )
        return EXIT_OK

    async def run_harnack(self) -> int:
        ensemble = self.config.ensemble
        rows: List[EnsembleRow] = []
        per_resolution: List[Dict[str, Any]] = []
        for cells in ensemble.cells:
            A = await self._offload(lambda c=cells: assemble_kernel(ball_grid(ensemble.n, c), ensemble.sigma))
            members = await self._fan_out(
                [lambda s=seed: ensemble_member(A, ensemble, s) for seed in range(ensemble.samples)]
            )
            rows.extend(members)
            admissible = [row for row in members if row.bk_admissible]
            per_resolution.append(
                {
                    "cells": cells,
                    "nodes": A.size,
                    "maxHarnack": max(row.harnack_ratio for row in members),
                    "maxHolderRatio": max(row.holder_ratio for row in members),
                    "maxBrezisKato": max((row.bk_ratio for row in admissible), default=None),
                    "maxNormV": max(row.bk_norm_V for row in members),
                    "admissible": len(admissible),
                    "bkClamped": sum(1 for row in members if row.bk_clamped),
                    "minExcess": min(row.min_excess for row in members),
                    "rescaled": sum(1 for row in members if row.rescaled),
                }
            )
        await self.store.write_csv("ensemble.csv", EnsembleRow.COLUMNS, [row.as_row() for row in rows])
        change = None
        if len(per_resolution) >= 2:
            first, last = per_resolution[0]["maxHarnack"], per_resolution[-1]["maxHarnack"]
            change = abs(last - first) / first
        await self._summary(
            {
                "resolutions": per_resolution,
                "harnackChange": change,
                "brezisKatoBound": ensemble.bk_bound,
                "positivity": all(row.min_excess >= -1e-12 for row in rows),
            }
        )
        return EXIT_OK

    async def run_index(self) -> int:
        result = index_count_check(self._K(), self.config.geometry.n)
        logger.info("index count sum=%d hypothesis %s", result.sum, "holds" if result.hypothesis_holds else "fails")
        await self._summary(
            {"hypothesisHolds": result.hypothesis_holds, "sum": result.sum, "contributing": result.contributing}
        )
        return EXIT_OK


__all__ = ["Check", "ExperimentRunner", "identity_suite"]
