"""Command-line entrypoint: ``python -m fracsphere <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import re
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from .config import Settings
from .errors import (
    ConfigurationError,
    DomainError,
    FracsphereError,
    SolverError,
    TailDataError,
)
from .runner import ExperimentRunner
from .schemas import ExperimentConfig, KProfileSpec
from .storage import ReportStore, dumps, write_error_sync

LOGGER = logging.getLogger(__name__)

SUBCOMMANDS = ("spectrum", "verify", "solve", "continue", "testfn", "harnack", "index")

EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_NUMERICAL = 1

_NUMBER = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_AFFINE = re.compile(rf"^\s*({_NUMBER})\s*([+-])\s*(?:({_NUMBER})\s*\*?\s*)?height\s*$")


# ---------------------------------------------------------------------------
# Inline values


def parse_k(text: str) -> KProfileSpec:
    """Turn an inline ``--K`` value into a KProfileSpec.

    Accepted forms: ``1.5``, ``constant:1.5``, ``a+b*height`` (``2+height``),
    ``zonal:c0,c1,...``, ``file:<path>`` for a spectral field, a JSON object,
    or a path to a JSON file holding a KProfileSpec.
    """
    value = text.strip()
    if not value:
        raise ConfigurationError("empty --K value")
    try:
        return KProfileSpec(kind="constant", value=float(value))
    except ValueError:
        pass

    if value.startswith("constant:"):
        try:
            return KProfileSpec(kind="constant", value=float(value.split(":", 1)[1]))
        except ValueError as exc:
            raise ConfigurationError(f"bad constant K {value!r}") from exc

    match = _AFFINE.match(value)
    if match:
        a, sign, b = match.groups()
        slope = float(b) if b is not None else 1.0
        return KProfileSpec(kind="affine_height", a=float(a), b=slope if sign == "+" else -slope)

    if value.startswith("zonal:"):
        try:
            coefficients = [float(c) for c in value.split(":", 1)[1].split(",") if c.strip()]
        except ValueError as exc:
            raise ConfigurationError(f"bad zonal coefficients in {value!r}") from exc
        if not coefficients:
            raise ConfigurationError("zonal K needs at least one coefficient")
        return KProfileSpec(kind="zonal_polynomial", coefficients=coefficients)

    if value.startswith("file:"):
        return KProfileSpec(kind="spectral_file", path=value.split(":", 1)[1])

    if value.startswith("{"):
        try:
            return KProfileSpec.model_validate_json(value)
        except ValidationError:
            raise
        except ValueError as exc:
            raise ConfigurationError(f"bad JSON K: {exc}") from exc

    path = Path(value).expanduser()
    if path.is_file():
        return KProfileSpec.model_validate(_read_json(path))
    raise ConfigurationError(f"unrecognized --K value {text!r}")


def parse_tau_schedule(text: str) -> Dict[str, Any]:
    """``a:b:steps`` -> schedule fields; geometric when both ends are positive."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigurationError(f"--tau-schedule expects a:b:steps, got {text!r}")
    try:
        start, end, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigurationError(f"bad --tau-schedule {text!r}") from exc
    return {"tauStart": start, "tauEnd": end, "steps": steps, "spacing": "auto"}


def _read_json(path: Path) -> Dict[str, Any]:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigurationError(f"{path} must hold a JSON object")
    return payload


# ---------------------------------------------------------------------------
# Arguments


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config; flags override it")
    common.add_argument("--log-level", default=None, help="Python logging level (default: INFO)")
    common.add_argument("--threads", type=int, default=None, help="parallel workers (overrides FRACSPHERE_THREADS)")
    common.add_argument("--out", default=None, help="report directory")

    geometry = common.add_argument_group("geometry")
    geometry.add_argument("--n", type=int, default=None, help="sphere dimension")
    geometry.add_argument("--sigma", type=float, default=None, help="fractional order in (0, n/2)")
    geometry.add_argument("--L", type=int, default=None, help="spectral degree cap")
    geometry.add_argument("--mode", choices=("zonal", "fulls2"), default=None)
    geometry.add_argument("--nodes", type=int, default=None, help="grid node count")

    problem = common.add_argument_group("problem")
    problem.add_argument("--K", default=None, help="curvature profile (inline form or JSON)")
    problem.add_argument("--tau-schedule", default=None, help="continuation schedule a:b:steps")
    problem.add_argument("--seed", type=int, nargs="+", default=None, help="one or more seeds")
    problem.add_argument("--symmetry", choices=("none", "antipodal"), default=None)

    solver = common.add_argument_group("solver")
    solver.add_argument("--tau", type=float, default=None, help="subcriticality for solve")
    solver.add_argument("--eta", type=float, default=None, help="initial step length")
    solver.add_argument("--max-iterations", type=int, default=None)
    solver.add_argument("--tolerance", type=float, default=None)
    solver.add_argument("--blowup-threshold", type=float, default=None)
    solver.add_argument("--band-limit", type=int, default=None, help="highest degree the solver iterates keep")

    sweeps = common.add_argument_group("sweeps")
    sweeps.add_argument("--beta-min", type=float, default=None)
    sweeps.add_argument("--beta-max", type=float, default=None)
    sweeps.add_argument("--beta-samples", type=int, default=None)
    sweeps.add_argument("--samples", type=int, default=None, help="ensemble members per resolution")
    sweeps.add_argument("--cells", type=int, nargs="+", default=None, help="ensemble grid resolutions")
    return common


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse the subcommand and its flags."""
    parser = argparse.ArgumentParser(
        prog="fracsphere",
        description="Fractional prescribed-curvature experiments on S^n",
    )
    common = _common_parser()
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "spectrum": "eigenvalue table of P_sigma",
        "verify": "run the identity suite",
        "solve": "subcritical minimization",
        "continue": "continuation toward the critical exponent",
        "testfn": "test-function expansion near beta = 1",
        "harnack": "local-estimate ensemble on the unit ball",
        "index": "index-count hypothesis for declared critical points",
    }
    for name in SUBCOMMANDS:
        subparsers.add_parser(name, parents=[common], help=helps[name])
    return parser.parse_args(argv)


def _set(section: Dict[str, Any], key: str, value: Any) -> None:
    if value is not None:
        section[key] = value


def resolve_config(args: argparse.Namespace, settings: Settings) -> ExperimentConfig:
    """Defaults, then the ``--config`` file, then explicit flags."""
    data: Dict[str, Any] = _read_json(args.config.expanduser()) if args.config else {}
    data["subcommand"] = args.subcommand
    data.setdefault("out", str(settings.report_dir))

    geometry = data.setdefault("geometry", {})
    for key in ("n", "sigma", "L", "mode", "nodes"):
        _set(geometry, key, getattr(args, key))

    if args.K is not None:
        data["K"] = parse_k(args.K).model_dump(by_alias=True)
    if args.tau_schedule is not None:
        data["schedule"] = parse_tau_schedule(args.tau_schedule)
    _set(data, "seeds", args.seed)
    _set(data, "out", args.out)

    solver = data.setdefault("solver", {})
    _set(solver, "symmetry", args.symmetry)
    _set(solver, "tau", args.tau)
    _set(solver, "eta", args.eta)
    _set(solver, "maxIterations", args.max_iterations)
    _set(solver, "tolerance", args.tolerance)
    _set(solver, "blowupThreshold", args.blowup_threshold)
    _set(solver, "bandLimit", args.band_limit)

    testfn = data.setdefault("testfn", {})
    _set(testfn, "betaMin", args.beta_min)
    _set(testfn, "betaMax", args.beta_max)
    _set(testfn, "samples", args.beta_samples)

    ensemble = data.setdefault("ensemble", {})
    _set(ensemble, "samples", args.samples)
    _set(ensemble, "cells", args.cells)
    if args.subcommand == "harnack":
        # --n and --sigma describe the ball problem here, not the sphere
        for key in ("n", "sigma"):
            if getattr(args, key) is not None:
                ensemble[key] = geometry.pop(key)

    return ExperimentConfig.model_validate(data)


# ---------------------------------------------------------------------------
# Entrypoint


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ValidationError, DomainError, TailDataError)):
        return EXIT_VALIDATION
    if isinstance(exc, SolverError):
        return EXIT_SOLVER
    return EXIT_NUMERICAL


def _report_error(exc: BaseException, out: Path) -> int:
    code = _exit_code(exc)
    payload = {"error": type(exc).__name__, "message": str(exc), "exitCode": code}
    write_error_sync(out, payload)
    sys.stderr.write(dumps(payload))
    return code


def main(argv: Optional[List[str]] = None) -> int:
    """
    Resolve settings and config, run one subcommand, and return its exit code.

    0 on success, 1 on a failed identity check or numerical breakdown,
    2 on invalid input, 3 when the solver fails to converge. Every non-zero
    exit from an exception leaves ``error.json`` in the report directory.
    """
    args = parse_args(argv)
    settings = Settings.from_env().with_threads(args.threads)
    level = args.log_level or settings.log_level
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO))

    out = Path(args.out).expanduser() if args.out else settings.report_dir
    try:
        config = resolve_config(args, settings)
        out = Path(config.out).expanduser()
        LOGGER.info("running %s with %d worker(s), reports in %s", config.subcommand, settings.threads, out)
        runner = ExperimentRunner(config, settings, ReportStore(out))
        return asyncio.run(runner.run())
    except (ValidationError, FracsphereError) as exc:
        LOGGER.error("%s failed: %s", args.subcommand, exc)
        return _report_error(exc, out)
    except KeyboardInterrupt:  # pragma: no cover - interactive abort
        LOGGER.info("interrupted")
        return 130
    except Exception as exc:
        LOGGER.exception("%s failed unexpectedly", args.subcommand)
        return _report_error(exc, out)


__all__ = ["main", "parse_args", "parse_k", "parse_tau_schedule", "resolve_config"]
