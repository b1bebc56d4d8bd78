"""Report files and field serialization with 17-significant-digit floats."""

from __future__ import annotations

import asyncio
import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError
from .sphere import Geometry, GridField, Mode, SpectralField, full_index

logger = logging.getLogger(__name__)

FLOAT_FORMAT = ".17g"


def format_float(value: float) -> str:
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, FLOAT_FORMAT)


def _scalar(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    return value


def format_cell(value: Any) -> str:
    value = _scalar(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    if value is None:
        return ""
    return str(value)


def _encode(value: Any, indent: int, level: int) -> str:
    value = _scalar(value)
    pad = " " * (indent * (level + 1))
    close = " " * (indent * level)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return json.dumps(value)
    if isinstance(value, float):
        text = format_float(value)
        # JSON has no non-finite literals
        return json.dumps(text) if not math.isfinite(value) else text
    if isinstance(value, Mapping):
        if not value:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(key))}: {_encode(value[key], indent, level + 1)}"
            for key in sorted(value, key=str)
        ]
        return "{\n" + ",\n".join(items) + "\n" + close + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        if all(not isinstance(_scalar(item), (Mapping, list, tuple, np.ndarray)) for item in value):
            return "[" + ", ".join(_encode(item, indent, level + 1) for item in value) + "]"
        items = [f"{pad}{_encode(item, indent, level + 1)}" for item in value]
        return "[\n" + ",\n".join(items) + "\n" + close + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps(payload: Any, indent: int = 2) -> str:
    """JSON text with sorted keys and every float written with 17 significant digits."""
    return _encode(payload, indent, 0) + "\n"


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([format_cell(cell) for cell in row])
    return buffer.getvalue()


# ---------------------------------------------------------------------------
# Fields


def grid_field_rows(field: GridField) -> tuple[List[str], List[List[Any]]]:
    grid = field.grid
    header = ["node_index"] + [f"x{i + 1}" for i in range(grid.n + 1)] + ["weight", "value"]
    rows = [
        [i, *grid.points[i].tolist(), float(grid.weights[i]), float(field.values[i])]
        for i in range(grid.size)
    ]
    return header, rows


def spectral_field_payload(field: SpectralField) -> Dict[str, Any]:
    """JSON form with coefficients keyed by degree, then by order (always 0 for zonal fields)."""
    geometry = field.geometry
    coefficients: Dict[str, Dict[str, float]] = {}
    if geometry.mode is Mode.ZONAL:
        for degree, value in enumerate(field.coefficients):
            coefficients[str(degree)] = {"0": float(value)}
    else:
        for degree in range(geometry.L + 1):
            coefficients[str(degree)] = {
                str(order): float(field.coefficients[full_index(degree, order)])
                for order in range(-degree, degree + 1)
            }
    return {
        "n": geometry.n,
        "mode": geometry.mode.value,
        "L": geometry.L,
        "coefficients": coefficients,
    }


def spectral_field_from_payload(payload: Mapping[str, Any]) -> SpectralField:
    """Inverse of :func:`spectral_field_payload`; absent (degree, order) entries are zero."""
    try:
        geometry = Geometry(int(payload["n"]), Mode(payload.get("mode", "zonal")), int(payload["L"]))
        coefficients = np.zeros(geometry.size)
        for degree_key, orders in payload["coefficients"].items():
            degree = int(degree_key)
            for order_key, value in orders.items():
                order = int(order_key)
                if not 0 <= degree <= geometry.L or abs(order) > degree:
                    raise ValueError(f"no harmonic of degree {degree} and order {order} below L={geometry.L}")
                if geometry.mode is Mode.ZONAL:
                    if order != 0:
                        raise ValueError(f"zonal fields only carry order 0, got order {order}")
                    coefficients[degree] = float(value)
                else:
                    coefficients[full_index(degree, order)] = float(value)
    except (AttributeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed spectral field: {exc}") from exc
    return SpectralField(geometry, coefficients)


def load_spectral_field(path: Union[str, Path]) -> SpectralField:
    path = Path(path).expanduser()
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read spectral field {path}: {exc}") from exc
    return spectral_field_from_payload(payload)


# ---------------------------------------------------------------------------
# Report directory


class ReportStore:
    """Writes report files under one directory, one lock per file."""

    def __init__(self, root: Union[str, Path]) -> None:
        self.root = Path(root).expanduser()
        self._locks: Dict[str, asyncio.Lock] = {}
        self._guard = asyncio.Lock()

    async def _lock_for(self, name: str) -> asyncio.Lock:
        async with self._guard:
            lock = self._locks.get(name)
            if lock is None:
                lock = self._locks[name] = asyncio.Lock()
            return lock

    async def write_text(self, name: str, text: str) -> Path:
        path = self.root / name
        lock = await self._lock_for(name)
        async with lock:

            def _write() -> Path:
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(text, encoding="utf-8")
                return path

            written = await asyncio.to_thread(_write)
        logger.info("wrote %s", written)
        return written

    async def write_json(self, name: str, payload: Any) -> Path:
        return await self.write_text(name, dumps(payload))

    async def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        return await self.write_text(name, csv_text(header, list(rows)))

    async def write_grid_field(self, name: str, field: GridField) -> Path:
        header, rows = grid_field_rows(field)
        return await self.write_csv(name, header, rows)

    async def write_spectral_field(self, name: str, field: SpectralField) -> Path:
        return await self.write_json(name, spectral_field_payload(field))


def write_error_sync(root: Union[str, Path], payload: Mapping[str, Any]) -> Optional[Path]:
    """Best-effort error.json outside the event loop."""
    path = Path(root).expanduser() / "error.json"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps(dict(payload)), encoding="utf-8")
    except OSError as exc:
        logger.warning("could not write %s: %s", path, exc)
        return None
    return path


__all__ = [
    "ReportStore",
    "csv_text",
    "dumps",
    "format_cell",
    "format_float",
    "grid_field_rows",
    "load_spectral_field",
    "spectral_field_from_payload",
    "spectral_field_payload",
    "write_error_sync",
]
