"""Environment-derived settings for experiment runs."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

DEFAULT_REPORT_ROOT = Path("reports")
DEFAULT_LOG_LEVEL = "INFO"


@dataclass
class Settings:
    """
    Process-wide settings resolved once at startup.

    ``threads`` caps how many independent experiment pieces run at the same
    time; explicit CLI flags take precedence over these values.
    """

    threads: int = 1
    report_dir: Path = DEFAULT_REPORT_ROOT
    log_level: str = DEFAULT_LOG_LEVEL

    @classmethod
    def from_env(cls) -> "Settings":
        """Read FRACSPHERE_THREADS, FRACSPHERE_OUT and FRACSPHERE_LOG_LEVEL."""

        threads = _read_threads(os.getenv("FRACSPHERE_THREADS"))
        report_dir = Path(os.getenv("FRACSPHERE_OUT", str(DEFAULT_REPORT_ROOT))).expanduser()
        log_level = os.getenv("FRACSPHERE_LOG_LEVEL", DEFAULT_LOG_LEVEL).strip() or DEFAULT_LOG_LEVEL
        return cls(threads=threads, report_dir=report_dir, log_level=log_level)

    def with_threads(self, threads: Optional[int]) -> "Settings":
        if threads is None:
            return self
        return Settings(threads=max(1, int(threads)), report_dir=self.report_dir, log_level=self.log_level)


def _read_threads(value: Optional[str]) -> int:
    fallback = os.cpu_count() or 1
    if not value:
        return fallback
    try:
        return max(1, int(value))
    except ValueError:
        return fallback


__all__ = ["DEFAULT_LOG_LEVEL", "DEFAULT_REPORT_ROOT", "Settings"]
