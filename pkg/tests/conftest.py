import sys
from pathlib import Path

import pytest

# Make the package importable without installation
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line("markers", "slow: desk-scale acceptance runs (minutes)")


@pytest.fixture
def report_dir(tmp_path: Path) -> Path:
    out = tmp_path / "reports"
    out.mkdir()
    return out
