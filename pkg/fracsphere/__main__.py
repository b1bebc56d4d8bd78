"""
Entry point for running experiments as a module.

Usage:
    python -m fracsphere verify --n 3 --sigma 1
    python -m fracsphere continue --K "2+height" --log-level DEBUG
"""

import sys

from .main import main

if __name__ == "__main__":
    sys.exit(main())
