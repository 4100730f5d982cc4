#!/usr/bin/env python3
"""Exponential gradient decay under zero top/bottom data (both tensors)."""
import sys
from pathlib import Path

from narrowgap.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    if sys.argv[1:]:
        sys.exit(main(["decay", *sys.argv[1:]]))
    code = 0
    for cfg in ("decay_laplace.json", "decay_lame.json"):
        code |= main(["decay", "--config", str(ROOT / "configs" / cfg)])
    sys.exit(code)
