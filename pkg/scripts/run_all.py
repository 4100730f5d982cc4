#!/usr/bin/env python3
"""Every m = 2 check in one run (decay has its own geometry, see run_decay)."""
import sys
from pathlib import Path

from narrowgap.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    args = sys.argv[1:] or ["--config", str(ROOT / "configs/all_m2.json")]
    sys.exit(main(["all", *args]))
