#!/usr/bin/env python3
"""Bounded corrected remainder vs eps^{-1/2} uncorrected blow-up (m = 2)."""
import sys
from pathlib import Path

from narrowgap.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    args = sys.argv[1:] or ["--config", str(ROOT / "configs/thm11.json")]
    sys.exit(main(["thm11", *args]))
