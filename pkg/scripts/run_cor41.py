#!/usr/bin/env python3
"""Elasticity gauge sharpening at m = 4: Theta_bar-normalized remainder."""
import sys
from pathlib import Path

from narrowgap.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    args = sys.argv[1:] or ["--config", str(ROOT / "configs/cor41_m4.json")]
    sys.exit(main(["cor41", *args]))
