#!/usr/bin/env python3
"""Blow-up taxonomy: bounded / eps^-1 / eps^{k/m-1} depending on the data gap."""
import sys
from pathlib import Path

from narrowgap.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    args = sys.argv[1:] or ["--config", str(ROOT / "configs/remark13.json")]
    sys.exit(main(["remark13", *args]))
