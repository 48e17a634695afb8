#!/usr/bin/env python3
"""Run every finite-difference gradient verification scope and summarize."""

import sys

from lkaseg.cli import main as cli


def main() -> int:
    worst = 0
    for scope in ("ops", "lka", "model"):
        print(f"== scope: {scope} ==")
        worst = max(worst, cli(["gradcheck", "--scope", scope]))
    return worst


if __name__ == "__main__":
    sys.exit(main())
