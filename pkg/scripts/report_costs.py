#!/usr/bin/env python3
"""Print the analytic parameter/FLOP table for configured model variants.

Shows the default-width model, the same widths without the full-scale skip
pathways, and the desk-scale variant, at a chosen input size.
"""

import argparse
import dataclasses
import sys

from lkaseg.accounting import build_cost_report
from lkaseg.model import ModelConfig


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--input-size", type=int, default=512)
    ap.add_argument("--full-table", action="store_true",
                    help="print per-layer rows, not just totals")
    args = ap.parse_args()
    hw = (args.input_size, args.input_size)

    variants = [
        ("default", ModelConfig()),
        ("default-no-fsc", dataclasses.replace(ModelConfig(), use_fsc=False)),
        ("desk", ModelConfig.desk()),
    ]
    for name, cfg in variants:
        report = build_cost_report(cfg, hw)
        if args.full_table:
            print(f"== {name} ==")
            print(report.to_text())
        else:
            print(f"{name:<16} params {report.total_params / 1e6:8.3f} M   "
                  f"flops {report.total_flops / 1e9:8.3f} G  @ {hw[0]}x{hw[1]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
