#!/usr/bin/env python3
"""Desk-scale end-to-end experiment: synthesize a corpus, train, evaluate.

Equivalent to:
    lkaseg synth --out <dir>/corpus --count 32 --size 64 --seed 7
    lkaseg train --data <dir>/corpus --out <dir>/run --epochs 30 --seed 7
    lkaseg eval  --checkpoint <dir>/run/best.lkc --data <dir>/corpus
"""

import argparse
import json
import sys
from pathlib import Path

from lkaseg.cli import main as cli

DESK_CONFIG = {"stage_widths": [16, 32, 64, 128]}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="desk_run")
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--count", type=int, default=32)
    args = ap.parse_args()

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    cfg_path = work / "desk_config.json"
    cfg_path.write_text(json.dumps(DESK_CONFIG, indent=2))
    corpus = f"{args.workdir}/corpus"
    run = f"{args.workdir}/run"
    for argv in (
        ["synth", "--out", corpus, "--count", str(args.count), "--size", "64",
         "--seed", str(args.seed)],
        ["train", "--config", str(cfg_path), "--data", corpus, "--out", run,
         "--epochs", str(args.epochs), "--seed", str(args.seed)],
        ["eval", "--checkpoint", f"{run}/best.lkc", "--data", corpus],
    ):
        code = cli(argv)
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
