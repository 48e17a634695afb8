"""Command-line entry point.

Subcommands: synth, train, eval, infer, count, gradcheck.
Exit codes: 0 success, 1 validation error, 2 numerical-check failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import data_io
from .accounting import build_cost_report
from .data_io import (IGNORE_LABEL, Palette, default_palette, load_corpus,
                      read_ppm, sample_from_rasters, stitch, synth_generate,
                      tile, write_ppm)
from .gradcheck import run_scope
from .metrics import report_json, report_table
from .model import LKASegModel, ModelConfig
from .nn import load_checkpoint
from .tensor import Tensor, TensorError
from .train import TrainConfig, eval_loop, train_loop

_MODEL_KEYS = {f.name for f in dataclasses.fields(ModelConfig)}
_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
_EXTRA_KEYS = {"ignore_classes"}


class ConfigError(ValueError):
    pass


def load_run_config(config_path=None, overrides=None) -> dict:
    """Merge a JSON config file with CLI overrides; unknown keys are rejected."""
    raw = {}
    if config_path is not None:
        raw = json.loads(Path(config_path).read_text())
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    unknown = set(raw) - _MODEL_KEYS - _TRAIN_KEYS - _EXTRA_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    model_kwargs = {k: v for k, v in raw.items() if k in _MODEL_KEYS}
    if "stage_widths" in model_kwargs:
        model_kwargs["stage_widths"] = tuple(model_kwargs["stage_widths"])
    train_kwargs = {k: v for k, v in raw.items() if k in _TRAIN_KEYS}
    return {
        "model": ModelConfig(**model_kwargs),
        "train": TrainConfig(**train_kwargs),
        "ignore_classes": tuple(raw.get("ignore_classes", ())),
    }


def effective_config_dict(cfg: dict) -> dict:
    out = cfg["model"].to_dict()
    out.update(dataclasses.asdict(cfg["train"]))
    out["ignore_classes"] = list(cfg["ignore_classes"])
    return out


def _load_model_for_checkpoint(checkpoint, config_path) -> tuple[LKASegModel, dict]:
    ckpt = Path(checkpoint)
    if config_path is None:
        candidate = ckpt.parent / "config.json"
        if not candidate.exists():
            raise ConfigError(f"no --config given and {candidate} not found")
        config_path = candidate
    cfg = load_run_config(config_path)
    model = LKASegModel(cfg["model"], seed=cfg["train"].seed)
    loaded = load_checkpoint(ckpt)
    model.store.copy_from(loaded)
    return model, cfg


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    if args.size % 32:
        print("error: size must be divisible by 32", file=sys.stderr)
        return 1
    manifest = synth_generate(args.out, seed=args.seed, count=args.count,
                              size=args.size, num_classes=args.classes,
                              noise_sigma=args.noise)
    if args.count == 0:
        print("warning: count 0, wrote manifest only", file=sys.stderr)
    print(json.dumps({k: manifest[k] for k in ("seed", "count", "size", "num_classes")}))
    return 0


def cmd_train(args) -> int:
    overrides = {"epochs": args.epochs, "seed": args.seed, "lr": args.lr,
                 "batch_size": args.batch_size}
    cfg = load_run_config(args.config, overrides)
    samples, manifest = load_corpus(args.data, ignore_classes=cfg["ignore_classes"])
    if manifest["num_classes"] > cfg["model"].num_classes:
        raise ConfigError(
            f"corpus has {manifest['num_classes']} classes but the model only "
            f"{cfg['model'].num_classes}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(effective_config_dict(cfg), indent=2))
    model = LKASegModel(cfg["model"], seed=cfg["train"].seed)
    names = Palette.from_manifest(manifest["palette"]).names()
    train_loop(model, samples, cfg["train"], out_dir=out,
               class_names=names, log_stream=sys.stdout)
    return 0


def cmd_eval(args) -> int:
    model, cfg = _load_model_for_checkpoint(args.checkpoint, args.config)
    samples, manifest = load_corpus(args.data, ignore_classes=cfg["ignore_classes"])
    names = Palette.from_manifest(manifest["palette"]).names()
    scores = eval_loop(model, samples, batch_size=cfg["train"].batch_size,
                       class_names=names)
    print(report_json(scores))
    print(report_table(scores))
    return 0


def cmd_infer(args) -> int:
    model, cfg = _load_model_for_checkpoint(args.checkpoint, args.config)
    raster = read_ppm(args.image)
    h, w = raster.shape[:2]
    palette = default_palette(cfg["model"].num_classes)

    if h % 32 == 0 and w % 32 == 0 and args.tile_size is None:
        sample = sample_from_rasters(raster, np.zeros((h, w), dtype=np.int64))
        logits = model.forward(sample.image, mode="eval").data[0]
    else:
        if args.tile_size is None:
            raise ConfigError("image dims not divisible by 32; pass --tile-size")
        stride = args.tile_stride or args.tile_size
        tiles, layout = tile(raster, None, args.tile_size, stride)
        tile_logits = []
        for img_t, _ in tiles:
            s = sample_from_rasters(img_t, np.zeros(img_t.shape[:2], dtype=np.int64))
            tile_logits.append(model.forward(s.image, mode="eval").data[0])
        logits = stitch(tile_logits, layout)

    pred = logits.argmax(axis=0)
    pred_raster = palette.encode(pred)
    overlay = ((raster.astype(np.uint16) + pred_raster.astype(np.uint16)) // 2).astype(np.uint8)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_ppm(out / "prediction.ppm", pred_raster)
    write_ppm(out / "overlay.ppm", overlay)
    print(f"wrote {out / 'prediction.ppm'} and {out / 'overlay.ppm'}")
    return 0


def cmd_count(args) -> int:
    cfg = load_run_config(args.config)
    report = build_cost_report(cfg["model"], (args.input_size, args.input_size))
    if args.json:
        print(report.to_json())
    else:
        print(report.to_text())
    return 0


def cmd_gradcheck(args) -> int:
    checks = run_scope(args.scope)
    failed = 0
    for name, report, tol in checks:
        ok = report.passed(tol)
        status = "PASS" if ok else "FAIL"
        print(f"[{status}] {name}: max_rel={report.max_rel_err:.3e} "
              f"max_abs={report.max_abs_err:.3e} n={report.n_checked} tol={tol:g}")
        failed += not ok
    if failed:
        print(f"{failed} gradient check(s) failed", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lkaseg",
                                description="LKA segmentation engine")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic corpus")
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--count", type=int, default=32)
    sp.add_argument("--size", type=int, default=64)
    sp.add_argument("--classes", type=int, default=6)
    sp.add_argument("--noise", type=float, default=10.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_synth)

    tp = sub.add_parser("train", help="train a model on a corpus")
    tp.add_argument("--config", default=None, help="JSON run config")
    tp.add_argument("--data", required=True)
    tp.add_argument("--out", required=True)
    tp.add_argument("--epochs", type=int, default=None)
    tp.add_argument("--seed", type=int, default=None)
    tp.add_argument("--lr", type=float, default=None)
    tp.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    tp.set_defaults(fn=cmd_train)

    ep = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    ep.add_argument("--checkpoint", required=True)
    ep.add_argument("--data", required=True)
    ep.add_argument("--config", default=None)
    ep.set_defaults(fn=cmd_eval)

    ip = sub.add_parser("infer", help="predict labels for one image")
    ip.add_argument("--checkpoint", required=True)
    ip.add_argument("--image", required=True)
    ip.add_argument("--out", required=True)
    ip.add_argument("--config", default=None)
    ip.add_argument("--tile-size", dest="tile_size", type=int, default=None)
    ip.add_argument("--tile-stride", dest="tile_stride", type=int, default=None)
    ip.set_defaults(fn=cmd_infer)

    cp = sub.add_parser("count", help="analytic parameter/FLOP report")
    cp.add_argument("--config", default=None)
    cp.add_argument("--input-size", dest="input_size", type=int, default=512)
    cp.add_argument("--json", action="store_true")
    cp.set_defaults(fn=cmd_count)

    gp = sub.add_parser("gradcheck", help="finite-difference verification")
    gp.add_argument("--scope", choices=("ops", "lka", "model"), default="ops")
    gp.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, TensorError, data_io.RasterError, OSError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
