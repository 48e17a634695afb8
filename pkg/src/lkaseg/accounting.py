"""Analytic parameter and FLOP accounting.

Conventions (stated in every report header):
  - 1 multiply-accumulate = 2 FLOPs,
  - conv FLOPs = 2 * (k_h * k_w * C_in / groups) * C_out * H_out * W_out,
  - batch norm (inference form) = 2 FLOPs per element,
  - relu 1, gelu 8, sigmoid 4, add/mul 1 FLOP per element,
  - max pooling k*k FLOPs per output element,
  - bilinear resize 8 FLOPs per output element.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .model import LKASegModel, ModelConfig

CONVENTION = ("1 MAC = 2 FLOPs; bn=2, relu=1, gelu=8, sigmoid=4, add/mul=1, "
              "maxpool=k^2, bilinear=8 FLOPs per element")


def conv_param_count(c_in: int, c_out: int, kernel: int, groups: int = 1,
                     bias: bool = True) -> int:
    return (kernel * kernel * c_in // groups) * c_out + (c_out if bias else 0)


def conv_flop_count(c_in: int, c_out: int, kernel: int, out_h: int, out_w: int,
                    groups: int = 1) -> int:
    return 2 * (kernel * kernel * c_in // groups) * c_out * out_h * out_w


@dataclass
class CostReport:
    """Per-layer parameter and FLOP rows plus exact column totals."""

    rows: list  # (name, params, flops)
    input_hw: tuple
    convention: str = CONVENTION
    total_params: int = field(init=False)
    total_flops: int = field(init=False)

    def __post_init__(self):
        self.total_params = sum(r[1] for r in self.rows)
        self.total_flops = sum(r[2] for r in self.rows)

    def to_json(self) -> str:
        return json.dumps({
            "input_hw": list(self.input_hw),
            "convention": self.convention,
            "rows": [{"layer": n, "params": p, "flops": f} for n, p, f in self.rows],
            "total_params": self.total_params,
            "total_flops": self.total_flops,
            "params_M": round(self.total_params / 1e6, 3),
            "flops_G": round(self.total_flops / 1e9, 3),
        }, indent=2)

    def to_text(self) -> str:
        width = max(len(r[0]) for r in self.rows) + 2
        lines = [
            f"input: {self.input_hw[0]}x{self.input_hw[1]}  ({self.convention})",
            f"{'layer':<{width}}{'params':>12}{'flops':>16}",
        ]
        for name, params, flops in self.rows:
            lines.append(f"{name:<{width}}{params:>12}{flops:>16}")
        lines.append(f"{'TOTAL':<{width}}{self.total_params:>12}{self.total_flops:>16}")
        lines.append(f"params: {self.total_params / 1e6:.3f} M   "
                     f"flops: {self.total_flops / 1e9:.3f} G")
        return "\n".join(lines)


def build_cost_report(cfg: ModelConfig, input_hw: tuple = (512, 512),
                      model: LKASegModel | None = None) -> CostReport:
    """Build the full per-layer report for a model configuration."""
    if model is None:
        model = LKASegModel(cfg, seed=0)
    h, w = input_hw
    return CostReport(rows=model.cost_rows(h, w), input_hw=(h, w))


def count_params(cfg: ModelConfig) -> CostReport:
    """Parameter rows only (FLOPs computed at a nominal size, params exact)."""
    return build_cost_report(cfg, (32, 32))


def count_flops(cfg: ModelConfig, h: int, w: int) -> CostReport:
    return build_cost_report(cfg, (h, w))
