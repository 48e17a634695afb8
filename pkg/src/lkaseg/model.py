"""The full segmentation network.

Encoder: ResNet-18-style trunk (7x7 stem + 4 stages of two residual blocks)
tapped at 1/4, 1/8, 1/16, 1/32 of the input. Decoder: three large-kernel
attention stages at 1/16, 1/8, 1/4, each fed a full-scale gather of all four
encoder taps (max-pool down, bilinear up, 1x1 channel unification, channel
concat) and blended with the same-scale encoder features through a learnable
sigmoid-parameterized convex gate. A small refinement head maps 1/4-scale
features to full-resolution class logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .lka import DecoderBlock, LkaConfig
from .nn import BatchNorm2d, Conv2d, ParamStore, ResBlock
from .tensor import (ShapeError, Tensor, TensorError, activation,
                     bilinear_resize, concat_channels, elementwise,
                     max_pool2d, resolve_dtype)

TAP_FACTORS = (4, 8, 16, 32)
STAGE_FACTORS = (16, 8, 4)  # decoder stages, coarse to fine

# per-output-element FLOP constants for non-conv ops (see accounting module)
FLOPS_RELU = 1
FLOPS_GELU = 8
FLOPS_SIGMOID = 4
FLOPS_ADD = 1
FLOPS_MUL = 1
FLOPS_BILINEAR = 8


@dataclass(frozen=True)
class ModelConfig:
    """Widths and wiring of the network; defaults follow the full-size layout."""

    stage_widths: tuple = (64, 128, 256, 512)
    num_classes: int = 6
    fsc_channels: int = 64
    decoder_channels: int = 64
    lka_kernel: int = 21
    lka_dilation: int = 3
    use_fsc: bool = True
    in_channels: int = 3

    def __post_init__(self):
        if len(self.stage_widths) != 4 or min(self.stage_widths) < 1:
            raise TensorError("stage_widths must be four positive ints")
        if self.num_classes < 2:
            raise TensorError("num_classes must be >= 2")

    @staticmethod
    def desk(num_classes: int = 6, **overrides) -> "ModelConfig":
        base = dict(stage_widths=(16, 32, 64, 128), num_classes=num_classes)
        base.update(overrides)
        return ModelConfig(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage_widths"] = list(self.stage_widths)
        return d


@dataclass
class FusionGate:
    """Learnable convex-combination weight, sigmoid-mapped to (0, 1)."""

    raw: Tensor

    def alpha_tensor(self) -> Tensor:
        return activation(self.raw, "sigmoid")

    @property
    def alpha(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.raw.data)))


def fuse_weighted(f_r: Tensor, f_l: Tensor, gate: FusionGate,
                  force_alpha: Optional[float] = None) -> Tensor:
    """alpha * F_R + (1 - alpha) * F_L with alpha from the gate.

    ``force_alpha`` bypasses the sigmoid (test hook for exact endpoints).
    """
    if f_r.shape != f_l.shape:
        raise ShapeError(f"fuse_weighted shapes differ: {f_r.shape} vs {f_l.shape}")
    if force_alpha is not None:
        alpha = Tensor(np.asarray(force_alpha, dtype=f_r.dtype))
    else:
        alpha = gate.alpha_tensor()
    one = Tensor(np.asarray(1.0, dtype=f_r.dtype))
    neg = Tensor(np.asarray(-1.0, dtype=f_r.dtype))
    one_minus = elementwise(one, elementwise(alpha, neg, "mul"), "add")
    return elementwise(elementwise(alpha, f_r, "mul"),
                       elementwise(one_minus, f_l, "mul"), "add")


@dataclass
class EncoderTaps:
    """Feature maps at 1/4, 1/8, 1/16, 1/32 of the input."""

    e1: Tensor
    e2: Tensor
    e3: Tensor
    e4: Tensor

    def as_list(self):
        return [self.e1, self.e2, self.e3, self.e4]


class Encoder:
    """Stem (7x7 stride-2 conv, BN, ReLU, 3x3 stride-2 max pool) + 4 stages."""

    def __init__(self, store: ParamStore, cfg: ModelConfig, rng, dtype):
        w1, w2, w3, w4 = cfg.stage_widths
        self.widths = cfg.stage_widths
        self.stem_conv = Conv2d(store, "encoder.stem.conv", cfg.in_channels, w1, 7,
                                stride=2, padding=3, bias=False, rng=rng, dtype=dtype)
        self.stem_bn = BatchNorm2d(store, "encoder.stem.bn", w1, dtype=dtype)
        self.stages = []
        c_prev = w1
        for i, (width, stride) in enumerate(zip(cfg.stage_widths, (1, 2, 2, 2)), start=1):
            blocks = [
                ResBlock(store, f"encoder.stage{i}.block0", c_prev, width,
                         stride=stride, rng=rng, dtype=dtype),
                ResBlock(store, f"encoder.stage{i}.block1", width, width,
                         stride=1, rng=rng, dtype=dtype),
            ]
            self.stages.append(blocks)
            c_prev = width

    def __call__(self, image: Tensor, mode: str) -> EncoderTaps:
        n, c, h, w = image.shape
        if h % 32 or w % 32:
            raise ShapeError(f"input dims {h}x{w} must be divisible by 32")
        x = activation(self.stem_bn(self.stem_conv(image), mode), "relu")
        x = max_pool2d(x, kernel=3, stride=2, padding=1)
        taps = []
        for blocks in self.stages:
            for block in blocks:
                x = block(x, mode)
            taps.append(x)
        return EncoderTaps(*taps)


class DecoderStage:
    """One decoder unit at a fixed scale: FSC gather, LKA block, gated fusion."""

    def __init__(self, store: ParamStore, name: str, cfg: ModelConfig,
                 factor: int, tap_index: int, upsample: bool, rng, dtype):
        c_f, c_d = cfg.fsc_channels, cfg.decoder_channels
        self.name = name
        self.factor = factor
        self.tap_index = tap_index
        self.upsample = upsample
        self.use_fsc = cfg.use_fsc
        if cfg.use_fsc:
            self.fsc_projs = [
                Conv2d(store, f"{name}.fsc.proj{j}", cfg.stage_widths[j], c_f, 1,
                       rng=rng, dtype=dtype)
                for j in range(4)
            ]
            self.merge = Conv2d(store, f"{name}.merge", 4 * c_f + c_d, c_d, 1,
                                rng=rng, dtype=dtype)
        else:
            self.fsc_projs = []
            self.merge = None
        self.block = DecoderBlock(store, f"{name}.block",
                                  LkaConfig(c_d, cfg.lka_kernel, cfg.lka_dilation),
                                  rng=rng, dtype=dtype)
        self.skip_proj = Conv2d(store, f"{name}.skip_proj",
                                cfg.stage_widths[tap_index], c_d, 1, rng=rng, dtype=dtype)
        self.gate = FusionGate(store.add(f"{name}.gate.raw",
                                         np.zeros((), dtype=resolve_dtype(dtype))))

    def gather(self, taps: EncoderTaps) -> Tensor:
        """Rescale all four taps to this stage's scale, unify channels, concat."""
        parts = []
        for j, tap in enumerate(taps.as_list()):
            f_j = TAP_FACTORS[j]
            if f_j < self.factor:
                ratio = self.factor // f_j
                tap = max_pool2d(tap, kernel=ratio, stride=ratio)
            elif f_j > self.factor:
                ref = taps.as_list()[TAP_FACTORS.index(self.factor)]
                tap = bilinear_resize(tap, ref.shape[2], ref.shape[3])
            parts.append(self.fsc_projs[j](tap))
        return concat_channels(parts)

    def __call__(self, prev: Tensor, taps: EncoderTaps, mode: str,
                 force_alpha: Optional[float] = None) -> Tensor:
        if self.use_fsc:
            gathered = self.gather(taps)
            m = self.merge(concat_channels([gathered, prev]))
        else:
            m = prev
        f_l = self.block(m, mode)
        f_r = self.skip_proj(taps.as_list()[self.tap_index])
        fused = fuse_weighted(f_r, f_l, self.gate, force_alpha=force_alpha)
        if self.upsample:
            _, _, h, w = fused.shape
            fused = bilinear_resize(fused, 2 * h, 2 * w)
        return fused


class LKASegModel:
    """Complete network; parameters live in ``self.store``."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype="f32"):
        self.cfg = cfg
        self.dtype = resolve_dtype(dtype)
        self.store = ParamStore()
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC0DE)))
        c_d = cfg.decoder_channels
        self.encoder = Encoder(self.store, cfg, rng, self.dtype)
        self.e4_proj = Conv2d(self.store, "decoder.stem_proj",
                              cfg.stage_widths[3], c_d, 1, rng=rng, dtype=self.dtype)
        self.stages = [
            DecoderStage(self.store, f"decoder.stage{i}", cfg, factor,
                         tap_index=TAP_FACTORS.index(factor),
                         upsample=(factor != STAGE_FACTORS[-1]),
                         rng=rng, dtype=self.dtype)
            for i, factor in enumerate(STAGE_FACTORS)
        ]
        self.head_conv = Conv2d(self.store, "head.conv", c_d, c_d, 3, padding=1,
                                bias=False, rng=rng, dtype=self.dtype)
        self.head_bn = BatchNorm2d(self.store, "head.bn", c_d, dtype=self.dtype)
        self.classifier = Conv2d(self.store, "head.classifier", c_d,
                                 cfg.num_classes, 1, rng=rng, dtype=self.dtype)

    # ---- forward ----------------------------------------------------------

    def encoder_forward(self, image: Tensor, mode: str = "train") -> EncoderTaps:
        return self.encoder(image, mode)

    def forward(self, image: Tensor, mode: str = "train",
                force_alpha: Optional[float] = None) -> Tensor:
        n, c, h, w = image.shape
        if c != self.cfg.in_channels:
            raise ShapeError(f"expected {self.cfg.in_channels} input channels, got {c}")
        taps = self.encoder_forward(image, mode)
        e4p = self.e4_proj(taps.e4)
        prev = bilinear_resize(e4p, 2 * e4p.shape[2], 2 * e4p.shape[3])
        for stage in self.stages:
            prev = stage(prev, taps, mode, force_alpha=force_alpha)
        y = activation(self.head_bn(self.head_conv(prev), mode), "relu")
        logits = self.classifier(y)
        return bilinear_resize(logits, h, w)

    __call__ = forward

    # ---- bookkeeping ------------------------------------------------------

    def gates(self):
        return [stage.gate for stage in self.stages]

    def no_decay_names(self) -> set:
        """Parameters excluded from weight decay: BN affine and gate raws."""
        out = set()
        for name, _ in self.store.trainable_items():
            if name.endswith(".gamma") or name.endswith(".beta") or name.endswith("gate.raw"):
                out.add(name)
        return out

    # ---- analytic cost plan ------------------------------------------------

    def cost_rows(self, h: int, w: int) -> list:
        """Ordered (layer name, params, flops) rows mirroring the forward pass.

        Non-parametric work (activations, pooling, resizing, elementwise) is
        aggregated into explicit "ops" rows using the documented per-element
        constants. The params column sums exactly to the trainable count.
        """
        if h % 32 or w % 32:
            raise ShapeError(f"input dims {h}x{w} must be divisible by 32")
        cfg = self.cfg
        c_d = cfg.decoder_channels
        rows: list[tuple[str, int, int]] = []

        def conv_row(layer: Conv2d, hh, ww):
            rows.append((layer.name, layer.param_count(), layer.flops(hh, ww)))
            return layer.out_hw(hh, ww)

        def bn_row(layer: BatchNorm2d, hh, ww):
            rows.append((layer.name, layer.param_count(), layer.flops(hh, ww)))

        # stem
        h2, w2 = conv_row(self.encoder.stem_conv, h, w)
        bn_row(self.encoder.stem_bn, h2, w2)
        w1 = cfg.stage_widths[0]
        h4, w4 = (h2 + 1) // 2, (w2 + 1) // 2  # 3x3 s2 p1 pool
        rows.append(("encoder.stem.ops",
                     0, FLOPS_RELU * w1 * h2 * w2 + 9 * w1 * h4 * w4))

        # residual stages
        hh, ww = h4, w4
        for blocks in self.encoder.stages:
            for block in blocks:
                ho, wo = block.out_hw(hh, ww)
                for layer in block.layers():
                    if isinstance(layer, Conv2d):
                        hin = (hh, ww) if layer in (block.conv1, block.proj) else (ho, wo)
                        conv_row(layer, *hin)
                    else:
                        bn_row(layer, ho, wo)
                # two ReLUs + residual add
                rows.append((f"{block.name}.ops", 0,
                             (2 * FLOPS_RELU + FLOPS_ADD) * block.c_out * ho * wo))
                hh, ww = ho, wo

        tap_hw = {f: (h // f, w // f) for f in TAP_FACTORS}

        # decoder entry
        h32, w32 = tap_hw[32]
        conv_row(self.e4_proj, h32, w32)
        h16, w16 = tap_hw[16]
        rows.append(("decoder.stem_proj.ops", 0, FLOPS_BILINEAR * c_d * h16 * w16))

        for stage in self.stages:
            th, tw = tap_hw[stage.factor]
            misc = 0
            if stage.use_fsc:
                for j, proj in enumerate(stage.fsc_projs):
                    f_j = TAP_FACTORS[j]
                    width = cfg.stage_widths[j]
                    if f_j < stage.factor:
                        ratio = stage.factor // f_j
                        misc += ratio * ratio * width * th * tw
                    elif f_j > stage.factor:
                        misc += FLOPS_BILINEAR * width * th * tw
                    conv_row(proj, th, tw)
                conv_row(stage.merge, th, tw)
            blk = stage.block
            bn_row(blk.bn, th, tw)
            conv_row(blk.pw1, th, tw)
            conv_row(blk.lka.dw, th, tw)
            conv_row(blk.lka.dwd, th, tw)
            conv_row(blk.lka.pw, th, tw)
            conv_row(blk.pw2, th, tw)
            misc += (FLOPS_MUL + FLOPS_GELU + FLOPS_ADD) * c_d * th * tw  # gate mul, gelu, residual
            conv_row(stage.skip_proj, th, tw)
            misc += FLOPS_SIGMOID + (2 * FLOPS_MUL + FLOPS_ADD) * c_d * th * tw  # fusion
            if stage.upsample:
                misc += FLOPS_BILINEAR * c_d * (2 * th) * (2 * tw)
            rows.append((f"{stage.name}.gate", 1, 0))
            rows.append((f"{stage.name}.ops", 0, misc))

        # head
        hq, wq = tap_hw[4]
        conv_row(self.head_conv, hq, wq)
        bn_row(self.head_bn, hq, wq)
        conv_row(self.classifier, hq, wq)
        rows.append(("head.ops", 0,
                     FLOPS_RELU * c_d * hq * wq + FLOPS_BILINEAR * cfg.num_classes * h * w))
        return rows
