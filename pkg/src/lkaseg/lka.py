"""Large-kernel attention block and its decomposition arithmetic.

A nominal KxK spatial aggregation is decomposed into a small depthwise
convolution, a dilated depthwise convolution, and a pointwise convolution;
the composite output gates the input elementwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import BatchNorm2d, Conv2d, ParamStore
from .tensor import ShapeError, Tensor, TensorError, activation, elementwise


@dataclass(frozen=True)
class LkaConfig:
    """Channel count, nominal kernel, and dilation of the decomposition."""

    channels: int
    kernel: int = 21
    dilation: int = 3

    def __post_init__(self):
        if self.channels < 1:
            raise TensorError("channels must be positive")
        if self.kernel < 3 or self.kernel % 2 == 0:
            raise TensorError("nominal kernel must be odd and >= 3")
        if not 1 <= self.dilation <= self.kernel:
            raise TensorError("dilation must be in [1, kernel]")

    @property
    def k_local(self) -> int:
        return 2 * self.dilation - 1

    @property
    def k_dilated(self) -> int:
        k = math.ceil(self.kernel / self.dilation)
        return k if k % 2 == 1 else k + 1  # symmetric padding needs odd kernels

    @property
    def receptive_field(self) -> int:
        return self.k_local + self.dilation * (self.k_dilated - 1)


def lka_param_count(cfg: LkaConfig) -> int:
    """Weights plus biases of the three decomposed convolutions."""
    c = cfg.channels
    return c * cfg.k_local ** 2 + c * cfg.k_dilated ** 2 + c * c + 3 * c


class LkaBlock:
    """depthwise -> dilated depthwise -> pointwise, gating the input."""

    def __init__(self, store: ParamStore, name: str, cfg: LkaConfig,
                 rng=None, dtype=np.float32):
        self.name = name
        self.cfg = cfg
        c = cfg.channels
        self.dw = Conv2d(store, f"{name}.dw", c, c, cfg.k_local,
                         padding=(cfg.k_local - 1) // 2, groups=c, rng=rng, dtype=dtype)
        self.dwd = Conv2d(store, f"{name}.dwd", c, c, cfg.k_dilated,
                          padding=cfg.dilation * (cfg.k_dilated - 1) // 2,
                          dilation=cfg.dilation, groups=c, rng=rng, dtype=dtype)
        self.pw = Conv2d(store, f"{name}.pw", c, c, 1, rng=rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.cfg.channels:
            raise ShapeError(f"{self.name}: expected {self.cfg.channels} channels, got {x.shape[1]}")
        attention = self.pw(self.dwd(self.dw(x)))
        return elementwise(attention, x, "mul")

    def set_identity_attention(self) -> None:
        """Force the attention map to exactly 1 so the block passes input through."""
        self.pw.weight.data[...] = 0.0
        self.pw.bias.data[...] = 1.0

    def set_zero_attention(self) -> None:
        for conv in (self.dw, self.dwd, self.pw):
            conv.weight.data[...] = 0.0
            conv.bias.data[...] = 0.0

    def layers(self):
        return [self.dw, self.dwd, self.pw]

    def param_count(self) -> int:
        return sum(l.param_count() for l in self.layers())


def lka_forward(x: Tensor, block: LkaBlock) -> Tensor:
    return block(x)


class DecoderBlock:
    """Residual wrapper around LKA: bn -> 1x1 -> LKA -> GELU -> 1x1 -> +x."""

    def __init__(self, store: ParamStore, name: str, cfg: LkaConfig,
                 rng=None, dtype=np.float32):
        self.name = name
        self.cfg = cfg
        c = cfg.channels
        self.bn = BatchNorm2d(store, f"{name}.bn", c, dtype=dtype)
        self.pw1 = Conv2d(store, f"{name}.pw1", c, c, 1, rng=rng, dtype=dtype)
        self.lka = LkaBlock(store, f"{name}.lka", cfg, rng=rng, dtype=dtype)
        self.pw2 = Conv2d(store, f"{name}.pw2", c, c, 1, rng=rng, dtype=dtype)
        # identity-start residual (see ResBlock): branch output begins at zero
        self.pw2.weight.data[...] = 0.0
        if self.pw2.bias is not None:
            self.pw2.bias.data[...] = 0.0

    def __call__(self, x: Tensor, mode: str = "train") -> Tensor:
        y = self.pw1(self.bn(x, mode))
        y = activation(self.lka(y), "gelu")
        y = self.pw2(y)
        return elementwise(x, y, "add")

    def layers(self):
        return [self.bn, self.pw1, *self.lka.layers(), self.pw2]
