"""Parameterized layers, the residual block, and checkpoint I/O.

Parameters live in a ParamStore keyed by hierarchical dot-separated names;
layers register themselves at construction time, which fixes a deterministic
iteration order shared by the optimizer and the checkpoint format.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .tensor import (ConvSpec, ShapeError, Tensor, TensorError, activation,
                     batch_norm, conv2d, elementwise, resolve_dtype)


class CheckpointError(TensorError):
    """Malformed or inconsistent checkpoint file."""


@dataclass
class Param:
    tensor: Tensor
    trainable: bool


class ParamStore:
    """Ordered map from hierarchical names to tensors with a trainable flag."""

    def __init__(self):
        self._items: dict[str, Param] = {}

    def add(self, name: str, data: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self._items:
            raise TensorError(f"duplicate parameter name {name!r}")
        t = Tensor(data, requires_grad=trainable)
        self._items[name] = Param(t, trainable)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._items[name].tensor

    def __contains__(self, name: str) -> bool:
        return name in self._items

    def __len__(self) -> int:
        return len(self._items)

    def items(self) -> Iterator[tuple[str, Param]]:
        return iter(self._items.items())

    def names(self) -> list[str]:
        return list(self._items)

    def trainable_items(self) -> Iterator[tuple[str, Tensor]]:
        for name, p in self._items.items():
            if p.trainable:
                yield name, p.tensor

    def num_trainable(self) -> int:
        return sum(p.tensor.data.size for p in self._items.values() if p.trainable)

    def zero_grads(self) -> None:
        for p in self._items.values():
            p.tensor.zero_grad()

    def copy_from(self, other: "ParamStore", prefix: str = "") -> None:
        """Load matching entries from ``other`` in place; shapes must agree."""
        for name, p in self._items.items():
            key = prefix + name
            if key not in other:
                raise CheckpointError(f"checkpoint is missing tensor {key!r}")
            src = other[key].data
            if src.shape != p.tensor.data.shape:
                raise CheckpointError(
                    f"shape conflict for {key!r}: checkpoint {src.shape} vs model {p.tensor.data.shape}")
            p.tensor.data[...] = src.astype(p.tensor.dtype)


# ---------------------------------------------------------------------------
# checkpoint format: magic "LKC1", u32 tensor count, then per tensor:
# u16 name length, UTF-8 name, u8 flag (1 trainable / 0 buffer), u8 dtype
# (0=f32, 1=f64), u8 rank, rank x u32 dims, raw little-endian payload.

_MAGIC = b"LKC1"
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def save_checkpoint(store: ParamStore, path) -> None:
    chunks = [_MAGIC, struct.pack("<I", len(store))]
    for name, p in store.items():
        raw = name.encode("utf-8")
        arr = p.tensor.data
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<BBB", 1 if p.trainable else 0,
                                  _DTYPE_CODES[arr.dtype], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype(arr.dtype.newbyteorder("<")).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path) -> ParamStore:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise CheckpointError(f"bad magic at byte 0: {blob[:4]!r}")
    off = 4

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(blob):
            raise CheckpointError(f"truncated checkpoint: {what} at byte {off}")
        piece = blob[off: off + n]
        off += n
        return piece

    (count,) = struct.unpack("<I", take(4, "tensor count"))
    store = ParamStore()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        flag, dtype_code, rank = struct.unpack("<BBB", take(3, "tensor header"))
        if dtype_code not in _CODE_DTYPES:
            raise CheckpointError(f"unknown dtype code {dtype_code} at byte {off}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        dt = _CODE_DTYPES[dtype_code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize if rank else dt.itemsize
        data = np.frombuffer(take(nbytes, f"payload of {name!r}"), dtype=dt).reshape(dims)
        store.add(name, data.copy(), trainable=bool(flag))
    if off != len(blob):
        raise CheckpointError(f"trailing bytes after tensor {count} at byte {off}")
    return store


# ---------------------------------------------------------------------------
# layers


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d:
    """Convolution layer owning its weight (and optional bias) in the store."""

    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int,
                 kernel: int, stride: int = 1, padding: int = 0, dilation: int = 1,
                 groups: int = 1, bias: bool = True,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        dtype = resolve_dtype(dtype)
        self.name = name
        self.c_in, self.c_out, self.groups = c_in, c_out, groups
        self.spec = ConvSpec(kernel, kernel, stride, padding, dilation, groups)
        fan_in = (c_in // groups) * kernel * kernel
        shape = (c_out, c_in // groups, kernel, kernel)
        w = (kaiming_uniform(rng, shape, fan_in, dtype) if rng is not None
             else np.zeros(shape, dtype=dtype))
        self.weight = store.add(f"{name}.weight", w)
        self.bias = store.add(f"{name}.bias", np.zeros(c_out, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.spec)

    def param_count(self) -> int:
        n = self.weight.data.size
        return n + (self.bias.data.size if self.bias is not None else 0)

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        return self.spec.out_hw(h, w)

    def flops(self, h: int, w: int) -> int:
        oh, ow = self.out_hw(h, w)
        k2 = self.spec.kernel_h * self.spec.kernel_w
        macs = k2 * (self.c_in // self.groups) * self.c_out * oh * ow
        return 2 * macs  # 1 MAC = 2 FLOPs


class BatchNorm2d:
    """Batch normalization with trainable affine and running-stat buffers."""

    def __init__(self, store: ParamStore, name: str, channels: int,
                 momentum: float = 0.1, epsilon: float = 1e-5, dtype=np.float32):
        dtype = resolve_dtype(dtype)
        self.name = name
        self.channels = channels
        self.momentum = momentum
        self.epsilon = epsilon
        self.gamma = store.add(f"{name}.gamma", np.ones(channels, dtype=dtype))
        self.beta = store.add(f"{name}.beta", np.zeros(channels, dtype=dtype))
        self.running_mean = store.add(f"{name}.running_mean",
                                      np.zeros(channels, dtype=dtype), trainable=False)
        self.running_var = store.add(f"{name}.running_var",
                                     np.ones(channels, dtype=dtype), trainable=False)

    def __call__(self, x: Tensor, mode: str = "train") -> Tensor:
        return batch_norm(x, self.gamma, self.beta,
                          self.running_mean.data, self.running_var.data,
                          mode=mode, momentum=self.momentum, epsilon=self.epsilon)

    def param_count(self) -> int:
        return 2 * self.channels  # trainable affine; buffers reported separately

    def flops(self, h: int, w: int, n_elems_per_hw: Optional[int] = None) -> int:
        return 2 * self.channels * h * w  # eval-mode scale + shift per element


class ResBlock:
    """Two 3x3 conv+BN stages with ReLU and an optional projection shortcut."""

    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int,
                 stride: int = 1, rng=None, dtype=np.float32):
        self.name = name
        self.c_in, self.c_out, self.stride = c_in, c_out, stride
        self.conv1 = Conv2d(store, f"{name}.conv1", c_in, c_out, 3, stride=stride,
                            padding=1, bias=False, rng=rng, dtype=dtype)
        self.bn1 = BatchNorm2d(store, f"{name}.bn1", c_out, dtype=dtype)
        self.conv2 = Conv2d(store, f"{name}.conv2", c_out, c_out, 3, padding=1,
                            bias=False, rng=rng, dtype=dtype)
        self.bn2 = BatchNorm2d(store, f"{name}.bn2", c_out, dtype=dtype)
        # identity-start residual: the block begins as a pass-through, which
        # speeds up early optimization without changing the architecture
        self.bn2.gamma.data[...] = 0.0
        if stride != 1 or c_in != c_out:
            self.proj = Conv2d(store, f"{name}.proj", c_in, c_out, 1, stride=stride,
                               bias=False, rng=rng, dtype=dtype)
            self.bn_proj = BatchNorm2d(store, f"{name}.bn_proj", c_out, dtype=dtype)
        else:
            self.proj = None
            self.bn_proj = None

    def __call__(self, x: Tensor, mode: str = "train") -> Tensor:
        if x.shape[1] != self.c_in:
            raise ShapeError(f"{self.name}: expected {self.c_in} channels, got {x.shape[1]}")
        y = activation(self.bn1(self.conv1(x), mode), "relu")
        y = self.bn2(self.conv2(y), mode)
        shortcut = self.bn_proj(self.proj(x), mode) if self.proj is not None else x
        return activation(elementwise(y, shortcut, "add"), "relu")

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        return self.conv1.out_hw(h, w)

    def layers(self):
        out = [self.conv1, self.bn1, self.conv2, self.bn2]
        if self.proj is not None:
            out.extend([self.proj, self.bn_proj])
        return out


def linear_project(x: Tensor, weight: Tensor, bias: Optional[Tensor]) -> Tensor:
    """Per-pixel channel mixing: a 1x1 convolution."""
    return conv2d(x, weight, bias, ConvSpec(1, 1))
