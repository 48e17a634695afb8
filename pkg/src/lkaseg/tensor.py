"""Dense rank-4 tensor type with reverse-mode differentiation.

Everything downstream (layers, the segmentation model, the training loop)
is built from the ops in this module. Tensors wrap contiguous numpy arrays
in NCHW layout; each op returns a new Tensor carrying an OpNode so that
``backward`` can replay the tape in reverse topological order.

Conventions:
  - zero padding for convolutions,
  - half-pixel-center sampling for bilinear resize,
  - finite outputs are enforced after every op (NaN/Inf raises).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import erf, expit


class TensorError(ValueError):
    """Base class for tensor-level failures."""


class ShapeError(TensorError):
    """Operands have incompatible shapes or an op yields an empty output."""


class NumericsError(TensorError):
    """A non-finite value appeared where the contract requires finiteness."""


DTYPES = {"f32": np.float32, "f64": np.float64}


def resolve_dtype(dtype) -> np.dtype:
    if isinstance(dtype, str):
        if dtype not in DTYPES:
            raise TensorError(f"unknown dtype {dtype!r}; expected 'f32' or 'f64'")
        return np.dtype(DTYPES[dtype])
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise TensorError(f"unsupported dtype {dt}; expected float32 or float64")
    return dt


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values produced by {what}")


@dataclass
class OpNode:
    """Record of one forward op: kind, inputs, and the adjoint closure."""

    op: str
    parents: tuple
    backward_fn: Optional[Callable[[np.ndarray], None]]


class Tensor:
    """Dense array of float32/float64 values with an optional grad slot."""

    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data, requires_grad: bool = False, node: Optional[OpNode] = None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        # np.ascontiguousarray promotes rank-0 to rank-1; keep scalars rank-0.
        self.data = np.ascontiguousarray(arr) if arr.ndim else arr.copy()
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.node = node
        _check_finite(self.data, node.op if node else "tensor construction")

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def item(self) -> float:
        return float(self.data)

    def sum(self) -> "Tensor":
        return tensor_sum(self)

    def __add__(self, other):
        return elementwise(self, _as_tensor(other, self.dtype), "add")

    def __mul__(self, other):
        return elementwise(self, _as_tensor(other, self.dtype), "mul")

    __radd__ = __add__
    __rmul__ = __mul__

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, grad={self.requires_grad})"


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.astype(t.dtype, copy=True)
    else:
        t.grad += g


def _make(data: np.ndarray, op: str, parents: Sequence[Tensor],
          backward_fn: Optional[Callable]) -> Tensor:
    req = any(p.requires_grad for p in parents)
    node = OpNode(op, tuple(parents), backward_fn if req else None)
    return Tensor(data, requires_grad=req, node=node)


def backward(root: Tensor, seed: Optional[np.ndarray] = None) -> None:
    """Reverse-topological gradient accumulation from ``root``.

    Every leaf with ``requires_grad`` receives a ``.grad`` array of its own
    shape. ``seed`` defaults to ones of the root's shape.
    """
    topo: list[Tensor] = []
    state: dict[int, int] = {}  # 0 = on stack, 1 = done
    stack = [root]
    while stack:
        t = stack[-1]
        key = id(t)
        if key not in state:
            state[key] = 0
            if t.node is not None:
                for p in t.node.parents:
                    if id(p) not in state:
                        stack.append(p)
                    elif state[id(p)] == 0 and p is not t:
                        # parent still open further down the stack: a true
                        # cycle cannot occur with immutable ops, but guard it
                        pass
        else:
            stack.pop()
            if state[key] == 0:
                state[key] = 1
                topo.append(t)

    if seed is None:
        seed = np.ones(root.shape, dtype=root.dtype)
    else:
        seed = np.asarray(seed, dtype=root.dtype)
        if seed.shape != root.data.shape:
            raise ShapeError("seed gradient shape must match root shape")
    root.grad = seed.copy() if root.grad is None else root.grad + seed

    for t in reversed(topo):
        if t.node is None or t.node.backward_fn is None:
            continue
        if t.grad is None:
            continue
        t.node.backward_fn(t.grad)


# ---------------------------------------------------------------------------
# convolution


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a 2-D convolution: kernel, stride, padding, dilation, groups."""

    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0
    dilation: int = 1
    groups: int = 1

    def __post_init__(self):
        if min(self.kernel_h, self.kernel_w, self.stride, self.dilation, self.groups) < 1:
            raise ShapeError(f"invalid conv spec {self}")
        if self.padding < 0:
            raise ShapeError("padding must be non-negative")

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        oh = (h + 2 * self.padding - self.dilation * (self.kernel_h - 1) - 1) // self.stride + 1
        ow = (w + 2 * self.padding - self.dilation * (self.kernel_w - 1) - 1) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ShapeError(f"conv output would be empty for input {h}x{w} with {self}")
        return oh, ow


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, dilation: int,
             oh: int, ow: int) -> np.ndarray:
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    return as_strided(
        xp,
        shape=(n, c, kh, kw, oh, ow),
        strides=(sn, sc, sh * dilation, sw * dilation, sh * stride, sw * stride),
        writeable=False,
    )


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor], spec: ConvSpec) -> Tensor:
    """Grouped, strided, dilated 2-D convolution with zero padding.

    ``weight`` has shape (C_out, C_in/groups, k_h, k_w). With groups == C_in
    == C_out this is a depthwise convolution; with a 1x1 kernel it is a
    pointwise (channel-mixing) convolution.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("conv2d expects rank-4 input and weight")
    n, c_in, h, w = x.shape
    c_out, c_in_g, kh, kw = weight.shape
    g = spec.groups
    if (kh, kw) != (spec.kernel_h, spec.kernel_w):
        raise ShapeError(f"weight kernel {kh}x{kw} does not match spec {spec.kernel_h}x{spec.kernel_w}")
    if c_in % g != 0 or c_out % g != 0:
        raise ShapeError(f"groups={g} must divide C_in={c_in} and C_out={c_out}")
    if c_in_g != c_in // g:
        raise ShapeError(f"weight expects C_in/groups={c_in_g}, got {c_in // g}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"bias shape {bias.shape} != ({c_out},)")
    oh, ow = spec.out_hw(h, w)

    p = spec.padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    win = _windows(xp, kh, kw, spec.stride, spec.dilation, oh, ow)
    cig = c_in // g
    cog = c_out // g
    kk = cig * kh * kw
    ll = oh * ow
    # im2col: (N, G, cig*kh*kw, oh*ow), contiguous so matmul hits BLAS
    cols = np.ascontiguousarray(
        win.reshape(n, g, cig, kh, kw, oh, ow).reshape(n, g, kk, ll))
    wmat = weight.data.reshape(g, cog, kk)
    out = np.matmul(wmat[None], cols)  # (N, G, cog, L)
    out = np.ascontiguousarray(out.reshape(n, c_out, oh, ow))
    if bias is not None:
        out += bias.data[None, :, None, None]

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(gy: np.ndarray) -> None:
        gym = np.ascontiguousarray(gy.reshape(n, g, cog, ll))
        if weight.requires_grad:
            gw = np.matmul(gym, cols.transpose(0, 1, 3, 2)).sum(axis=0)
            _accum(weight, gw.reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            _accum(bias, gy.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gcols = np.matmul(wmat.transpose(0, 2, 1)[None], gym)
            gcols = gcols.reshape(n, g * cig, kh, kw, oh, ow)
            gxp = np.zeros_like(xp)
            s, d = spec.stride, spec.dilation
            for ky in range(kh):
                for kx in range(kw):
                    gxp[:, :,
                        ky * d: ky * d + s * oh: s,
                        kx * d: kx * d + s * ow: s] += gcols[:, :, ky, kx]
            gx = gxp[:, :, p: p + h, p: p + w] if p else gxp
            _accum(x, gx)

    return _make(out, "conv2d", parents, backward_fn)


# ---------------------------------------------------------------------------
# pooling / resizing


def max_pool2d(x: Tensor, kernel: int, stride: int, padding: int = 0) -> Tensor:
    """Window max over kernel x kernel patches; padding uses -inf sentinels."""
    if x.ndim != 4:
        raise ShapeError("max_pool2d expects a rank-4 tensor")
    if kernel < 1 or stride < 1:
        raise ShapeError("kernel and stride must be positive")
    if padding < 0 or padding >= kernel:
        raise ShapeError("padding must satisfy 0 <= padding < kernel")
    n, c, h, w = x.shape
    hp, wp = h + 2 * padding, w + 2 * padding
    if hp < kernel or wp < kernel:
        raise ShapeError(f"pool kernel {kernel} exceeds spatial dims {h}x{w} (padding {padding})")
    oh = (hp - kernel) // stride + 1
    ow = (wp - kernel) // stride + 1

    if padding:
        xp = np.full((n, c, hp, wp), -np.inf, dtype=x.dtype)
        xp[:, :, padding: padding + h, padding: padding + w] = x.data
    else:
        xp = x.data
    win = _windows(xp, kernel, kernel, stride, 1, oh, ow)
    flat = win.reshape(n, c, kernel * kernel, oh, ow)
    idx = flat.argmax(axis=2)
    out = np.take_along_axis(flat, idx[:, :, None], axis=2)[:, :, 0]
    out = np.ascontiguousarray(out)

    def backward_fn(gy: np.ndarray) -> None:
        if not x.requires_grad:
            return
        rows = idx // kernel + np.arange(oh)[:, None] * stride
        cols = idx % kernel + np.arange(ow) * stride
        gxp = np.zeros((n, c, hp, wp), dtype=x.dtype)
        ni = np.arange(n)[:, None, None, None]
        ci = np.arange(c)[None, :, None, None]
        np.add.at(gxp, (ni, ci, rows, cols), gy)
        gx = gxp[:, :, padding: padding + h, padding: padding + w] if padding else gxp
        _accum(x, gx)

    return _make(out, "max_pool2d", (x,), backward_fn)


def _resize_axis(n_in: int, n_out: int, dtype):
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * n_in / n_out - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = (src - i0).astype(dtype)
    return i0, i1, frac


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Half-pixel-center bilinear resampling.

    Exact identity when output dims equal input dims, and exactly constant-
    preserving (the blend is computed as nested lerps, so zero differences
    never perturb the base value).
    """
    if x.ndim != 4:
        raise ShapeError("bilinear_resize expects a rank-4 tensor")
    if out_h < 1 or out_w < 1:
        raise ShapeError("output dims must be positive")
    n, c, h, w = x.shape
    y0, y1, wy = _resize_axis(h, out_h, x.dtype)
    x0, x1, wx = _resize_axis(w, out_w, x.dtype)

    v00 = x.data[:, :, y0[:, None], x0[None, :]]
    v01 = x.data[:, :, y0[:, None], x1[None, :]]
    v10 = x.data[:, :, y1[:, None], x0[None, :]]
    v11 = x.data[:, :, y1[:, None], x1[None, :]]
    wxb = wx[None, None, None, :]
    wyb = wy[None, None, :, None]
    top = v00 + wxb * (v01 - v00)
    bot = v10 + wxb * (v11 - v10)
    out = np.ascontiguousarray(top + wyb * (bot - top))

    def backward_fn(gy: np.ndarray) -> None:
        if not x.requires_grad:
            return
        gx = np.zeros_like(x.data)
        ni = np.arange(n)[:, None, None, None]
        ci = np.arange(c)[None, :, None, None]
        y0g, y1g = y0[:, None], y1[:, None]
        x0g, x1g = x0[None, :], x1[None, :]
        w00 = (1 - wyb) * (1 - wxb)
        w01 = (1 - wyb) * wxb
        w10 = wyb * (1 - wxb)
        w11 = wyb * wxb
        np.add.at(gx, (ni, ci, y0g, x0g), gy * w00)
        np.add.at(gx, (ni, ci, y0g, x1g), gy * w01)
        np.add.at(gx, (ni, ci, y1g, x0g), gy * w10)
        np.add.at(gx, (ni, ci, y1g, x1g), gy * w11)
        _accum(x, gx)

    return _make(out, "bilinear_resize", (x,), backward_fn)


# ---------------------------------------------------------------------------
# normalization / activations / elementwise


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running_mean: np.ndarray, running_var: np.ndarray,
               mode: str = "train", momentum: float = 0.1,
               epsilon: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over (N, H, W).

    Train mode normalizes by batch statistics (population variance) and
    updates the running buffers in place; eval mode uses the buffers.
    """
    if epsilon <= 0:
        raise TensorError("epsilon must be positive")
    if x.ndim != 4:
        raise ShapeError("batch_norm expects a rank-4 tensor")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError("gamma/beta must have shape (C,)")
    if mode not in ("train", "eval"):
        raise TensorError(f"unknown mode {mode!r}")
    axes = (0, 2, 3)

    if mode == "train":
        if n * h * w == 0:
            raise ShapeError("zero-size batch in train mode")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean.astype(x.dtype)
        var = running_var.astype(x.dtype)

    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = (x.data - mu[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def backward_fn(gy: np.ndarray) -> None:
        if gamma.requires_grad:
            _accum(gamma, (gy * xhat).sum(axis=axes))
        if beta.requires_grad:
            _accum(beta, gy.sum(axis=axes))
        if x.requires_grad:
            gscaled = gy * gamma.data[None, :, None, None]
            if mode == "train":
                m = gscaled.mean(axis=axes, keepdims=True)
                mh = (gscaled * xhat).mean(axis=axes, keepdims=True)
                gx = inv_std[None, :, None, None] * (gscaled - m - xhat * mh)
            else:
                gx = gscaled * inv_std[None, :, None, None]
            _accum(x, gx)

    return _make(out, f"batch_norm[{mode}]", (x, gamma, beta), backward_fn)


_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise nonlinearity: relu, gelu (exact Gaussian CDF), or sigmoid."""
    if kind == "relu":
        out = np.maximum(x.data, 0)

        def backward_fn(gy):
            _accum(x, gy * (x.data > 0))
    elif kind == "sigmoid":
        out = expit(x.data)

        def backward_fn(gy):
            _accum(x, gy * out * (1.0 - out))
    elif kind == "gelu":
        cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
        out = x.data * cdf

        def backward_fn(gy):
            pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
            _accum(x, gy * (cdf + x.data * pdf))
    else:
        raise TensorError(f"unknown activation kind {kind!r}")
    return _make(out.astype(x.dtype, copy=False), f"activation[{kind}]", (x,), backward_fn)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    """Elementwise add or mul. Shapes must be numpy-broadcast compatible."""
    try:
        bshape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"elementwise shapes {a.shape} and {b.shape}: {exc}") from None
    _ = bshape
    if kind == "add":
        out = a.data + b.data

        def backward_fn(gy):
            _accum(a, _unbroadcast(gy, a.shape))
            _accum(b, _unbroadcast(gy, b.shape))
    elif kind == "mul":
        out = a.data * b.data

        def backward_fn(gy):
            _accum(a, _unbroadcast(gy * b.data, a.shape))
            _accum(b, _unbroadcast(gy * a.data, b.shape))
    else:
        raise TensorError(f"unknown elementwise kind {kind!r}")
    return _make(out, f"elementwise[{kind}]", (a, b), backward_fn)


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate rank-4 tensors along the channel axis, order preserved."""
    if not parts:
        raise ShapeError("concat_channels requires at least one part")
    n, _, h, w = parts[0].shape
    for p in parts:
        if p.ndim != 4 or p.shape[0] != n or p.shape[2:] != (h, w):
            raise ShapeError("concat_channels parts must share N, H, W")
    out = np.concatenate([p.data for p in parts], axis=1)
    splits = np.cumsum([p.shape[1] for p in parts])[:-1]

    def backward_fn(gy):
        for p, g in zip(parts, np.split(gy, splits, axis=1)):
            _accum(p, g)

    return _make(out, "concat_channels", tuple(parts), backward_fn)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    """Channel slice [start, stop); the adjoint of concat_channels."""
    if not (0 <= start < stop <= x.shape[1]):
        raise ShapeError(f"invalid channel slice [{start}, {stop}) for C={x.shape[1]}")
    out = np.ascontiguousarray(x.data[:, start:stop])

    def backward_fn(gy):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[:, start:stop] = gy
            _accum(x, gx)

    return _make(out, "slice_channels", (x,), backward_fn)


def tensor_sum(x: Tensor) -> Tensor:
    """Sum of all elements as a rank-0 tensor (scalar loss helper)."""
    out = x.data.sum()

    def backward_fn(gy):
        _accum(x, np.broadcast_to(gy, x.shape))

    return _make(np.asarray(out, dtype=x.dtype), "sum", (x,), backward_fn)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray, ignore_label: int = 255) -> Tensor:
    """Mean per-pixel cross entropy over non-ignored pixels.

    ``labels`` is an integer (N, H, W) map; pixels whose label equals
    ``ignore_label`` contribute neither to the loss nor to the gradient.
    """
    if logits.ndim != 4:
        raise ShapeError("logits must be rank-4 (N, classes, H, W)")
    n, k, h, w = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n, h, w):
        raise ShapeError(f"labels shape {labels.shape} != {(n, h, w)}")
    mask = labels != ignore_label
    if not mask.any():
        raise TensorError("all pixels carry the ignore label")
    safe = np.where(mask, labels, 0)
    if safe.min() < 0 or safe.max() >= k:
        raise TensorError("labels out of range for the class count")

    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    denom = ez.sum(axis=1, keepdims=True)
    logp = (z - zmax) - np.log(denom)
    ni = np.arange(n)[:, None, None]
    hi = np.arange(h)[None, :, None]
    wi = np.arange(w)[None, None, :]
    picked = logp[ni, safe, hi, wi]
    count = int(mask.sum())
    loss = -(picked * mask).sum() / count

    def backward_fn(gy):
        if not logits.requires_grad:
            return
        p = ez / denom
        g = p.copy()
        g[ni, safe, hi, wi] -= 1.0
        g *= (mask / count)[:, None, :, :]
        _accum(logits, g * gy)

    return _make(np.asarray(loss, dtype=logits.dtype), "softmax_cross_entropy",
                 (logits,), backward_fn)


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class FiniteDiffReport:
    """Result of comparing analytic gradients against central differences."""

    max_abs_err: float
    max_rel_err: float
    n_checked: int

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_err <= tolerance


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor],
                      step: float = 1e-4, atol: float = 1e-8,
                      sample: Optional[int] = None, rng=None) -> FiniteDiffReport:
    """Check analytic gradients of scalar-valued ``f`` w.r.t. ``params``.

    ``f`` must be a deterministic closure over ``params`` returning a rank-0
    tensor. For each parameter element (all of them, or ``sample`` random
    ones per tensor) the central difference is compared with the accumulated
    backward gradient. Relative error uses max(|analytic|, |numeric|) as the
    denominator; element pairs whose absolute difference is below ``atol``
    count as exact.
    """
    for p in params:
        p.zero_grad()
    out = f()
    if out.shape != ():
        raise ShapeError("finite_diff_check expects a scalar-valued function")
    backward(out)

    max_abs = 0.0
    max_rel = 0.0
    n_checked = 0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        n_elems = flat.size
        if sample is not None and sample < n_elems:
            if rng is None:
                rng = np.random.default_rng(0)
            indices = rng.choice(n_elems, size=sample, replace=False)
        else:
            indices = range(n_elems)
        aflat = analytic.reshape(-1)
        for i in indices:
            orig = flat[i]
            flat[i] = orig + step
            hi = float(f().data)
            flat[i] = orig - step
            lo = float(f().data)
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * step)
            a = float(aflat[i])
            abs_err = abs(a - numeric)
            max_abs = max(max_abs, abs_err)
            if abs_err >= atol:
                rel = abs_err / max(abs(a), abs(numeric), atol)
                max_rel = max(max_rel, rel)
            n_checked += 1
    return FiniteDiffReport(max_abs_err=max_abs, max_rel_err=max_rel, n_checked=n_checked)
