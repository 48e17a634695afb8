"""Finite-difference verification suites for ops, LKA blocks, and the model.

All checks run in f64. Each suite returns (name, report, tolerance) triples;
a check passes when the report's max relative error is within tolerance.
"""

from __future__ import annotations

import numpy as np

from .lka import DecoderBlock, LkaBlock, LkaConfig
from .model import LKASegModel, ModelConfig, FusionGate, fuse_weighted
from .nn import ParamStore
from .tensor import (ConvSpec, FiniteDiffReport, Tensor, activation,
                     batch_norm, bilinear_resize, concat_channels, conv2d,
                     elementwise, finite_diff_check, max_pool2d,
                     slice_channels, softmax_cross_entropy, tensor_sum)

OP_TOL = 1e-4
MODEL_TOL = 1e-3


def _t(rng, *shape, grad=True, scale=1.0):
    return Tensor(scale * rng.standard_normal(shape), requires_grad=grad)


def run_ops_checks(step: float = 1e-5) -> list:
    rng = np.random.default_rng(11)
    checks = []

    x = _t(rng, 1, 4, 6, 6)
    w = _t(rng, 3, 4, 3, 3, scale=0.5)
    b = _t(rng, 3, scale=0.5)
    spec = ConvSpec(3, 3, stride=1, padding=1)
    checks.append(("conv2d/basic",
                   finite_diff_check(lambda: tensor_sum(conv2d(x, w, b, spec)),
                                     [x, w, b], step=step), OP_TOL))

    xg = _t(rng, 2, 4, 7, 7)
    wg = _t(rng, 4, 2, 3, 3, scale=0.5)
    spec_g = ConvSpec(3, 3, stride=2, padding=2, dilation=2, groups=2)
    checks.append(("conv2d/grouped-dilated-strided",
                   finite_diff_check(lambda: tensor_sum(conv2d(xg, wg, None, spec_g)),
                                     [xg, wg], step=step), OP_TOL))

    xd = _t(rng, 1, 3, 5, 5)
    wd = _t(rng, 3, 1, 3, 3, scale=0.5)
    spec_d = ConvSpec(3, 3, padding=1, groups=3)
    checks.append(("conv2d/depthwise",
                   finite_diff_check(lambda: tensor_sum(conv2d(xd, wd, None, spec_d)),
                                     [xd, wd], step=step), OP_TOL))

    # pooling: weight the output so distinct elements matter; inputs are
    # drawn continuous, so argmax ties have probability zero
    xp = _t(rng, 1, 2, 6, 6)
    wmask = Tensor(rng.standard_normal((1, 2, 3, 3)))
    checks.append(("max_pool2d",
                   finite_diff_check(
                       lambda: tensor_sum(elementwise(max_pool2d(xp, 2, 2), wmask, "mul")),
                       [xp], step=step), OP_TOL))

    xb = _t(rng, 1, 2, 4, 5)
    wup = Tensor(rng.standard_normal((1, 2, 7, 9)))
    checks.append(("bilinear_resize/up",
                   finite_diff_check(
                       lambda: tensor_sum(elementwise(bilinear_resize(xb, 7, 9), wup, "mul")),
                       [xb], step=step), OP_TOL))
    wdn = Tensor(rng.standard_normal((1, 2, 2, 3)))
    checks.append(("bilinear_resize/down",
                   finite_diff_check(
                       lambda: tensor_sum(elementwise(bilinear_resize(xb, 2, 3), wdn, "mul")),
                       [xb], step=step), OP_TOL))

    xn = _t(rng, 3, 2, 4, 4)
    gamma = Tensor(1.0 + 0.1 * rng.standard_normal(2), requires_grad=True)
    beta = _t(rng, 2)
    wbn = Tensor(rng.standard_normal((3, 2, 4, 4)))
    rm, rv = np.zeros(2), np.ones(2)
    checks.append(("batch_norm/train",
                   finite_diff_check(
                       lambda: tensor_sum(elementwise(
                           batch_norm(xn, gamma, beta, rm, rv, "train"), wbn, "mul")),
                       [xn, gamma, beta], step=step), OP_TOL))
    rm2 = rng.standard_normal(2)
    rv2 = 1.0 + 0.5 * rng.random(2)
    checks.append(("batch_norm/eval",
                   finite_diff_check(
                       lambda: tensor_sum(elementwise(
                           batch_norm(xn, gamma, beta, rm2, rv2, "eval"), wbn, "mul")),
                       [xn, gamma, beta], step=step), OP_TOL))

    for kind in ("relu", "gelu", "sigmoid"):
        xa = Tensor(rng.standard_normal((1, 2, 3, 3)) + 0.05, requires_grad=True)
        wa = Tensor(rng.standard_normal((1, 2, 3, 3)))
        checks.append((f"activation/{kind}",
                       finite_diff_check(
                           lambda xa=xa, wa=wa, kind=kind: tensor_sum(
                               elementwise(activation(xa, kind), wa, "mul")),
                           [xa], step=step), OP_TOL))

    ea = _t(rng, 1, 2, 3, 3)
    eb = _t(rng, 1, 2, 3, 3)
    checks.append(("elementwise/add+mul",
                   finite_diff_check(
                       lambda: tensor_sum(elementwise(elementwise(ea, eb, "mul"), ea, "add")),
                       [ea, eb], step=step), OP_TOL))

    ca = _t(rng, 1, 2, 3, 3)
    cb = _t(rng, 1, 3, 3, 3)
    wcat = Tensor(rng.standard_normal((1, 2, 3, 3)))
    checks.append(("concat+slice",
                   finite_diff_check(
                       lambda: tensor_sum(elementwise(
                           slice_channels(concat_channels([ca, cb]), 1, 3), wcat, "mul")),
                       [ca, cb], step=step), OP_TOL))

    logits = _t(rng, 1, 3, 2, 2)
    labels = rng.integers(0, 3, size=(1, 2, 2))
    checks.append(("softmax_cross_entropy",
                   finite_diff_check(lambda: softmax_cross_entropy(logits, labels),
                                     [logits], step=step), OP_TOL))

    store = ParamStore()
    gate = FusionGate(store.add("gate.raw", np.asarray(0.3)))
    fr = _t(rng, 1, 2, 3, 3)
    fl = _t(rng, 1, 2, 3, 3)
    checks.append(("fuse_weighted",
                   finite_diff_check(
                       lambda: tensor_sum(fuse_weighted(fr, fl, gate)),
                       [fr, fl, gate.raw], step=step), OP_TOL))
    return checks


def run_lka_checks(step: float = 1e-5) -> list:
    rng = np.random.default_rng(23)
    checks = []

    store = ParamStore()
    cfg = LkaConfig(channels=3, kernel=5, dilation=2)
    block = LkaBlock(store, "lka", cfg, rng=rng, dtype=np.float64)
    x = _t(rng, 1, 3, 7, 7)
    params = [x, block.dw.weight, block.dw.bias, block.dwd.weight,
              block.dwd.bias, block.pw.weight, block.pw.bias]
    checks.append(("lka_forward",
                   finite_diff_check(lambda: tensor_sum(block(x)), params, step=step),
                   OP_TOL))

    store2 = ParamStore()
    dcfg = LkaConfig(channels=4, kernel=5, dilation=2)
    dec = DecoderBlock(store2, "dec", dcfg, rng=rng, dtype=np.float64)
    xd = _t(rng, 1, 4, 9, 9)
    dec_params = [xd] + [t for _, t in store2.trainable_items()]
    checks.append(("decoder_block",
                   finite_diff_check(lambda: tensor_sum(dec(xd, mode="train")),
                                     dec_params, step=step), OP_TOL))
    return checks


def run_model_checks(step: float = 1e-4, sample: int = 3) -> list:
    """Full-model check: smallest legal input (32x32), sampled elements."""
    rng = np.random.default_rng(37)
    cfg = ModelConfig(stage_widths=(4, 8, 8, 8), num_classes=3,
                      fsc_channels=4, decoder_channels=4,
                      lka_kernel=5, lka_dilation=2)
    model = LKASegModel(cfg, seed=5, dtype="f64")
    # Check at a generic point in parameter space: the identity-start init
    # zeros out some scale parameters, which parks pre-activation values
    # exactly on (or very near) ReLU kinks where finite differences are not
    # a valid derivative estimate. Restore unit scales and jitter everything.
    for name, t in model.store.trainable_items():
        if name.endswith(".gamma") and not np.any(t.data):
            t.data[...] = 1.0
        t.data += 0.05 * rng.standard_normal(t.data.shape)
    x = Tensor(rng.standard_normal((1, 3, 32, 32)), requires_grad=True)
    labels = rng.integers(0, 3, size=(1, 32, 32))
    params = [x] + [t for _, t in model.store.trainable_items()]

    def f():
        return softmax_cross_entropy(model.forward(x, mode="train"), labels)

    report = finite_diff_check(f, params, step=step, sample=sample,
                               rng=np.random.default_rng(99))
    return [("model/full", report, MODEL_TOL)]


def run_scope(scope: str) -> list:
    if scope == "ops":
        return run_ops_checks()
    if scope == "lka":
        return run_lka_checks()
    if scope == "model":
        return run_model_checks()
    raise ValueError(f"unknown gradcheck scope {scope!r}")
