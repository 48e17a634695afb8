"""Forward-path contracts of the core tensor ops."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from lkaseg.tensor import (ConvSpec, NumericsError, ShapeError, Tensor,
                           activation, batch_norm, bilinear_resize,
                           concat_channels, conv2d, elementwise, max_pool2d,
                           slice_channels, softmax_cross_entropy)
from conftest import conv2d_brute_force


class TestTensor:
    def test_rejects_non_finite(self):
        with pytest.raises(NumericsError):
            Tensor(np.array([1.0, np.nan]))

    def test_dtype_preserved(self):
        assert Tensor(np.zeros(3, dtype=np.float32)).dtype == np.float32
        assert Tensor(np.zeros(3)).dtype == np.float64


class TestConv2d:
    def test_identity_kernel(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        w = Tensor(np.ones((1, 1, 1, 1)))
        y = conv2d(x, w, None, ConvSpec(1, 1))
        np.testing.assert_array_equal(y.data, x.data)

    def test_all_ones_3x3_center_45(self):
        x = Tensor(np.arange(1.0, 10.0).reshape(1, 1, 3, 3))
        w = Tensor(np.ones((1, 1, 3, 3)))
        spec = ConvSpec(3, 3, stride=1, padding=1)
        y = conv2d(x, w, None, spec)
        assert y.data[0, 0, 1, 1] == 45.0
        ref = conv2d_brute_force(x.data, w.data, None, spec)
        np.testing.assert_allclose(y.data, ref)

    def test_dilated_impulse_response(self, rng):
        x = np.zeros((1, 1, 7, 7))
        x[0, 0, 3, 3] = 1.0
        w = rng.standard_normal((1, 1, 3, 3))
        spec = ConvSpec(3, 3, padding=2, dilation=2, groups=1)
        y = conv2d(Tensor(x), Tensor(w), None, spec)
        nz = {(int(i) - 3, int(j) - 3) for i, j in zip(*np.nonzero(y.data[0, 0]))}
        assert nz <= {(dy, dx) for dy in (-2, 0, 2) for dx in (-2, 0, 2)}
        # the impulse response is the flipped-index kernel
        for ky in range(3):
            for kx in range(3):
                off_y, off_x = 2 * (1 - ky), 2 * (1 - kx)
                assert y.data[0, 0, 3 + off_y, 3 + off_x] == pytest.approx(w[0, 0, ky, kx])

    def test_random_configs_match_oracle(self, rng):
        for _ in range(12):
            g = int(rng.choice([1, 2, 3]))
            cig = int(rng.integers(1, 3))
            cog = int(rng.integers(1, 3))
            k = int(rng.choice([1, 2, 3]))
            spec = ConvSpec(k, k, stride=int(rng.integers(1, 3)),
                            padding=int(rng.integers(0, 3)),
                            dilation=int(rng.integers(1, 3)), groups=g)
            h = int(rng.integers(k * spec.dilation, k * spec.dilation + 5))
            x = rng.standard_normal((2, g * cig, h, h))
            w = rng.standard_normal((g * cog, cig, k, k))
            b = rng.standard_normal(g * cog)
            y = conv2d(Tensor(x), Tensor(w), Tensor(b), spec)
            ref = conv2d_brute_force(x, w, b, spec)
            np.testing.assert_allclose(y.data, ref, rtol=1e-6, atol=1e-12)

    def test_linearity(self, rng):
        x = rng.standard_normal((1, 3, 6, 6))
        y = rng.standard_normal((1, 3, 6, 6))
        w = Tensor(rng.standard_normal((4, 3, 3, 3)))
        spec = ConvSpec(3, 3, padding=1)
        a, b = 1.7, -0.4
        lhs = conv2d(Tensor(a * x + b * y), w, None, spec).data
        rhs = a * conv2d(Tensor(x), w, None, spec).data + \
            b * conv2d(Tensor(y), w, None, spec).data
        np.testing.assert_allclose(lhs, rhs, rtol=1e-6)

    def test_errors(self, rng):
        x = Tensor(rng.standard_normal((1, 3, 4, 4)))
        w = Tensor(rng.standard_normal((4, 3, 3, 3)))
        with pytest.raises(ShapeError):
            conv2d(x, w, None, ConvSpec(3, 3, groups=2))  # groups don't divide
        with pytest.raises(ShapeError):
            conv2d(x, w, None, ConvSpec(5, 5))  # weight kernel mismatch
        with pytest.raises(ShapeError):
            ConvSpec(3, 3).out_hw(2, 2)  # empty output


class TestMaxPool:
    def test_constant(self):
        x = Tensor(np.full((1, 2, 4, 4), 3.5))
        y = max_pool2d(x, 2, 2)
        assert y.shape == (1, 2, 2, 2)
        assert np.all(y.data == 3.5)

    def test_single_window(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        y = max_pool2d(x, 2, 2)
        assert y.shape == (1, 1, 1, 1)
        assert y.data[0, 0, 0, 0] == 4.0

    def test_window_max_oracle(self, rng):
        x = rng.standard_normal((1, 3, 8, 8))
        y = max_pool2d(Tensor(x), 4, 4)
        for c in range(3):
            for i in range(2):
                for j in range(2):
                    ref = x[0, c, 4 * i: 4 * i + 4, 4 * j: 4 * j + 4].max()
                    assert y.data[0, c, i, j] == ref

    def test_kernel_too_large(self):
        with pytest.raises(ShapeError):
            max_pool2d(Tensor(np.zeros((1, 1, 3, 3))), 4, 1)


class TestBilinear:
    def test_constant_preserved(self):
        x = Tensor(np.full((1, 2, 3, 5), 2.25))
        y = bilinear_resize(x, 7, 11)
        assert np.all(y.data == 2.25)

    def test_identity_bitexact(self, rng):
        x = rng.standard_normal((2, 3, 5, 4))
        y = bilinear_resize(Tensor(x), 5, 4)
        np.testing.assert_array_equal(y.data, x)

    def test_half_pixel_formula(self):
        x = Tensor(np.array([[[[0.0, 1.0], [2.0, 3.0]]]]))
        y = bilinear_resize(x, 4, 4)
        assert y.data[0, 0, 0, 0] == 0.0
        # scalar half-pixel oracle
        src = np.clip((np.arange(4) + 0.5) * 2 / 4 - 0.5, 0, 1)
        i0 = np.floor(src).astype(int)
        i1 = np.minimum(i0 + 1, 1)
        f = src - i0
        base = x.data[0, 0]
        for yy in range(4):
            for xx in range(4):
                top = base[i0[yy], i0[xx]] * (1 - f[xx]) + base[i0[yy], i1[xx]] * f[xx]
                bot = base[i1[yy], i0[xx]] * (1 - f[xx]) + base[i1[yy], i1[xx]] * f[xx]
                ref = top * (1 - f[yy]) + bot * f[yy]
                assert y.data[0, 0, yy, xx] == pytest.approx(ref, rel=1e-12)


class TestBatchNorm:
    def test_idempotent_on_normalized(self, rng):
        x = rng.standard_normal((8, 2, 5, 5))
        x -= x.mean(axis=(0, 2, 3), keepdims=True)
        x /= x.std(axis=(0, 2, 3), keepdims=True)
        gamma, beta = Tensor(np.ones(2), requires_grad=True), Tensor(np.zeros(2))
        y = batch_norm(Tensor(x), gamma, beta, np.zeros(2), np.ones(2), "train")
        np.testing.assert_allclose(y.data, x, atol=1e-4)

    def test_gamma_zero_outputs_beta(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4, 4)))
        y = batch_norm(x, Tensor(np.zeros(3)), Tensor(np.full(3, 5.0)),
                       np.zeros(3), np.ones(3), "train")
        assert np.all(y.data == 5.0)

    def test_moment_oracle(self, rng):
        x = Tensor(rng.standard_normal((4, 2, 3, 3)))
        gamma = Tensor(np.array([1.5, 0.5]))
        beta = Tensor(np.array([-1.0, 2.0]))
        y = batch_norm(x, gamma, beta, np.zeros(2), np.ones(2), "train")
        np.testing.assert_allclose(y.data.mean(axis=(0, 2, 3)), beta.data, atol=1e-5)
        np.testing.assert_allclose(y.data.var(axis=(0, 2, 3)), gamma.data ** 2,
                                   rtol=1e-4, atol=1e-5)

    def test_running_stats_used_in_eval(self, rng):
        x = rng.standard_normal((2, 1, 3, 3))
        rm, rv = np.array([0.5]), np.array([4.0])
        y = batch_norm(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)),
                       rm, rv, "eval", epsilon=1e-12)
        np.testing.assert_allclose(y.data, (x - 0.5) / 2.0, rtol=1e-6)

    def test_empty_batch_error(self):
        with pytest.raises(ShapeError):
            batch_norm(Tensor(np.zeros((0, 1, 2, 2))), Tensor(np.ones(1)),
                       Tensor(np.zeros(1)), np.zeros(1), np.ones(1), "train")


class TestActivations:
    def test_relu(self):
        y = activation(Tensor(np.array([[[[-1.0, 2.0]]]])), "relu")
        np.testing.assert_array_equal(y.data, [[[[0.0, 2.0]]]])

    def test_sigmoid_zero(self):
        assert activation(Tensor(np.zeros((1, 1, 1, 1))), "sigmoid").data[0, 0, 0, 0] == 0.5

    def test_gelu_quadrature_oracle(self):
        # gelu(x) = x * P(Z <= x) with Z standard normal, via numeric integration
        cdf, _ = quad(lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi), -np.inf, 1.0)
        y = activation(Tensor(np.full((1, 1, 1, 1), 1.0)), "gelu")
        assert y.data[0, 0, 0, 0] == pytest.approx(1.0 * cdf, abs=1e-9)
        assert y.data[0, 0, 0, 0] == pytest.approx(0.841345, abs=1e-6)


class TestElementwise:
    def test_mul_by_ones_identity(self, rng):
        x = rng.standard_normal((1, 2, 3, 3))
        y = elementwise(Tensor(x), Tensor(np.ones_like(x)), "mul")
        np.testing.assert_array_equal(y.data, x)

    def test_add_negation_is_zero(self, rng):
        x = rng.standard_normal((1, 2, 3, 3))
        y = elementwise(Tensor(x), Tensor(-x), "add")
        assert np.all(y.data == 0)

    def test_scalar_loop_oracle(self, rng):
        a = rng.standard_normal((2, 2, 2, 2))
        b = rng.standard_normal((2, 2, 2, 2))
        y = elementwise(Tensor(a), Tensor(b), "mul")
        for idx in np.ndindex(*a.shape):
            assert y.data[idx] == a[idx] * b[idx]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            elementwise(Tensor(np.zeros((1, 2, 3, 3))), Tensor(np.zeros((1, 2, 4, 3))), "add")


class TestConcat:
    def test_single_part_identity(self, rng):
        x = rng.standard_normal((1, 3, 2, 2))
        np.testing.assert_array_equal(concat_channels([Tensor(x)]).data, x)

    def test_ordering(self):
        a = Tensor(np.zeros((1, 1, 2, 2)))
        b = Tensor(np.ones((1, 1, 2, 2)))
        y = concat_channels([a, b])
        assert y.shape == (1, 2, 2, 2)
        assert np.all(y.data[:, 0] == 0) and np.all(y.data[:, 1] == 1)

    @settings(deadline=None, max_examples=25)
    @given(c1=st.integers(1, 4), c2=st.integers(1, 4), seed=st.integers(0, 1000))
    def test_split_concat_round_trip(self, c1, c2, seed):
        r = np.random.default_rng(seed)
        x = Tensor(r.standard_normal((1, c1 + c2, 3, 3)))
        a = slice_channels(x, 0, c1)
        b = slice_channels(x, c1, c1 + c2)
        np.testing.assert_array_equal(concat_channels([a, b]).data, x.data)


class TestCrossEntropy:
    def test_uniform_logits(self):
        logits = Tensor(np.zeros((1, 4, 2, 2)))
        loss = softmax_cross_entropy(logits, np.zeros((1, 2, 2), dtype=int))
        assert loss.item() == pytest.approx(math.log(4), rel=1e-12)

    def test_saturated(self):
        logits = np.zeros((1, 3, 1, 1))
        logits[0, 1] = 30.0
        loss = softmax_cross_entropy(Tensor(logits), np.full((1, 1, 1), 1))
        assert loss.item() < 1e-9

    def test_per_pixel_oracle(self, rng):
        z = rng.standard_normal((1, 3, 2, 2))
        labels = rng.integers(0, 3, (1, 2, 2))
        loss = softmax_cross_entropy(Tensor(z), labels)
        ref = 0.0
        for yy in range(2):
            for xx in range(2):
                p = np.exp(z[0, :, yy, xx])
                p /= p.sum()
                ref -= math.log(p[labels[0, yy, xx]])
        assert loss.item() == pytest.approx(ref / 4, rel=1e-10)

    def test_ignore_label(self, rng):
        z = rng.standard_normal((1, 3, 2, 2))
        labels = np.full((1, 2, 2), 255)
        labels[0, 0, 0] = 1
        loss = softmax_cross_entropy(Tensor(z), labels)
        p = np.exp(z[0, :, 0, 0])
        assert loss.item() == pytest.approx(-math.log(p[1] / p.sum()), rel=1e-10)

    def test_all_ignored_error(self):
        from lkaseg.tensor import TensorError
        with pytest.raises(TensorError):
            softmax_cross_entropy(Tensor(np.zeros((1, 2, 1, 1))), np.full((1, 1, 1), 255))
