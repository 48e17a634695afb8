"""Large-kernel attention block: decomposition arithmetic and behavior."""

import numpy as np
import pytest

from lkaseg.lka import DecoderBlock, LkaBlock, LkaConfig, lka_param_count
from lkaseg.nn import ParamStore
from lkaseg.tensor import Tensor, TensorError


class TestLkaConfig:
    def test_default_decomposition(self):
        cfg = LkaConfig(channels=64, kernel=21, dilation=3)
        assert cfg.k_local == 5
        assert cfg.k_dilated == 7
        assert cfg.receptive_field == 23

    def test_even_ceil_rounded_to_odd(self):
        cfg = LkaConfig(channels=1, kernel=7, dilation=2)  # ceil(7/2)=4 -> 5
        assert cfg.k_dilated == 5

    def test_validation(self):
        with pytest.raises(TensorError):
            LkaConfig(channels=4, kernel=4, dilation=1)
        with pytest.raises(TensorError):
            LkaConfig(channels=4, kernel=5, dilation=7)


class TestParamCount:
    def test_canonical_case(self):
        assert lka_param_count(LkaConfig(64, 21, 3)) == 9024

    def test_minimal_case(self):
        assert lka_param_count(LkaConfig(1, 3, 1)) == 14

    def test_beats_dense_kernel_by_200x(self):
        cfg = LkaConfig(64, 21, 3)
        dense = 21 ** 2 * 64 ** 2
        assert dense == 1806336
        assert lka_param_count(cfg) * 200 < dense

    def test_always_below_dense(self):
        for k in (5, 9, 13, 21, 31):
            for d in (1, 2, 3, 4):
                if d > k:
                    continue
                for c in (8, 16, 64):
                    cfg = LkaConfig(c, k, d)
                    assert lka_param_count(cfg) < k * k * c * c

    def test_matches_registry(self):
        store = ParamStore()
        block = LkaBlock(store, "lka", LkaConfig(64, 21, 3),
                         rng=np.random.default_rng(0))
        assert store.num_trainable() == 9024
        assert block.param_count() == 9024


class TestLkaForward:
    def test_identity_attention(self, rng):
        store = ParamStore()
        block = LkaBlock(store, "lka", LkaConfig(3, 5, 2),
                         rng=np.random.default_rng(1), dtype=np.float64)
        block.set_identity_attention()
        x = Tensor(rng.standard_normal((2, 3, 8, 8)))
        np.testing.assert_array_equal(block(x).data, x.data)

    def test_zero_attention(self, rng):
        store = ParamStore()
        block = LkaBlock(store, "lka", LkaConfig(3, 5, 2),
                         rng=np.random.default_rng(1))
        block.set_zero_attention()
        x = Tensor(rng.standard_normal((1, 3, 6, 6)).astype(np.float32))
        assert np.all(block(x).data == 0)

    def test_shape_preserved(self, rng):
        store = ParamStore()
        block = LkaBlock(store, "lka", LkaConfig(8, 21, 3),
                         rng=np.random.default_rng(2))
        x = Tensor(rng.standard_normal((2, 8, 13, 17)).astype(np.float32))
        assert block(x).shape == x.shape

    def test_channel_mismatch(self, rng):
        store = ParamStore()
        block = LkaBlock(store, "lka", LkaConfig(4, 5, 2),
                         rng=np.random.default_rng(3))
        from lkaseg.tensor import ShapeError
        with pytest.raises(ShapeError):
            block(Tensor(rng.standard_normal((1, 3, 6, 6)).astype(np.float32)))

    def test_receptive_field_support_small(self):
        """Gradient support of the attention path is exactly R x R (K=9, d=2)."""
        cfg = LkaConfig(1, 9, 2)  # k_local=3, k_dilated=5, R = 3 + 2*4 = 11
        assert cfg.receptive_field == 11
        store = ParamStore()
        rng = np.random.default_rng(7)
        block = LkaBlock(store, "lka", cfg, rng=rng, dtype=np.float64)
        # strictly positive weights so no path cancels
        for conv in block.layers():
            conv.weight.data[...] = np.abs(conv.weight.data) + 0.1
            conv.bias.data[...] = 0.05
        size, center = 15, 7
        base = 1.0 + rng.random((1, 1, size, size))
        step = 1e-6
        support = np.zeros((size, size), dtype=bool)
        for yy in range(size):
            for xx in range(size):
                hi = base.copy(); hi[0, 0, yy, xx] += step
                lo = base.copy(); lo[0, 0, yy, xx] -= step
                d = (block(Tensor(hi)).data[0, 0, center, center]
                     - block(Tensor(lo)).data[0, 0, center, center]) / (2 * step)
                support[yy, xx] = abs(d) > 1e-9
        ys, xs = np.nonzero(support)
        r = cfg.receptive_field
        half = r // 2
        assert ys.min() == center - half and ys.max() == center + half
        assert xs.min() == center - half and xs.max() == center + half
        assert support[center - half: center + half + 1,
                       center - half: center + half + 1].all()


class TestDecoderBlock:
    def test_zero_branch_identity(self, rng):
        store = ParamStore()
        dec = DecoderBlock(store, "d", LkaConfig(4, 5, 2),
                           rng=np.random.default_rng(1), dtype=np.float64)
        dec.pw2.weight.data[...] = 0.0
        dec.pw2.bias.data[...] = 0.0
        x = Tensor(rng.standard_normal((1, 4, 6, 6)))
        np.testing.assert_array_equal(dec(x, mode="eval").data, x.data)

    def test_shape_contract(self, rng):
        store = ParamStore()
        dec = DecoderBlock(store, "d", LkaConfig(64, 21, 3),
                           rng=np.random.default_rng(1))
        x = Tensor(rng.standard_normal((2, 64, 16, 16)).astype(np.float32))
        assert dec(x, "train").shape == (2, 64, 16, 16)
