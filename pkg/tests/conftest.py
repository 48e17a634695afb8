import numpy as np
import pytest

from lkaseg.tensor import ConvSpec


def conv2d_brute_force(x: np.ndarray, w: np.ndarray, b, spec: ConvSpec) -> np.ndarray:
    """Direct triple-loop summation oracle for conv2d (independent of im2col)."""
    n, c_in, h, wd = x.shape
    c_out, cig, kh, kw = w.shape
    oh, ow = spec.out_hw(h, wd)
    g = spec.groups
    cog = c_out // g
    out = np.zeros((n, c_out, oh, ow), dtype=np.float64)
    for nn in range(n):
        for o in range(c_out):
            gi = o // cog
            for yy in range(oh):
                for xx in range(ow):
                    acc = 0.0 if b is None else float(b[o])
                    for i in range(cig):
                        ci = gi * cig + i
                        for ky in range(kh):
                            for kx in range(kw):
                                iy = yy * spec.stride - spec.padding + ky * spec.dilation
                                ix = xx * spec.stride - spec.padding + kx * spec.dilation
                                if 0 <= iy < h and 0 <= ix < wd:
                                    acc += x[nn, ci, iy, ix] * w[o, i, ky, kx]
                    out[nn, o, yy, xx] = acc
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
