import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact import _kernels_py, kernels
from artifact import fields as F

from conftest import random_field

try:
    from artifact import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def test_mode_cube_matches_fft(rng):
    v = random_field(rng, (3,), 16, kmax=3)
    K = 3
    cube = kernels.mode_cube(v, K)
    full = np.fft.fftn(v, axes=(-3, -2, -1)) / 16**3
    idx = np.r_[-K : K + 1] % 16
    ref = full[:, idx][:, :, idx][:, :, :, idx]
    assert np.allclose(cube, ref, atol=1e-15)
    with pytest.raises(ValueError):
        kernels.mode_cube(v, 8)


def test_band_limited_evaluation_reproduces_grid_and_gradient(rng):
    n, K = 16, 3
    v = random_field(rng, (2,), n, kmax=K)
    cube = kernels.mode_cube(v, K)
    pts = F.Grid3(n).x.reshape(3, -1).T
    vals, grads = kernels.eval_band_limited(cube, pts)
    assert np.allclose(vals.T.reshape(v.shape), v, atol=1e-12)
    g = np.stack([F.gradient(v[c]) for c in range(2)])  # (2, 3, n, n, n)
    assert np.allclose(np.moveaxis(grads, 0, -1).reshape(g.shape), g, atol=1e-10)


@pytest.mark.skipif(_kernels is None, reason="compiled kernel not built")
@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 50))
def test_compiled_and_numpy_backends_agree(seed, K, m):
    r = np.random.default_rng(seed)
    W = 2 * K + 1
    coef = r.standard_normal((3, W, W, W)) + 1j * r.standard_normal((3, W, W, W))
    pts = r.uniform(-2, 2, (m, 3))
    a = _kernels.eval_band_limited(coef, pts, True)
    b = _kernels_py.eval_band_limited(coef, pts, True)
    scale = np.abs(coef).sum()
    assert np.allclose(a[0], b[0], atol=1e-13 * scale)
    assert np.allclose(a[1], b[1], atol=1e-12 * scale * K)
    assert _kernels.eval_band_limited(coef, pts, False)[1] is None


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")
