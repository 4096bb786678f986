"""Backend selection for the scattered-point evaluation kernel.

The compiled extension is used when it imports; setting the environment
variable ``ARTIFACT_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py.eval_band_limited

if os.environ.get("ARTIFACT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels  # type: ignore[attr-defined]

        _impl = _kernels.eval_band_limited
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        pass


def eval_band_limited(coef, pts, grad=True):
    """Values and gradients of a band-limited field at scattered points.

    Args:
        coef: complex array ``(n_comp, W, W, W)``; see :func:`mode_cube`.
        pts: array ``(M, 3)`` of points (any real coordinates; the field is periodic).
        grad: also compute gradients.

    Returns:
        ``(values (M, n_comp), gradients (M, n_comp, 3) or None)``.
    """
    coef = np.ascontiguousarray(coef, dtype=np.complex128)
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    return _impl(coef, pts, grad)


def mode_cube(values, K):
    """Fourier coefficients with every ``|k_a| <= K`` from grid samples.

    Args:
        values: real array ``(n_comp, n, n, n)`` sampled on the uniform grid.
        K: half-width of the retained cube; must be below ``n/2``.

    Returns:
        complex array ``(n_comp, 2K+1, 2K+1, 2K+1)`` such that the band-limited
        interpolant restricted to the cube is ``Re sum coef exp(2 pi i k.x)``.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    if not 2 * K < n:
        raise ValueError(f"K={K} too large for n={n}")
    # partial DFT along each axis; only the 2K+1 retained modes are formed
    k = np.arange(-K, K + 1)
    E = np.exp(-2j * np.pi * np.outer(np.arange(n), k) / n) / n
    out = np.tensordot(values, E, axes=([-1], [0]))
    out = np.tensordot(out, E, axes=([-2], [0])).swapaxes(-1, -2)
    out = np.tensordot(out, E, axes=([-3], [0]))
    return np.ascontiguousarray(np.moveaxis(out, -1, -3))
