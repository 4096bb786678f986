"""Pure numpy implementation of the scattered-point evaluation kernel."""

import numpy as np


def eval_band_limited(coef, pts, grad=True):
    """Evaluate ``f_c(x) = Re sum_k coef[c, k] exp(2 pi i k.x)`` and its gradient.

    Same contract as the compiled kernel: ``coef`` has shape ``(n_comp, W, W, W)``
    with index ``j`` standing for wavenumber ``j - K``; ``pts`` has shape ``(M, 3)``.
    """
    coef = np.asarray(coef, dtype=complex)
    pts = np.asarray(pts, dtype=float)
    W = coef.shape[1]
    K = (W - 1) // 2
    k = np.arange(-K, K + 1)
    E = np.exp(2j * np.pi * pts[:, :, None] * k[None, None, :])  # (M, 3, W)
    vals = np.einsum("mi,mj,ml,cijl->mc", E[:, 0], E[:, 1], E[:, 2], coef, optimize=True).real
    if not grad:
        return vals, None
    g = np.empty(vals.shape + (3,))
    Ek = [E[:, a] * k for a in range(3)]
    g[..., 0] = np.einsum("mi,mj,ml,cijl->mc", Ek[0], E[:, 1], E[:, 2], coef, optimize=True).imag
    g[..., 1] = np.einsum("mi,mj,ml,cijl->mc", E[:, 0], Ek[1], E[:, 2], coef, optimize=True).imag
    g[..., 2] = np.einsum("mi,mj,ml,cijl->mc", E[:, 0], E[:, 1], Ek[2], coef, optimize=True).imag
    return vals, -2.0 * np.pi * g
