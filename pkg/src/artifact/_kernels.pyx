# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled evaluation of band-limited periodic fields at scattered points."""

import numpy as np

from libc.math cimport cos, sin, M_PI


def eval_band_limited(double complex[:, :, :, ::1] coef, double[:, ::1] pts, bint grad=True):
    """Evaluate ``f_c(x) = Re sum_k coef[c, k] exp(2 pi i k.x)`` and its gradient.

    Args:
        coef: complex coefficients, shape ``(n_comp, W, W, W)`` with ``W = 2K + 1``;
            index ``j`` on each axis stands for wavenumber ``j - K``.
        pts: points, shape ``(M, 3)``.
        grad: also return the gradient.

    Returns:
        ``(values, gradient)`` with shapes ``(M, n_comp)`` and ``(M, n_comp, 3)``;
        ``gradient`` is ``None`` when ``grad`` is false.
    """
    cdef Py_ssize_t nc = coef.shape[0]
    cdef Py_ssize_t W = coef.shape[1]
    cdef Py_ssize_t K = (W - 1) // 2
    cdef Py_ssize_t M = pts.shape[0]
    cdef Py_ssize_t m, a, i, j, l, c
    cdef double th, k1, k2, k3, tw = 2.0 * M_PI
    cdef double complex term, e12, acc, g1, g2, g3
    vals = np.zeros((M, nc), dtype=np.float64)
    grads = np.zeros((M, nc, 3), dtype=np.float64)
    e_arr = np.empty((3, W), dtype=np.complex128)
    cdef double[:, ::1] ov = vals
    cdef double[:, :, ::1] gv = grads
    cdef double complex[:, ::1] e = e_arr
    with nogil:
        for m in range(M):
            for a in range(3):
                th = tw * pts[m, a]
                for i in range(W):
                    e[a, i] = cos((i - K) * th) + 1j * sin((i - K) * th)
            for c in range(nc):
                acc = 0
                g1 = 0
                g2 = 0
                g3 = 0
                for i in range(W):
                    k1 = i - K
                    for j in range(W):
                        k2 = j - K
                        e12 = e[0, i] * e[1, j]
                        for l in range(W):
                            term = coef[c, i, j, l] * e12 * e[2, l]
                            acc = acc + term
                            if grad:
                                k3 = l - K
                                g1 = g1 + k1 * term
                                g2 = g2 + k2 * term
                                g3 = g3 + k3 * term
                ov[m, c] = acc.real
                if grad:
                    # d/dx exp(2 pi i k x) = 2 pi i k exp(...); real part of i z is -Im z
                    gv[m, c, 0] = -tw * g1.imag
                    gv[m, c, 1] = -tw * g2.imag
                    gv[m, c, 2] = -tw * g3.imag
    return vals, (grads if grad else None)
