"""Periodic field arithmetic on the unit 3-torus.

Arrays carry the three spatial axes last, ordered ``(x1, x2, x3)``.  Vector
fields put their 3 components on the axis just before the spatial axes,
symmetric tensors put their 6 independent components there in the order
``SYM_PAIRS``.  Any number of leading axes (time samples, batches) is allowed.

Wavenumbers are integer cycles per unit length.  The angular frequency that
multiplies ``i`` in a derivative is ``p = 2 pi k``.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import AliasError, SupportError

log = logging.getLogger(__name__)

AXES = (-3, -2, -1)
TWO_PI = 2.0 * np.pi
SYM_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
# sym component index for each (j, l)
SYM_INDEX = np.array([[0, 3, 4], [3, 1, 5], [4, 5, 2]])
MAGIC = b"CIFLD1"


# ---------------------------------------------------------------- grid


@dataclass(frozen=True)
class Grid3:
    """Uniform grid on ``[0, 1)^3`` with an optional uniform time axis.

    Args:
        n_per_axis: points per axis, a power of two not below 8.
        times: sorted time samples (uniformly spaced when more than one).
    """

    n_per_axis: int
    times: tuple = (0.0,)

    def __post_init__(self):
        n = self.n_per_axis
        if n < 8 or n & (n - 1):
            raise ValueError(f"n_per_axis={n} must be a power of two >= 8")
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("times must be a nonempty 1-D sequence")
        if t.size > 1:
            d = np.diff(t)
            if np.any(d <= 0) or np.ptp(d) > 1e-9 * d.mean():
                raise ValueError("time samples must be increasing and uniform")
        object.__setattr__(self, "times", tuple(float(x) for x in t))

    @classmethod
    def uniform(cls, n_per_axis, t0, t1, n_time):
        return cls(n_per_axis, tuple(np.linspace(t0, t1, n_time)))

    @property
    def n(self):
        return self.n_per_axis

    @property
    def nyquist(self):
        return self.n_per_axis // 2

    @property
    def t(self):
        return np.asarray(self.times)

    @property
    def n_time(self):
        return len(self.times)

    @property
    def dt(self):
        return self.times[1] - self.times[0] if len(self.times) > 1 else 0.0

    @property
    def t_range(self):
        return self.times[0], self.times[-1]

    @property
    def shape(self):
        return (self.n_per_axis,) * 3

    @cached_property
    def x(self):
        """Coordinates, shape ``(3, n, n, n)``."""
        g = np.arange(self.n_per_axis) / self.n_per_axis
        return np.stack(np.meshgrid(g, g, g, indexing="ij"))

    def require_modes(self, max_mode):
        """Raise AliasError unless Nyquist strictly exceeds ``max_mode``."""
        if not max_mode < self.nyquist:
            raise AliasError(f"mode {max_mode:g} not below Nyquist {self.nyquist}")


@lru_cache(maxsize=16)
def _kvec_real(n):
    k = np.fft.fftfreq(n, 1.0 / n)
    kr = np.fft.rfftfreq(n, 1.0 / n)
    return (k[:, None, None], k[None, :, None], kr[None, None, :])


@lru_cache(maxsize=16)
def _kvec_full(n):
    k = np.fft.fftfreq(n, 1.0 / n)
    return (k[:, None, None], k[None, :, None], k[None, None, :])


def wavenumbers(n, real=True):
    """Broadcastable integer wavenumbers ``(k1, k2, k3)`` for rfftn or fftn layouts."""
    return _kvec_real(n) if real else _kvec_full(n)


@lru_cache(maxsize=16)
def _nyq_free(n, real):
    """Multiplier that zeroes every mode with a Nyquist component."""
    k1, k2, k3 = wavenumbers(n, real)
    h = n // 2
    return ((np.abs(k1) < h) & (np.abs(k2) < h) & (np.abs(k3) < h)).astype(float)


@lru_cache(maxsize=16)
def dealias_mask(n, real=True):
    """2/3-rule mask: keeps modes with every ``|k_i| < n/3``."""
    k1, k2, k3 = wavenumbers(n, real)
    c = n / 3.0
    return ((np.abs(k1) < c) & (np.abs(k2) < c) & (np.abs(k3) < c)).astype(float)


# ---------------------------------------------------------------- transforms


def _is_complex(a):
    return np.iscomplexobj(a)


def fft(a):
    """Spectral coefficients over the spatial axes (rfftn for real input)."""
    if _is_complex(a):
        return sfft.fftn(a, axes=AXES)
    return sfft.rfftn(a, axes=AXES)


def ifft(ah, n, real=True):
    if real:
        return sfft.irfftn(ah, s=(n, n, n), axes=AXES)
    return sfft.ifftn(ah, axes=AXES)


def alias_fraction(a):
    """Fraction of the L2 energy of ``a`` carried by modes with a Nyquist component."""
    n = a.shape[-1]
    real = not _is_complex(a)
    ah = fft(a)
    w = np.abs(ah) ** 2
    if real:
        w = w * _rfft_weights(n)
    total = w.sum()
    if total == 0:
        return 0.0
    return float((w * (1.0 - _nyq_free(n, real))).sum() / total)


def check_alias(a, tol=1e-10):
    """Raise AliasError if populated modes reach Nyquist beyond ``tol`` relative energy."""
    frac = alias_fraction(a)
    if frac > tol:
        raise AliasError(f"{frac:.3e} of the energy sits on Nyquist modes")


@lru_cache(maxsize=16)
def _rfft_weights(n):
    """Multiplicity of each rfftn coefficient in the full spectrum."""
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return w[None, None, :]


# ---------------------------------------------------------------- derivatives


def _ik(n, axis, real):
    k = wavenumbers(n, real)[axis]
    h = n // 2
    return 1j * TWO_PI * np.where(np.abs(k) < h, k, 0.0)


def derivative(f, axis, check=False):
    """Spectral derivative along spatial axis 0, 1 or 2 (x1, x2, x3)."""
    if check:
        check_alias(f)
    n = f.shape[-1]
    real = not _is_complex(f)
    return ifft(fft(f) * _ik(n, axis, real), n, real)


def gradient(f, check=False):
    """Gradient of a scalar field; new component axis inserted before space."""
    if check:
        check_alias(f)
    n = f.shape[-1]
    real = not _is_complex(f)
    fh = fft(f)
    return np.stack([ifft(fh * _ik(n, a, real), n, real) for a in range(3)], axis=-4)


def divergence(V, check=False):
    """Divergence of a vector field (components on axis -4)."""
    if check:
        check_alias(V)
    n = V.shape[-1]
    real = not _is_complex(V)
    Vh = fft(V)
    s = sum(Vh[..., a, :, :, :] * _ik(n, a, real) for a in range(3))
    return ifft(s, n, real)


def curl(V, check=False):
    if check:
        check_alias(V)
    n = V.shape[-1]
    real = not _is_complex(V)
    Vh = fft(V)
    d = lambda c, a: Vh[..., c, :, :, :] * _ik(n, a, real)  # noqa: E731
    out = [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)]
    return np.stack([ifft(o, n, real) for o in out], axis=-4)


def jacobian(V):
    """``J[..., j, a] = d_a V^j`` with shape ``(..., 3, 3, n, n, n)``."""
    n = V.shape[-1]
    real = not _is_complex(V)
    Vh = fft(V)
    rows = []
    for j in range(3):
        rows.append(np.stack([ifft(Vh[..., j, :, :, :] * _ik(n, a, real), n, real) for a in range(3)], axis=-4))
    return np.stack(rows, axis=-5)


def sym_grad(V):
    """Symmetric gradient ``(d_j V^l + d_l V^j)/2`` in sym storage."""
    J = jacobian(V)
    return np.stack([0.5 * (J[..., a, b, :, :, :] + J[..., b, a, :, :, :]) for a, b in SYM_PAIRS], axis=-4)


def laplacian(f):
    n = f.shape[-1]
    real = not _is_complex(f)
    k1, k2, k3 = wavenumbers(n, real)
    sym = -(TWO_PI**2) * (k1**2 + k2**2 + k3**2) * _nyq_free(n, real)
    return ifft(fft(f) * sym, n, real)


def div_sym(R):
    """``(div R)^l = d_j R^{jl}`` for a sym tensor field."""
    n = R.shape[-1]
    real = not _is_complex(R)
    Rh = fft(R)
    ik = [_ik(n, a, real) for a in range(3)]
    out = []
    for l in range(3):
        s = sum(Rh[..., SYM_INDEX[j, l], :, :, :] * ik[j] for j in range(3))
        out.append(ifft(s, n, real))
    return np.stack(out, axis=-4)


# ---------------------------------------------------------------- tensor helpers


def sym_to_full(R):
    """``(..., 6, n, n, n) -> (..., 3, 3, n, n, n)``."""
    return R[..., SYM_INDEX, :, :, :]


def full_to_sym(A):
    """Symmetric part of a full tensor in sym storage."""
    return np.stack([0.5 * (A[..., a, b, :, :, :] + A[..., b, a, :, :, :]) for a, b in SYM_PAIRS], axis=-4)


def outer_sym(u, w):
    """Sym storage of ``(u^j w^l + w^j u^l)/2`` pointwise (no dealiasing)."""
    return np.stack([0.5 * (u[..., a, :, :, :] * w[..., b, :, :, :] + w[..., a, :, :, :] * u[..., b, :, :, :]) for a, b in SYM_PAIRS], axis=-4)


def contract(R, u):
    """``w^j = R^{jl} u_l`` pointwise (no dealiasing)."""
    return np.stack([sum(R[..., SYM_INDEX[j, l], :, :, :] * u[..., l, :, :, :] for l in range(3)) for j in range(3)], axis=-4)


def trace(R):
    return R[..., 0, :, :, :] + R[..., 1, :, :, :] + R[..., 2, :, :, :]


def const_sym(M):
    """Sym storage (6,) of a symmetric 3x3 matrix."""
    M = np.asarray(M, dtype=float)
    return np.array([M[a, b] for a, b in SYM_PAIRS])


def sym_matrix(s):
    """3x3 matrix from a sym-storage 6-vector."""
    s = np.asarray(s)
    return s[SYM_INDEX]


# ---------------------------------------------------------------- dealiased products


def dealias(a):
    """Apply the 2/3-rule mask."""
    n = a.shape[-1]
    real = not _is_complex(a)
    return ifft(fft(a) * dealias_mask(n, real), n, real)


def mprod(a, b):
    """Pointwise product followed by the 2/3-rule mask."""
    return dealias(a * b)


def m_outer_sym(u, w):
    """Dealiased ``(u^j w^l + w^j u^l)/2``."""
    return dealias(outer_sym(u, w))


def m_contract(R, u):
    return dealias(contract(R, u))


def m_dot(u, w):
    return dealias(np.einsum("...ixyz,...ixyz->...xyz", u, w))


# ---------------------------------------------------------------- norms


def l2_norm(a):
    """``(int |a|^2 dx)^{1/2}`` over the unit torus, summed over components."""
    return float(np.sqrt(np.mean(np.abs(a) ** 2, axis=AXES).sum()))


def l2_norm_spectral(a):
    n = a.shape[-1]
    ah = fft(a)
    w = np.abs(ah) ** 2
    if not _is_complex(a):
        w = w * _rfft_weights(n)
    return float(np.sqrt(w.sum()) / n**3)


def c0_norm(a, pointwise_components=True):
    """Max over grid of the Euclidean magnitude across the component axis, or of ``|a|``."""
    a = np.asarray(a)
    if a.ndim >= 4 and pointwise_components:
        return float(np.sqrt((np.abs(a) ** 2).sum(axis=-4)).max())
    return float(np.abs(a).max())


# ---------------------------------------------------------------- band multipliers


def smoothstep5(s):
    """Quintic smoothstep on [0, 1] (C2 at both ends), clipped outside."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


@dataclass(frozen=True)
class BandMultiplier:
    """Ball multiplier: 1 within ``inner_radius`` of ``center``, 0 beyond ``outer_radius``.

    Radii and center are in cycles per unit length.  The taper is a quintic
    smoothstep in ``|p - center|``.
    """

    center: tuple
    inner_radius: float
    outer_radius: float
    profile: str = field(default="quintic")

    def __post_init__(self):
        if not 0 <= self.inner_radius < self.outer_radius:
            raise ValueError("need 0 <= inner_radius < outer_radius")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def symbol(self, k1, k2, k3):
        c = self.center
        d = np.sqrt((k1 - c[0]) ** 2 + (k2 - c[1]) ** 2 + (k3 - c[2]) ** 2)
        s = (d - self.inner_radius) / (self.outer_radius - self.inner_radius)
        return 1.0 - smoothstep5(s)

    def max_mode(self):
        return max(abs(c) for c in self.center) + self.outer_radius

    def on_grid(self, n, real=False):
        return self.symbol(*wavenumbers(n, real))


@lru_cache(maxsize=64)
def _band_leray_symbol(n, center, inner, outer):
    """Band symbol times Leray projector on the band's support.

    Returns ``(flat_index, P)`` with ``P`` of shape ``(3, 3, m)`` on the ``m``
    modes (full fftn layout, flattened) where the band symbol is nonzero.
    """
    B = BandMultiplier(center, inner, outer)
    k = wavenumbers(n, real=False)
    psi = (B.symbol(*k) * _nyq_free(n, False)).ravel()
    kk = [np.broadcast_to(ki, (n, n, n)).ravel() for ki in k]
    k2 = kk[0] ** 2 + kk[1] ** 2 + kk[2] ** 2
    idx = np.flatnonzero((psi != 0) & (k2 != 0))
    ks = [ki[idx] for ki in kk]
    k2s = k2[idx]
    P = np.empty((3, 3, idx.size))
    for a in range(3):
        for b in range(3):
            P[a, b] = psi[idx] * ((a == b) - ks[a] * ks[b] / k2s)
    return idx, P


def band_leray_project(V, B: BandMultiplier, check=True):
    """Leray projection restricted to the band of ``B`` (complex output).

    The operator realizes ``P_I``: band cutoff times the projection onto
    mean-zero divergence-free fields.
    """
    V = np.asarray(V)
    n = V.shape[-1]
    if check:
        check_alias(V)
        if B.max_mode() >= n // 2 and np.any(B.on_grid(n) * (1 - _nyq_free(n, False))):
            raise AliasError("band reaches the Nyquist frequency")
    idx, P = _band_leray_symbol(n, B.center, B.inner_radius, B.outer_radius)
    Vh = sfft.fftn(V, axes=AXES).reshape(V.shape[:-3] + (n**3,))
    sub = Vh[..., idx]
    out = np.zeros_like(Vh, dtype=complex)
    for a in range(3):
        out[..., a, idx] = P[a, 0] * sub[..., 0, :] + P[a, 1] * sub[..., 1, :] + P[a, 2] * sub[..., 2, :]
    return sfft.ifftn(out.reshape(V.shape), axes=AXES, overwrite_x=True)


def leray_project(V):
    """Full-band projection onto mean-zero divergence-free fields."""
    n = V.shape[-1]
    real = not _is_complex(V)
    k = wavenumbers(n, real)
    Vh = fft(V)
    k2 = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
    k2s = np.where(k2 == 0, 1.0, k2)
    kv = sum(Vh[..., a, :, :, :] * k[a] for a in range(3)) / k2s
    out = np.stack([(Vh[..., a, :, :, :] - kv * k[a]) * _nyq_free(n, real) for a in range(3)], axis=-4)
    out[..., 0, 0, 0] = 0
    return ifft(out, n, real)


# ---------------------------------------------------------------- inverse divergence


def _q_sym_apply(Uh, n, real, weight=None):
    """Apply the symmetric right inverse of the divergence to spectral data."""
    k = wavenumbers(n, real)
    p = [TWO_PI * ki for ki in k]
    p2 = p[0] ** 2 + p[1] ** 2 + p[2] ** 2
    inv2 = np.where(p2 == 0, 0.0, 1.0 / np.where(p2 == 0, 1.0, p2))
    nf = _nyq_free(n, real)
    if weight is not None:
        nf = nf * weight
    pa_U = sum(p[a] * Uh[..., a, :, :, :] for a in range(3))  # p_a U^a
    out = []
    for j, l in SYM_PAIRS:
        # Q_a^{jl} U^a = -i ( |p|^-2 (p.U) delta^{jl} + |p|^-2 (p^j U^l + U^j p^l) - 2 |p|^-4 p^j p^l (p.U) )
        term = inv2 * pa_U * (j == l) + inv2 * (p[j] * Uh[..., l, :, :, :] + Uh[..., j, :, :, :] * p[l]) - 2.0 * inv2 * inv2 * p[j] * p[l] * pa_U
        out.append(-1j * term * nf)
    return np.stack(out, axis=-4)


def _q_vec_apply(uh, n, real, weight=None):
    k = wavenumbers(n, real)
    p = [TWO_PI * ki for ki in k]
    p2 = p[0] ** 2 + p[1] ** 2 + p[2] ** 2
    inv2 = np.where(p2 == 0, 0.0, 1.0 / np.where(p2 == 0, 1.0, p2))
    nf = _nyq_free(n, real)
    if weight is not None:
        nf = nf * weight
    return np.stack([-1j * inv2 * p[a] * uh * nf for a in range(3)], axis=-4)


def inverse_divergence_sym_full(U):
    """Symmetric ``R`` with ``div R = U - mean(U)`` on all non-Nyquist modes.

    Returns ``(R, mean_defect)`` where ``mean_defect`` is the largest magnitude
    of the discarded zero mode relative to the L2 norm of ``U``.
    """
    n = U.shape[-1]
    real = not _is_complex(U)
    Uh = fft(U)
    mean = np.abs(Uh[..., 0, 0, 0]).max() / n**3 if U.size else 0.0
    R = ifft(_q_sym_apply(Uh, n, real), n, real)
    nrm = l2_norm(U)
    return R, (float(mean / nrm) if nrm > 0 else 0.0)


def inverse_divergence_vec_full(u):
    """Vector ``w`` with ``div w = u - mean(u)``; returns ``(w, mean_defect)``."""
    n = u.shape[-1]
    real = not _is_complex(u)
    uh = fft(u)
    mean = np.abs(uh[..., 0, 0, 0]).max() / n**3 if u.size else 0.0
    w = ifft(_q_vec_apply(uh, n, real), n, real)
    nrm = l2_norm(u)
    return w, (float(mean / nrm) if nrm > 0 else 0.0)


@dataclass(frozen=True)
class Annulus:
    """Radial cutoff ``chi(|p|/lam)`` in angular frequency ``p = 2 pi k``.

    Zero below ``r0``, one on ``[r1, r2]``, zero above ``r3`` (all in units of ``lam``).
    """

    r0: float = 0.5
    r1: float = 0.75
    r2: float = 1.0
    r3: float = 4.0 / 3.0

    def symbol(self, pabs, lam):
        r = pabs / lam
        up = smoothstep5((r - self.r0) / (self.r1 - self.r0))
        down = 1.0 - smoothstep5((r - self.r2) / (self.r3 - self.r2))
        return up * down

    def ones(self, pabs, lam):
        r = pabs / lam
        return (r >= self.r1 - 1e-12) & (r <= self.r2 + 1e-12)


def _pabs(n, real):
    k = wavenumbers(n, real)
    return TWO_PI * np.sqrt(k[0] ** 2 + k[1] ** 2 + k[2] ** 2)


def _support_check(Uh, n, real, lam, ann, tol, comp_axes):
    w = np.abs(Uh) ** 2
    if real:
        w = w * _rfft_weights(n)
    outside = ~ann.ones(_pabs(n, real), lam)
    tot = w.sum()
    if tot == 0:
        return
    frac = float((w * outside).sum() / tot)
    if frac > tol:
        raise SupportError(f"{frac:.3e} of the right-hand side lies outside the annulus")


def inverse_divergence_sym(U, lam, annulus: Annulus = Annulus(), tol=1e-8):
    """Frequency-localized symmetric right inverse of the divergence near ``|p| ~ lam``.

    ``lam`` is an angular frequency.  The output satisfies ``div R = U`` when
    the spectrum of ``U`` lies where the cutoff equals one.

    Raises:
        SupportError: if more than ``tol`` of the energy of ``U`` lies outside.
    """
    U = np.asarray(U)
    n = U.shape[-1]
    real = not _is_complex(U)
    Uh = fft(U)
    _support_check(Uh, n, real, lam, annulus, tol, None)
    chi = annulus.symbol(_pabs(n, real), lam)
    R = ifft(_q_sym_apply(Uh, n, real, weight=chi), n, real)
    log.debug("inverse_divergence_sym: lam*|R|/|U| = %.4g", lam * c0_norm(R) / max(c0_norm(U), 1e-300))
    return R


def inverse_divergence_vec(u, lam, annulus: Annulus = Annulus(), tol=1e-8):
    """Frequency-localized vector right inverse of the divergence near ``|p| ~ lam``."""
    u = np.asarray(u)
    n = u.shape[-1]
    real = not _is_complex(u)
    uh = fft(u)
    _support_check(uh, n, real, lam, annulus, tol, None)
    chi = annulus.symbol(_pabs(n, real), lam)
    return ifft(_q_vec_apply(uh, n, real, weight=chi), n, real)


# ---------------------------------------------------------------- spectral resampling


def resample(a, m):
    """Trigonometric interpolation of a real periodic field onto an ``m^3`` grid.

    Downsampling truncates to modes below the smaller Nyquist; upsampling zero-pads.
    """
    n = a.shape[-1]
    if m == n:
        return a.copy()
    ah = sfft.fftn(a, axes=AXES)
    h = min(n, m) // 2
    lead = a.shape[:-3]
    out = np.zeros(lead + (m, m, m), dtype=complex)
    idx_src = np.r_[0:h, n - h + 1 : n] if h > 0 else np.r_[0:1]
    idx_dst = np.r_[0:h, m - h + 1 : m] if h > 0 else np.r_[0:1]
    out[np.ix_(*([range(s) for s in lead] + [idx_dst, idx_dst, idx_dst]))] = ah[
        np.ix_(*([range(s) for s in lead] + [idx_src, idx_src, idx_src]))
    ]
    res = sfft.ifftn(out, axes=AXES) * (m / n) ** 3
    return res.real if not _is_complex(a) else res


# ---------------------------------------------------------------- field wrappers


@dataclass(frozen=True, eq=False)
class _Field:
    grid: Grid3
    values: np.ndarray

    n_components = 1

    def __post_init__(self):
        v = np.asarray(self.values)
        n = self.grid.n_per_axis
        if v.shape[-3:] != (n, n, n):
            raise ValueError(f"spatial shape {v.shape[-3:]} does not match grid {n}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @cached_property
    def spectral(self):
        return fft(self.values)

    def l2(self):
        return l2_norm(self.values)


class ScalarField(_Field):
    """Real scalar samples, shape ``(n_time, n, n, n)`` or ``(n, n, n)``."""

    def derivative(self, axis):
        return ScalarField(self.grid, derivative(self.values, axis, check=True))

    def gradient(self):
        return VectorField3(self.grid, gradient(self.values, check=True))


class VectorField3(_Field):
    """Vector samples with components on axis -4."""

    n_components = 3

    def divergence(self):
        return ScalarField(self.grid, divergence(self.values, check=True))

    def curl(self):
        return VectorField3(self.grid, curl(self.values, check=True))

    def sym_grad(self):
        return SymTensorField3(self.grid, sym_grad(self.values))


class SymTensorField3(_Field):
    """Symmetric tensor samples stored as 6 components ``SYM_PAIRS`` on axis -4."""

    n_components = 6

    def divergence(self):
        return VectorField3(self.grid, div_sym(self.values))

    def full(self):
        return sym_to_full(self.values)


# ---------------------------------------------------------------- binary dump


def dump_fields(path, values):
    """Write ``values`` with shape ``(n_time, n_comp, n, n, n)`` in (x1, x2, x3) order.

    On disk the spatial order is reversed to ``(x3, x2, x1)`` so ``x1`` varies fastest.
    """
    v = np.asarray(values, dtype="<f8")
    if v.ndim != 5 or v.shape[-3] != v.shape[-2] or v.shape[-2] != v.shape[-1]:
        raise ValueError("expected shape (n_time, n_comp, n, n, n)")
    nt, nc, n = v.shape[0], v.shape[1], v.shape[-1]
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<III", n, nt, nc))
        fh.write(np.ascontiguousarray(v.transpose(0, 1, 4, 3, 2)).tobytes())


def load_fields(path):
    """Inverse of :func:`dump_fields`; returns ``(n_time, n_comp, n, n, n)`` in (x1, x2, x3) order."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC) + 12)
        if head[: len(MAGIC)] != MAGIC:
            raise ValueError(f"{path}: bad magic")
        n, nt, nc = struct.unpack("<III", head[len(MAGIC) :])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != nt * nc * n**3:
        raise ValueError(f"{path}: payload size mismatch")
    return data.reshape(nt, nc, n, n, n).transpose(0, 1, 4, 3, 2).astype(float)
