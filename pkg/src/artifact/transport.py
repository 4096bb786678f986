"""Regularization along the coarse-scale flow.

Spatial mollifiers act as Fourier multipliers whose profiles have compact
support.  Length scales are measured against angular frequency, so a mode
with ``k`` cycles per unit length sees the symbol at ``zeta = 2 pi |k| eps``.

The coarse flow integrates trajectories of the mollified velocity with RK4,
evaluating the band-limited velocity at scattered points through
:mod:`artifact.kernels`.  Phase functions and flow-mollified fields are
computed at the points of a coarse collocation grid and interpolated
spectrally onto the working grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import fields as F
from .errors import DriftError, OutOfRangeError
from .kernels import eval_band_limited, mode_cube

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------- mollifier symbols


@dataclass(frozen=True)
class MollifierSpec:
    """Mollifier description.

    Attributes:
        kind: ``"velocity"``, ``"space"`` or ``"time"``.
        length_scale: ``eps`` of the kernel.
        moment_order: number ``L`` of vanishing moments (space kind only).
        fourier_compact: whether the symbol has compact support.
    """

    kind: str
    length_scale: float
    moment_order: int = 2
    fourier_compact: bool = True

    def __post_init__(self):
        if self.kind not in ("velocity", "space", "time"):
            raise ValueError(f"unknown mollifier kind {self.kind!r}")
        if self.length_scale <= 0:
            raise ValueError("length_scale must be positive")


def velocity_profile(zeta):
    """Radial symbol equal to 1 on ``zeta <= 1`` and 0 on ``zeta >= 2``."""
    return 1.0 - F.smoothstep5(np.asarray(zeta, dtype=float) - 1.0)


def _space_order(L):
    """Half the leading even order ``2q`` of ``1 - symbol`` at the origin (``2q > L``)."""
    return L // 2 + 1


_SPACE_BUMP_POWER = 4


@lru_cache(maxsize=None)
def space_series(L):
    """Taylor coefficients in ``u = zeta^2/4`` of the space symbol near zero.

    The symbol is ``(1 - u)^4 * P(u)`` with ``P`` the degree ``q - 1`` truncation
    of ``(1 - u)^-4``, so the coefficients of ``u^1 .. u^{q-1}`` vanish exactly.
    Returned as integer-exact floats, lowest order first.
    """
    q = _space_order(L)
    p = _SPACE_BUMP_POWER
    P = [math.comb(j + p - 1, p - 1) for j in range(q)]
    bump = [(-1) ** j * math.comb(p, j) for j in range(p + 1)]
    return tuple(float(c) for c in np.polynomial.polynomial.polymul(P, bump))


def space_profile(zeta, L):
    """Space-mollifier symbol: ``1 - O(zeta^{2q})`` at 0, zero for ``zeta >= 2``."""
    u = np.minimum(np.asarray(zeta, dtype=float) ** 2 / 4.0, 1.0)
    q = _space_order(L)
    P = sum(math.comb(j + _SPACE_BUMP_POWER - 1, _SPACE_BUMP_POWER - 1) * u**j for j in range(q))
    return (1.0 - u) ** _SPACE_BUMP_POWER * P


def space_moment_defect(L):
    """Largest Taylor coefficient of ``symbol - 1`` of order ``1 .. L`` in ``zeta``.

    Moments of order ``|a|`` are derivatives of the symbol at the origin, so a
    zero return value means every moment of order ``1 <= |a| <= L`` vanishes.
    Odd orders vanish by radial symmetry; even orders are read from the exact
    series in ``u = zeta^2 / 4``.
    """
    series = space_series(L)
    return max((abs(series[j]) for j in range(1, L // 2 + 1)), default=0.0)


def _kabs(n, real=True):
    k = F.wavenumbers(n, real)
    return np.sqrt(k[0] ** 2 + k[1] ** 2 + k[2] ** 2)


def velocity_symbol(n, eps_v, real=True):
    """Grid symbol of ``chi_eps * chi_eps`` for the velocity mollifier."""
    return velocity_profile(TWO_PI * eps_v * _kabs(n, real)) ** 2


def space_symbol(n, eps_x, L, real=True, squared=False):
    s = space_profile(TWO_PI * eps_x * _kabs(n, real), L)
    return s * s if squared else s


def mollify_velocity(v, eps_v):
    """``v_eps = chi_eps * chi_eps * v`` realized exactly in Fourier space."""
    n = v.shape[-1]
    return F.ifft(F.fft(v) * velocity_symbol(n, eps_v), n)


def mollify_space(f, eps_x, L, squared=True):
    """Spatial mollification with ``L`` vanishing moments (twice by default)."""
    n = f.shape[-1]
    return F.ifft(F.fft(f) * space_symbol(n, eps_x, L, squared=squared), n)


def velocity_band(eps_v):
    """Largest integer wavenumber per axis that can survive the velocity mollifier."""
    return int(math.floor(2.0 / (TWO_PI * eps_v) + 1e-12))


def space_band(eps_x):
    return int(math.floor(2.0 / (TWO_PI * eps_x) + 1e-12))


# ---------------------------------------------------------------- time kernels


def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def time_kernel(s, eps_t, side=0):
    """Nonnegative time kernel of unit mass.

    Args:
        s: evaluation points.
        eps_t: support radius.
        side: 0 for the symmetric kernel on ``|s| < eps_t``; +1 for the kernel
            supported in ``(0, eps_t)``; -1 for ``(-eps_t, 0)``.
    """
    s = np.asarray(s, dtype=float)
    if side == 0:
        return _bump(s / eps_t) / (eps_t * _BUMP_MASS)
    h = eps_t / 2.0
    return _bump((s - side * h) / h) / (h * _BUMP_MASS)


def _bump_mass():
    x, w = np.polynomial.legendre.leggauss(200)
    return float(np.sum(w * _bump(x)))


_BUMP_MASS = _bump_mass()


def time_quadrature(eps_t, side=0, n_nodes=8):
    """Gauss nodes ``s`` and weights ``w`` with ``sum w f(s) ~ int f eta``; weights sum to 1."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    if side == 0:
        a, b = -eps_t, eps_t
    elif side > 0:
        a, b = 0.0, eps_t
    else:
        a, b = -eps_t, 0.0
    s = 0.5 * (b - a) * x + 0.5 * (a + b)
    ww = 0.5 * (b - a) * w * time_kernel(s, eps_t, side)
    return s, ww / ww.sum()


def blend_profile(t, t_lo, t_hi, tau):
    """``chi_bar``: 1 for ``t <= t_lo + tau``, 0 for ``t >= t_hi - tau``, quintic in between."""
    a, b = t_lo + tau, t_hi - tau
    if b <= a:
        raise ValueError("interval too short for the one-sided blend")
    return 1.0 - F.smoothstep5((np.asarray(t, dtype=float) - a) / (b - a))


# ---------------------------------------------------------------- time interpolation


def lagrange_stencil(times, t, width=4):
    """Indices and weights of Lagrange interpolation on a uniform time grid.

    Raises:
        OutOfRangeError: if ``t`` lies outside the grid.
    """
    times = np.asarray(times)
    nt = times.size
    if nt == 1:
        if abs(t - times[0]) > 1e-12:
            raise OutOfRangeError(f"t={t} off the single time sample")
        return np.array([0]), np.array([1.0])
    t0, dt = times[0], times[1] - times[0]
    r = (t - t0) / dt
    if r < -1e-9 or r > nt - 1 + 1e-9:
        raise OutOfRangeError(f"t={t:.6g} outside [{times[0]:.6g}, {times[-1]:.6g}]")
    w = min(width, nt)
    j = int(math.floor(r))
    start = min(max(j - (w // 2 - 1), 0), nt - w)
    idx = np.arange(start, start + w)
    x = idx - r
    wts = np.ones(w)
    for a in range(w):
        for b in range(w):
            if a != b:
                wts[a] *= (0.0 - x[b]) / (x[a] - x[b])
    # exact hits return the sample itself
    hit = np.abs(x) < 1e-12
    if hit.any():
        wts = hit.astype(float)
    return idx, wts


# ---------------------------------------------------------------- coarse flow


class CoarseFlow:
    """Trajectories of a mollified velocity known at uniform time samples.

    Args:
        times: sample times (uniform).
        cube_at: callable ``i -> complex mode cube (3, W, W, W)`` of ``v_eps`` at sample ``i``.
        grad_bound: bound for ``|grad v_eps|`` used to pick the RK4 step.
        max_step: cap on the RK4 step (defaults to the sample spacing).
    """

    def __init__(self, times, cube_at, grad_bound, max_step=None):
        self.times = np.asarray(times, dtype=float)
        self._cube_at = cube_at
        self._cache = {}
        dt = self.times[1] - self.times[0] if self.times.size > 1 else 1.0
        cap = dt if max_step is None else max_step
        self.step = min(cap, 0.1 / grad_bound) if grad_bound > 0 else cap
        self.n_evals = 0

    @classmethod
    def from_fields(cls, times, v_eps_samples, K, **kw):
        """Build from a list of grid velocity samples (already mollified)."""
        cubes = [mode_cube(v, K) for v in v_eps_samples]
        gb = max((F.c0_norm(F.jacobian(v).reshape((9,) + v.shape[-3:])) for v in v_eps_samples), default=0.0)
        return cls(times, lambda i: cubes[i], gb, **kw)

    def cube(self, i):
        if i not in self._cache:
            self._cache[i] = self._cube_at(i)
        return self._cache[i]

    def forget_before(self, i):
        """Drop cached samples with index below ``i`` (streaming use)."""
        for j in [j for j in self._cache if j < i]:
            del self._cache[j]

    def coefficients(self, t):
        idx, w = lagrange_stencil(self.times, t)
        c = sum(wi * self.cube(int(j)) for j, wi in zip(idx, w) if wi != 0.0)
        return c

    def velocity(self, t, pts):
        self.n_evals += 1
        vals, _ = eval_band_limited(self.coefficients(t), pts, grad=False)
        return vals

    def _rk4(self, t, x, h):
        k1 = self.velocity(t, x)
        k2 = self.velocity(t + h / 2, x + h / 2 * k1)
        k3 = self.velocity(t + h / 2, x + h / 2 * k2)
        k4 = self.velocity(t + h, x + h * k3)
        return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    def integrate(self, t, x, s_targets, step=None):
        """Positions ``Phi_s(t, x)`` for each ``s`` in ``s_targets`` (all of one sign).

        Args:
            t: start time.
            x: points ``(M, 3)`` at time ``t``.
            s_targets: increasing in magnitude, all ``>= 0`` or all ``<= 0``.
            step: RK4 step override.

        Returns:
            list of ``(M, 3)`` arrays, one per target.
        """
        h0 = self.step if step is None else step
        lo, hi = self.times[0], self.times[-1]
        out = []
        pos = np.array(x, dtype=float)
        s_now = 0.0
        for s in s_targets:
            if not (lo - 1e-9 <= t + s <= hi + 1e-9):
                raise OutOfRangeError(f"flow to t={t + s:.6g} leaves [{lo:.6g}, {hi:.6g}]")
            span = s - s_now
            if span != 0.0:
                n = max(1, int(math.ceil(abs(span) / h0 - 1e-12)))
                h = span / n
                for j in range(n):
                    pos = self._rk4(t + s_now + j * h, pos, h)
            s_now = s
            out.append(pos.copy())
        return out

    def flow_map(self, t, x, s):
        """``(t + s, Phi_s(t, x))`` for points ``x`` of shape ``(M, 3)``."""
        return t + s, self.integrate(t, x, [s])[0]

    def step_halving_error(self, t, x, s):
        """Largest difference between the default and half-step RK4 results."""
        a = self.integrate(t, x, [s])[0]
        b = self.integrate(t, x, [s], step=self.step / 2)[0]
        return float(np.abs(a - b).max())


def coarse_points(m):
    """Grid points of an ``m^3`` collocation grid, shape ``(m^3, 3)``."""
    g = np.arange(m) / m
    X = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1)
    return X.reshape(-1, 3)


def displacement(cf: CoarseFlow, t, s, m):
    """Displacement ``Phi_s(t, x) - x`` on an ``m^3`` grid, shape ``(3, m, m, m)``."""
    x = coarse_points(m)
    X = cf.integrate(t, x, [s])[0]
    return (X - x).T.reshape(3, m, m, m)


def jacobian_determinant(disp, n):
    """``det(I + grad d)`` of the map ``x -> x + d(x)`` after upsampling to ``n^3``."""
    d = F.resample(disp, n)
    J = F.jacobian(d)
    J = J + np.eye(3)[:, :, None, None, None]
    return np.linalg.det(np.moveaxis(J, (0, 1), (-2, -1)))


# ---------------------------------------------------------------- phases


@dataclass
class PhaseData:
    """Transported phase ``xi = n X^1`` for a unit integer, on the working grid.

    Attributes:
        t: evaluation time.
        t0: initial time where ``xi = n x^1``.
        foot1: ``X^1 - x^1`` (first component of the back-traced displacement).
        grad_unit: ``grad X^1``; the phase gradient of frequency ``n`` is ``n grad_unit``.
        drift: ``max |grad_unit - e_1|``.
    """

    t: float
    t0: float
    foot1: np.ndarray
    grad_unit: np.ndarray
    drift: float
    x1: np.ndarray = field(repr=False, default=None)
    _factors: dict = field(repr=False, default_factory=dict, compare=False)

    def factor(self, lam, n, cache=True):
        """``exp(i lam n xi_unit)`` on the working grid (memoized unless ``cache`` is false)."""
        key = (float(lam), int(n))
        if key in self._factors:
            return self._factors[key]
        f = np.exp(1j * (lam * n) * (self.x1 + self.foot1))
        if cache:
            self._factors[key] = f
        return f

    def grad(self, n):
        return n * self.grad_unit


def transport_phase(cf: CoarseFlow, t0, t, grid: F.Grid3, m=16, drift_tol=0.25):
    """Phase data at time ``t`` for waves initialized at ``t0``.

    The foot point ``X(t, x) = Phi_{t0 - t}(t, x)`` is constant along
    trajectories, so ``xi = n X^1`` solves the transport equation with
    ``xi(t0) = n x^1``.

    Raises:
        DriftError: if ``|grad xi - n e_1| > drift_tol |n|`` somewhere.
    """
    n = grid.n_per_axis
    if abs(t - t0) < 1e-14:
        d1 = np.zeros((n, n, n))
    else:
        d1 = F.resample(displacement(cf, t, t0 - t, m)[0], n)
    g = F.gradient(d1)
    g[0] += 1.0
    e1 = np.array([1.0, 0.0, 0.0])[:, None, None, None]
    drift = F.c0_norm(g - e1)
    if drift > drift_tol:
        raise DriftError(f"phase gradient drift {drift:.3g} exceeds {drift_tol:g} at t={t:.4g}, t0={t0:.4g}")
    return PhaseData(t, t0, d1, g, drift, x1=grid.x[0])


def transport_residual(cf: CoarseFlow, t0, t, m=8, h=1e-3):
    """``max |(d_t + v_eps . grad) xi_unit|`` at coarse points, by centered differences along trajectories."""
    x = coarse_points(m)
    vals = []
    for sg in (+1, -1):
        y = cf.integrate(t, x, [sg * h])[0]
        s = t0 - (t + sg * h)
        vals.append(cf.integrate(t + sg * h, y, [s])[0][:, 0] if s != 0 else y[:, 0])
    return float(np.abs(vals[0] - vals[1]).max() / (2 * h))


# ---------------------------------------------------------------- mollification along the flow


def mollify_along_flow(t_index, times, cube_at, cf: CoarseFlow, eps_t, n, m=16, blend=None, n_nodes=8):
    """``F_eps(t_i, .)`` = trajectory average of the space-mollified field.

    Args:
        t_index: sample index ``i``.
        times: uniform sample times.
        cube_at: ``j -> complex mode cube (c, W, W, W)`` of the space-mollified field.
        cf: coarse flow.
        eps_t: time kernel radius.
        n: working grid size for the output.
        m: collocation grid size.
        blend: ``None`` for the symmetric kernel, else ``(t_lo, t_hi, tau)`` for the
            one-sided blend ``chi_bar eta^+ + (1 - chi_bar) eta^-``.

    Returns:
        real array ``(c, n, n, n)``.
    """
    t = float(times[t_index])
    x = coarse_points(m)
    if blend is None:
        parts = [(1.0, 0)]
    else:
        cb = float(blend_profile(t, *blend))
        parts = [(w, side) for w, side in ((cb, +1), (1.0 - cb, -1)) if w > 0.0]
    acc = None
    for wpart, side in parts:
        s, w = time_quadrature(eps_t, side, n_nodes)
        order = np.argsort(np.abs(s))
        pos = {}
        for sgn in (+1, -1):
            sel = [k for k in order if np.sign(s[k]) == sgn]
            if sel:
                for k, X in zip(sel, cf.integrate(t, x, [s[k] for k in sel])):
                    pos[k] = X
        for k in range(len(s)):
            if s[k] == 0.0:
                pos[k] = x
            idx, lw = lagrange_stencil(times, t + s[k])
            coef = sum(li * cube_at(int(j)) for j, li in zip(idx, lw) if li != 0.0)
            vals, _ = eval_band_limited(coef, pos[k], grad=False)
            term = wpart * w[k] * vals
            acc = term if acc is None else acc + term
    c = acc.shape[1]
    coarse = acc.T.reshape(c, m, m, m)
    return F.resample(coarse, n)


# ---------------------------------------------------------------- commutator


def advective_commutator(v, f, eps_v, eps_x, L):
    """``v_eps . grad(chi2 * f) - chi2 * (v . grad f)`` with ``chi2`` the twice-applied space mollifier.

    ``f`` may carry leading component axes; products are dealiased.
    """
    v_eps = mollify_velocity(v, eps_v)
    sm = mollify_space(f, eps_x, L, squared=True)
    g_sm = F.gradient(sm)
    g_f = F.gradient(f)
    term1 = F.dealias(sum(v_eps[a] * g_sm[..., a, :, :, :] for a in range(3)))
    term2 = mollify_space(F.dealias(sum(v[a] * g_f[..., a, :, :, :] for a in range(3))), eps_x, L, squared=True)
    return term1 - term2
