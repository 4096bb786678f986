"""Discrete dissipative Euler-Reynolds flows, frequency-energy levels and checks.

A flow is a sequence of :class:`FlowSample` objects on uniform time samples.
Spatially constant fields may be stored with trailing shape ``(1, 1, 1)``;
every operation broadcasts them to the working grid on demand.

Time derivatives use the backward difference ``(f_i - f_{i-1}) / dt`` and the
forward difference at the first sample.  Products that enter a divergence are
dealiased with the 2/3 rule.  With these conventions the dissipation measure
is *defined* by the discrete energy identity, so a flow's own residuals vanish
to rounding and the checks measure consistency of the stored fields.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import fields as F
from .errors import IntervalTooShort, WellPreparednessError

log = logging.getLogger(__name__)

COMPONENTS = ("v", "p", "R_l", "R_l1", "R_G", "kappa_G", "phi_l", "phi_G", "mu")
N_COMPONENTS = {"v": 3, "p": 1, "R_l": 6, "R_l1": 6, "R_G": 6, "kappa_G": 1, "phi_l": 3, "phi_G": 3, "mu": 1}
SCALARS = ("p", "kappa_G", "mu")
# Frobenius weights of the sym storage order
SYM_WEIGHTS = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])


# ---------------------------------------------------------------- frames

DELTA_1 = np.diag([0.0, 1.0, 0.5])
DELTA_1STAR = np.diag([0.0, 0.5, 1.0])
DELTA_2STAR = np.diag([1.0, 0.0, 0.5])


def frame_shift(l):
    """Shift ``s`` with physical axis ``(c + s) mod 3`` for canonical axis ``c`` of stage ``l``."""
    if l not in (1, 2, 3):
        raise ValueError(f"stage index {l} not in 1..3")
    return l - 1


def permute_array(a, kind, s, inverse=False):
    """Move a field between the physical frame and the canonical frame of shift ``s``.

    Args:
        a: array with components on axis -4 (vectors, sym tensors) or none (scalars).
        kind: ``"scalar"``, ``"vector"`` or ``"sym"``.
        s: frame shift.
        inverse: map canonical to physical instead.
    """
    if s == 0:
        return a
    sp = [(c + s) % 3 for c in range(3)]
    if inverse:
        sp = [sp.index(c) for c in range(3)]
    nd = a.ndim
    axes = list(range(nd - 3)) + [nd - 3 + sp[c] for c in range(3)]
    out = np.transpose(a, axes)
    if kind == "vector":
        out = out[..., sp, :, :, :]
    elif kind == "sym":
        idx = [F.SYM_INDEX[sp[a_], sp[b_]] for a_, b_ in F.SYM_PAIRS]
        out = out[..., idx, :, :, :]
    return np.ascontiguousarray(out)


def permute_matrix(M, s):
    """Physical-frame matrix of a canonical-frame constant tensor."""
    P = np.zeros((3, 3))
    for c in range(3):
        P[(c + s) % 3, c] = 1.0
    return P @ M @ P.T


def kernel_projection_defect(R, l):
    """Largest entry of a sym tensor field outside ``ker dx^l (x) ker dx^l``."""
    a = l - 1
    idx = [i for i, (j, k) in enumerate(F.SYM_PAIRS) if a in (j, k)]
    return max(float(np.abs(R[..., i, :, :, :]).max()) for i in idx)


# ---------------------------------------------------------------- levels


@dataclass(frozen=True)
class FrequencyEnergyLevels:
    """Compound frequency-energy levels ``(Xi, e_v, e_phi, e_R, e_G)`` of order ``L``."""

    Xi: float
    e_v: float
    e_phi: float
    e_R: float
    e_G: float
    L: int = 2
    stage: tuple = (1, 2)

    def __post_init__(self):
        if self.Xi < 2:
            raise ValueError(f"Xi={self.Xi} must be at least 2")
        if not (self.e_v >= self.e_phi >= self.e_R > self.e_G > 0):
            raise ValueError("need e_v >= e_phi >= e_R > e_G > 0")
        if self.L < 1:
            raise ValueError("order L must be positive")

    @property
    def e_phi_under(self):
        return self.e_phi ** (1.0 / 3.0) * self.e_R ** (2.0 / 3.0)

    @property
    def tau(self):
        """Natural time scale ``(Xi e_v^{1/2})^{-1}``."""
        return 1.0 / (self.Xi * math.sqrt(self.e_v))

    def bounds(self):
        """``h_F`` for every decomposed component."""
        return {
            "R_l": self.e_phi,
            "R_l1": self.e_R,
            "R_G": self.e_G,
            "kappa_l": self.e_phi,
            "kappa_G": self.e_R,
            "phi_l": self.e_phi**1.5,
            "phi_G": self.e_phi_under**1.5,
        }

    def admissible_N(self):
        """Smallest ``N`` allowed by the stage hypotheses."""
        ev, ep, eg, eu = self.e_v, self.e_phi, self.e_G, self.e_phi_under
        return max(
            (ev / eg) * math.sqrt(ep / eu),
            math.sqrt(ev / ep) * (ep / eg) ** 2 * (ep / eu),
            (ev / ep) ** 1.5,
            1.0,
        )

    def next(self, c_hat, N):
        """Levels of a stage output for the constant ``c_hat``."""
        l, _ = self.stage
        return FrequencyEnergyLevels(
            N * c_hat * self.Xi,
            c_hat * self.e_phi,
            c_hat * self.e_phi_under,
            c_hat * self.e_G,
            math.sqrt(math.sqrt(self.e_v / self.e_phi) / N) * self.e_phi,
            self.L,
            (l % 3 + 1, (l + 1) % 3 + 1),
        )

    def check_interval(self, length):
        if length < 8 * self.tau:
            raise IntervalTooShort(f"interval length {length:.4g} < 8 tau = {8 * self.tau:.4g}")

    def as_dict(self):
        return {"Xi": self.Xi, "e_v": self.e_v, "e_phi": self.e_phi, "e_R": self.e_R, "e_G": self.e_G, "L": self.L, "stage": list(self.stage)}


# ---------------------------------------------------------------- samples


def expand(a, n):
    """Broadcast a possibly constant field to the ``n^3`` grid (read-only view)."""
    a = np.asarray(a)
    if a.shape[-3:] == (n, n, n):
        return a
    return np.broadcast_to(a, a.shape[:-3] + (n, n, n))


def is_constant(a):
    return np.asarray(a).shape[-3:] == (1, 1, 1)


def const_field(values, shape_lead=()):
    """Constant field with trailing ``(1, 1, 1)``."""
    v = np.asarray(values, dtype=float).reshape(shape_lead + (1, 1, 1))
    v.setflags(write=False)
    return v


@dataclass
class FlowSample:
    """Fields of a dissipative Euler-Reynolds flow at one time."""

    t: float
    v: np.ndarray
    p: np.ndarray
    R_l: np.ndarray
    R_l1: np.ndarray
    R_G: np.ndarray
    kappa_G: np.ndarray
    phi_l: np.ndarray
    phi_G: np.ndarray
    mu: np.ndarray

    @classmethod
    def zeros(cls, t):
        z = lambda c: const_field(np.zeros(c), (c,)) if c > 1 else const_field(0.0)  # noqa: E731
        return cls(t, z(3), z(1), z(6), z(6), z(6), z(1), z(3), z(3), z(1))

    def R(self, n):
        return expand(self.R_l, n) + expand(self.R_l1, n) + expand(self.R_G, n)

    @property
    def kappa_l(self):
        return 0.5 * F.trace(self.R_l)

    def kappa(self, n):
        return expand(self.kappa_l, n) + expand(self.kappa_G, n)

    def phi(self, n):
        return expand(self.phi_l, n) + expand(self.phi_G, n)

    def component(self, name):
        return getattr(self, name)

    def stacked(self, n):
        """All components stacked in :data:`COMPONENTS` order, shape ``(30, n, n, n)``."""
        parts = []
        for name in COMPONENTS:
            a = expand(getattr(self, name), n)
            parts.append(a.reshape((-1, n, n, n)) if name not in SCALARS else a.reshape((1, n, n, n)))
        return np.concatenate(parts, axis=0)

    @classmethod
    def from_stacked(cls, t, arr):
        out, i = {}, 0
        for name in COMPONENTS:
            c = N_COMPONENTS[name]
            out[name] = arr[i] if name in SCALARS else arr[i : i + c]
            i += c
        return cls(t, **out)

    def permuted(self, s, inverse=False):
        kinds = {"v": "vector", "phi_l": "vector", "phi_G": "vector", "R_l": "sym", "R_l1": "sym", "R_G": "sym"}
        kw = {name: permute_array(getattr(self, name), kinds.get(name, "scalar"), s, inverse) for name in COMPONENTS}
        return FlowSample(self.t, **kw)

    def digest(self, n):
        import hashlib

        h = hashlib.sha256()
        h.update(np.float64(self.t).tobytes())
        for name in COMPONENTS:
            h.update(np.ascontiguousarray(expand(getattr(self, name), n), dtype=float).tobytes())
        return h.hexdigest()


class DissipativeEulerReynoldsFlow:
    """Uniformly sampled flow of stage type ``(l, l+1)``.

    Args:
        n: grid points per axis.
        times: uniform sample times.
        samples: sequence of :class:`FlowSample` or a callable ``i -> FlowSample``.
        stage: ``(l, l+1)`` mod 3.
    """

    def __init__(self, n, times, samples, stage=(1, 2)):
        self.n = int(n)
        self.grid = F.Grid3(self.n, tuple(times))
        self.times = np.asarray(self.grid.times)
        self._samples = samples
        self.stage = tuple(stage)

    @property
    def dt(self):
        return self.grid.dt

    def __len__(self):
        return self.times.size

    def __getitem__(self, i):
        if i < 0:
            i += len(self)
        if callable(self._samples):
            return self._samples(i)
        return self._samples[i]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def index_of(self, t):
        i = int(round((t - self.times[0]) / self.dt)) if len(self) > 1 else 0
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"t={t} is not a sample time")
        return i


def zero_flow(n, times, stage=(1, 2)):
    times = tuple(times)
    samples = [FlowSample.zeros(t) for t in times]
    return DissipativeEulerReynoldsFlow(n, times, samples, stage)


# ---------------------------------------------------------------- discrete operators


def ddt(prev, cur, nxt, dt):
    """Backward difference, or forward difference when ``prev`` is ``None``."""
    if prev is not None:
        return (np.asarray(cur) - np.asarray(prev)) / dt
    if nxt is None:
        return np.zeros_like(np.asarray(cur))
    return (np.asarray(nxt) - np.asarray(cur)) / dt


def _neighbors(flow, i):
    prev = flow[i - 1] if i > 0 else None
    nxt = flow[i + 1] if (i == 0 and len(flow) > 1) else None
    return prev, nxt


def kinetic(v):
    return 0.5 * F.m_dot(v, v)


def energy_flux_divergence(v, p):
    """``div M((M(|v|^2)/2 + p) v)``."""
    n = v.shape[-1]
    e = kinetic(v) + expand(p, n)
    return F.divergence(F.dealias(e * v))


def er_terms(prev: FlowSample | None, cur: FlowSample, nxt: FlowSample | None, dt, n):
    """Terms of the momentum equation at ``cur``: ``(dv/dt, div M(v v), grad p, div R)``."""
    v = expand(cur.v, n)
    dv = ddt(None if prev is None else expand(prev.v, n), v, None if nxt is None else expand(nxt.v, n), dt)
    adv = F.div_sym(F.m_outer_sym(v, v))
    gp = F.gradient(np.array(expand(cur.p, n)))
    dR = F.div_sym(np.array(cur.R(n)))
    return dv, adv, gp, dR


def energy_terms(prev: FlowSample | None, cur: FlowSample, nxt: FlowSample | None, dt, n):
    """Terms of the relaxed energy identity at ``cur``.

    Returns ``(D, Dt_kappa, div_vR, div_phi)`` with
    ``D = d/dt(M(|v|^2)/2) + div M((M(|v|^2)/2 + p) v)``.
    """
    v = expand(cur.v, n)
    ek = kinetic(v)
    ek_p = None if prev is None else kinetic(expand(prev.v, n))
    ek_n = None if nxt is None else kinetic(expand(nxt.v, n))
    D = ddt(ek_p, ek, ek_n, dt) + energy_flux_divergence(v, cur.p)
    k = cur.kappa(n)
    k_p = None if prev is None else prev.kappa(n)
    k_n = None if nxt is None else nxt.kappa(n)
    Dk = ddt(k_p, k, k_n, dt) + F.divergence(F.dealias(v * k))
    dvR = F.divergence(F.m_contract(np.array(cur.R(n)), v))
    dphi = F.divergence(np.array(cur.phi(n)))
    return D, Dk, dvR, dphi


def dissipation_from_identity(prev, cur, nxt, dt, n):
    """``mu = -D + D_t kappa + div(v R) + div phi`` at ``cur``."""
    D, Dk, dvR, dphi = energy_terms(prev, cur, nxt, dt, n)
    return -D + Dk + dvR + dphi


# ---------------------------------------------------------------- norms of derivatives


def _weights(kind):
    return SYM_WEIGHTS if kind == "sym" else None


def tensor_c0(a, kind="vector"):
    """Pointwise Euclidean (Frobenius for sym storage) norm, maximized over the grid."""
    a = np.asarray(a)
    if kind == "scalar":
        return float(np.abs(a).max())
    w = _weights(kind)
    sq = np.abs(a) ** 2
    if w is not None:
        sq = sq * w.reshape((6, 1, 1, 1))
    return float(np.sqrt(sq.sum(axis=-4)).max())


def derivative_norms(a, kind, max_order, n):
    """C0 norms of ``grad^j a`` for ``j = 0..max_order`` (all multi-indices with multiplicity)."""
    a = np.array(expand(a, n), dtype=float)
    if kind == "scalar":
        a = a[None]
        kind_w = None
    else:
        kind_w = _weights(kind)
    out = []
    if is_constant(a) or not a.any():
        out.append(tensor_c0(a, "sym" if kind == "sym" else "vector"))
        out += [0.0] * max_order
        return out
    ah = F.fft(a)
    real = True
    nc = a.shape[0]
    w = np.ones(nc) if kind_w is None else kind_w
    ik = [F._ik(n, ax, real) for ax in range(3)]
    for j in range(max_order + 1):
        acc = np.zeros((n, n, n))
        for mi in _multi_indices(j):
            sym = 1.0
            for ax in mi:
                sym = sym * ik[ax]
            d = F.ifft(ah * sym, n)
            acc += (w.reshape(nc, 1, 1, 1) * d * d).sum(axis=0)
        out.append(float(np.sqrt(acc.max())))
    return out


def _multi_indices(j):
    import itertools

    return list(itertools.product(range(3), repeat=j))


def advective_derivative(prev, cur, nxt, v, dt):
    """``D_t F = dF/dt + div M(v F)`` for component-stacked ``F`` (vector ``v``)."""
    n = v.shape[-1]
    dF = ddt(prev, cur, nxt, dt)
    c = np.asarray(expand(cur, n))
    if c.ndim == 3:
        flux = F.dealias(v * c)
        return dF + F.divergence(flux)
    flux = F.dealias(v[None, :] * c[:, None])  # (nc, 3, n, n, n)
    return dF + np.stack([F.divergence(flux[k]) for k in range(c.shape[0])])


# ---------------------------------------------------------------- level verification

ROW_KINDS = {"R_l": "sym", "R_l1": "sym", "R_G": "sym", "kappa_l": "scalar", "kappa_G": "scalar", "phi_l": "vector", "phi_G": "vector"}


def _get(sample: FlowSample, name):
    return sample.kappa_l if name == "kappa_l" else getattr(sample, name)


def level_ratios(prev, cur, nxt, levels: FrequencyEnergyLevels, dt, n):
    """Ratios of measured derivative norms to their level bounds at one sample.

    Returns:
        dict ``"row:a=j"`` or ``"row:Dt:a=j"`` -> ratio.
    """
    L, Xi, ev = levels.L, levels.Xi, levels.e_v
    out = {}
    v = np.array(expand(cur.v, n))
    dv = derivative_norms(v, "vector", L, n)
    for j in range(1, L + 1):
        out[f"v:a={j}"] = dv[j] / (Xi**j * math.sqrt(ev))
    dp = derivative_norms(cur.p, "scalar", L, n)
    for j in range(1, L + 1):
        out[f"p:a={j}"] = dp[j] / (Xi**j * ev)
    Dp = advective_derivative(
        None if prev is None else expand(prev.p, n), expand(cur.p, n), None if nxt is None else expand(nxt.p, n), v, dt
    )
    dDp = derivative_norms(Dp, "scalar", L - 1, n)
    for j in range(L):
        out[f"p:Dt:a={j}"] = dDp[j] / (Xi ** (j + 1) * ev**1.5)
    for name, h in levels.bounds().items():
        kind = ROW_KINDS[name]
        a = _get(cur, name)
        d = derivative_norms(a, kind, L, n)
        for j in range(L + 1):
            out[f"{name}:a={j}"] = d[j] / (Xi**j * h)
        pa = None if prev is None else expand(_get(prev, name), n)
        na = None if nxt is None else expand(_get(nxt, name), n)
        Da = advective_derivative(pa, expand(a, n), na, v, dt)
        dD = derivative_norms(Da, kind, L - 1, n)
        for j in range(L):
            out[f"{name}:Dt:a={j}"] = dD[j] / (Xi ** (j + 1) * math.sqrt(ev) * h)
    return out


def verify_levels(flow: DissipativeEulerReynoldsFlow, levels: FrequencyEnergyLevels, tol=1.0, indices=None):
    """Maximum level ratio per row over the samples and a pass flag per row."""
    n = flow.n
    worst = {}
    idx = range(len(flow)) if indices is None else indices
    for i in idx:
        prev, nxt = _neighbors(flow, i)
        for k, r in level_ratios(prev, flow[i], nxt, levels, flow.dt, n).items():
            worst[k] = max(worst.get(k, 0.0), r)
    return {k: {"ratio": r, "pass": bool(r <= tol)} for k, r in worst.items()}


def measure_weighted_norm(F_samples, v_eps_samples, i, M, R, Xi, N, L, tau_hat, dt, kind="vector"):
    """Discrete weighted norm ``max_{r<=R, |a|+r<=M+R} |grad^a Dbar_t^r F| / (N^{(|a|+1-L)_+/L} Xi^|a| tau_hat^-r)``.

    ``Dbar_t`` uses the mollified velocity and backward differences, so sample
    ``i`` needs ``i - R`` earlier samples.
    """
    if R > 2 or R < 0:
        raise ValueError("R must lie in 0..2")
    if i - R < 0:
        raise ValueError("not enough earlier samples for the requested R")
    n = np.asarray(v_eps_samples[i]).shape[-1]
    # Dbar_t^r F at samples i-R+r..i
    layers = [[np.array(expand(F_samples[j], n), dtype=float) for j in range(i - R, i + 1)]]
    for r in range(1, R + 1):
        prev_layer = layers[-1]
        new = []
        for q in range(1, len(prev_layer)):
            j = i - R + r + (q - 1)
            v = np.array(expand(v_eps_samples[j], n))
            new.append(advective_derivative(prev_layer[q - 1], prev_layer[q], None, v, dt))
        layers.append(new)
    best = 0.0
    for r in range(R + 1):
        Fr = layers[r][-1]
        d = derivative_norms(Fr, kind, M + R - r, n)
        for a in range(M + R - r + 1):
            w = N ** (max(a + 1 - L, 0) / L) * Xi**a * tau_hat ** (-r)
            best = max(best, d[a] / w)
    return best


# ---------------------------------------------------------------- flow checks


@dataclass
class CheckTable:
    """Named measurements with thresholds; ``passed`` is the conjunction."""

    rows: dict = field(default_factory=dict)

    def add(self, name, value, threshold, kind="le"):
        ok = value <= threshold if kind == "le" else value >= threshold
        self.rows[name] = {"value": float(value), "threshold": float(threshold), "kind": kind, "pass": bool(ok)}

    @property
    def passed(self):
        return all(r["pass"] for r in self.rows.values())

    def as_dict(self):
        return dict(self.rows)

    def lines(self):
        return [f"{'PASS' if r['pass'] else 'FAIL'} {k}: {r['value']:.3e} ({'<=' if r['kind'] == 'le' else '>='} {r['threshold']:.1e})" for k, r in self.rows.items()]


def _rms(a):
    return F.l2_norm(np.asarray(a))


class FlowChecker:
    """Streaming consistency checks for a flow: divergence, momentum and energy identities.

    Feed samples in order with :meth:`push`; the residuals at sample ``i`` use
    sample ``i - 1`` (or ``i + 1`` at the first sample).
    """

    def __init__(self, n, dt, stage=(1, 2), skip_first=False):
        self.n, self.dt, self.stage = n, dt, stage
        self.skip_first = skip_first
        self.max_div = 0.0
        self.max_v = 0.0
        self.max_er = 0.0
        self.max_divR = 0.0
        self.max_en = 0.0
        self.max_en_scale = 0.0
        self.min_mu = math.inf
        self.max_sub = 0.0
        self._prev = None
        self._pending = None
        self.count = 0

    def _eval(self, prev, cur, nxt):
        n = self.n
        v = np.array(expand(cur.v, n))
        self.max_div = max(self.max_div, float(np.abs(F.divergence(v)).max()))
        self.max_v = max(self.max_v, float(np.abs(F.jacobian(v)).max()) if not is_constant(cur.v) else 0.0)
        dv, adv, gp, dR = er_terms(prev, cur, nxt, self.dt, n)
        self.max_er = max(self.max_er, _rms(dv + adv + gp - dR))
        self.max_divR = max(self.max_divR, _rms(dR), _rms(dv) + _rms(adv) + _rms(gp))
        D, Dk, dvR, dphi = energy_terms(prev, cur, nxt, self.dt, n)
        mu = np.array(expand(cur.mu, n))
        res = D - Dk - dvR - dphi + mu
        self.max_en = max(self.max_en, float(np.abs(res).max()))
        self.max_en_scale = max(self.max_en_scale, *(float(np.abs(x).max()) for x in (D, Dk, dvR, dphi, mu)))
        self.min_mu = min(self.min_mu, float(mu.min()))
        l, l1 = self.stage
        self.max_sub = max(
            self.max_sub,
            kernel_projection_defect(np.array(expand(cur.R_l, n)), l),
            kernel_projection_defect(np.array(expand(cur.R_l1, n)), l1),
            float(np.abs(np.asarray(cur.phi_l)[l - 1]).max()),
        )
        self.count += 1

    def push(self, sample: FlowSample):
        """Add the next sample; evaluates every sample that has its neighbours."""
        if self._prev is None:
            self._pending = sample
            self._prev = sample
            return
        if self._pending is not None:
            if not self.skip_first:
                self._eval(None, self._pending, sample)
            self._pending = None
        self._eval(self._prev, sample, None)
        self._prev = sample

    def finish(self):
        if self._pending is not None and not self.skip_first:
            self._eval(None, self._pending, None)
            self._pending = None

    def table(self, tolerance_scale=1.0):
        t = CheckTable()
        vs = max(self.max_v, 1e-300)
        t.add("divergence_rel", self.max_div / vs if self.max_v > 0 else self.max_div, 1e-10 * tolerance_scale)
        er = self.max_er / self.max_divR if self.max_divR > 0 else self.max_er
        t.add("euler_reynolds_rel", er, 1e-6 * tolerance_scale)
        en = self.max_en / self.max_en_scale if self.max_en_scale > 0 else self.max_en
        t.add("energy_identity_rel", en, 1e-10 * tolerance_scale)
        t.add("mu_min", self.min_mu if self.count else 0.0, -1e-10 * tolerance_scale, kind="ge")
        t.add("subspace_defect", self.max_sub, 1e-12 * tolerance_scale)
        return t


def check_flow(flow: DissipativeEulerReynoldsFlow, tolerance_scale=1.0, skip_first=False):
    """Run :class:`FlowChecker` over every sample of ``flow``."""
    ch = FlowChecker(flow.n, flow.dt, flow.stage, skip_first=skip_first)
    for s in flow:
        ch.push(s)
    ch.finish()
    return ch.table(tolerance_scale)


# ---------------------------------------------------------------- well-preparedness


@dataclass(frozen=True)
class WellPreparedness:
    """Data ``(e_bar, e_under, I_l, I_G)`` of a well-prepared flow for stage ``l``.

    Attributes:
        e_bar: callable ``t -> e_bar(t) >= 0``.
        e_under: the constant lower level ``e_under``.
        I_l: ``(lo, hi)`` of the interval carrying ``R_l`` and ``phi_l`` remainders.
        I_G: ``(lo, hi)`` of the interval carrying ``e_bar``.
        delta_bar: smallness threshold.
        M: ratio bound ``e_under >= e_phi / M``.
        convention: ``"plain"`` (principal part ``-e_bar delta_[l]``) or
            ``"star"`` (``-e_bar delta_[l*]``).
    """

    e_bar: Callable
    e_under: float
    I_l: tuple
    I_G: tuple
    delta_bar: float = 0.01
    M: float = 1.0
    convention: str = "plain"

    def principal(self, l):
        base = DELTA_1 if self.convention == "plain" else DELTA_1STAR
        return permute_matrix(base, frame_shift(l))

    def remainder(self, sample: FlowSample, l):
        """``R_[l o] = R_l + e_bar(t) delta``."""
        D = F.const_sym(self.principal(l)).reshape(6, 1, 1, 1)
        return np.asarray(sample.R_l) + float(self.e_bar(sample.t)) * D


def well_prepared_record(sample: FlowSample, wp: WellPreparedness, l):
    """``(t, e_bar, |R_[l o]|, |phi_l|)`` for one sample."""
    rem = wp.remainder(sample, l)
    return sample.t, float(wp.e_bar(sample.t)), tensor_c0(rem, "sym"), tensor_c0(sample.phi_l, "vector")


def well_prepared_table(records, levels: FrequencyEnergyLevels, wp: WellPreparedness, tol=1e-12):
    """Check table of the well-preparedness conditions from per-sample records.

    Args:
        records: iterable of ``(t, e_bar, |R_[l o]|, |phi_l|)``.
        tol: floor below which a remainder counts as zero.
    """
    tau = levels.tau
    t = CheckTable()
    small = supp_rem = supp_e = neg_e = 0.0
    for ts, eb, rn, pn in records:
        neg_e = max(neg_e, -eb)
        if ts <= wp.I_l[1] + tau:
            if eb <= 0:
                if rn + pn > tol:
                    small = math.inf
            else:
                small = max(small, rn / eb + pn / eb**1.5)
        if not (wp.I_l[0] - 1e-12 <= ts <= wp.I_l[1] + 1e-12):
            supp_rem = max(supp_rem, rn, pn)
        if not (wp.I_G[0] - 1e-12 <= ts <= wp.I_G[1] + 1e-12):
            supp_e = max(supp_e, abs(eb))
    t.add("smallness", small, wp.delta_bar)
    t.add("remainder_support", supp_rem, tol)
    t.add("e_bar_support", supp_e, tol)
    t.add("e_bar_nonnegative", neg_e, 0.0)
    t.add("e_under_ratio", wp.e_under * wp.M / levels.e_phi, 1.0 - 1e-12, kind="ge")
    return t


def check_well_prepared(flow: DissipativeEulerReynoldsFlow, levels: FrequencyEnergyLevels, wp: WellPreparedness, tol=1e-12, raise_on_fail=False):
    """Measure the well-preparedness conditions on the samples of ``flow``.

    Returns a :class:`CheckTable`; raises :class:`WellPreparednessError` on
    failure when ``raise_on_fail`` is set.
    """
    l = flow.stage[0]
    t = well_prepared_table((well_prepared_record(s, wp, l) for s in flow), levels, wp, tol)
    if raise_on_fail and not t.passed:
        bad = [k for k, r in t.rows.items() if not r["pass"]]
        raise WellPreparednessError(f"well-preparedness fails: {bad}")
    return t


# ---------------------------------------------------------------- builders


def stationary_shear(n, times, amplitude=0.1, mode=1, stage=(1, 2)):
    """Exact stationary Euler flow ``v = A sin(2 pi m x2) e1`` with zero stress and pressure."""
    g = F.Grid3(n)
    v = np.zeros((3, n, n, n))
    v[0] = amplitude * np.sin(2 * np.pi * mode * g.x[1])
    v.setflags(write=False)
    z = FlowSample.zeros(0.0)
    samples = [replace(z, t=float(t), v=v) for t in times]
    return DissipativeEulerReynoldsFlow(n, times, samples, stage)
