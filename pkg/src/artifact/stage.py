"""One convex-integration stage on a sampled dissipative Euler-Reynolds flow.

The stage works in the canonical frame of its index ``l`` (waves oscillate
along ``x^1``), so the input is permuted on entry and the output permuted back.
Samples are produced one at a time: each output sample needs the input inside
a time window of radius ``eps_t`` plus the interpolation stencil, and the
previous output sample for the backward time differences.

The new stress and current are closed exactly: ``R*`` gets the right inverse of
the divergence applied to the residual of the momentum equation and ``phi*_G``
the inverse divergence of the residual of the energy identity, so the output is
a dissipative Euler-Reynolds flow to rounding.  Their sizes are measured and
reported as the constants ``c_hat`` and ``C_L``.
"""

from __future__ import annotations

import hashlib
import logging
import math
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import fields as F
from . import transport as T
from . import waves as W
from .errors import AdmissibilityError, AliasError, IntervalTooShort, WellPreparednessError
from .flow import (
    DELTA_1,
    DELTA_1STAR,
    DELTA_2STAR,
    CheckTable,
    DissipativeEulerReynoldsFlow,
    FlowChecker,
    FlowSample,
    FrequencyEnergyLevels,
    WellPreparedness,
    check_well_prepared,
    const_field,
    energy_terms,
    expand,
    frame_shift,
    kernel_projection_defect,
    kinetic,
    permute_array,
    tensor_c0,
    well_prepared_record,
    well_prepared_table,
)
from .kernels import mode_cube

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
SYM_ID = F.const_sym(np.eye(3)).reshape(6, 1, 1, 1)
_PI1 = (1, 5)  # (22, 23)
_PI2 = (2, 4)  # (33, 13)
_PI3 = (0, 3)  # (11, 12)


def _pick(R, idx):
    out = np.zeros_like(R)
    for i in idx:
        out[i] = R[i]
    return out


def _csym(M):
    return F.const_sym(M).reshape(6, 1, 1, 1)


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class StageParameters:
    """Numbers derived from a :class:`StageConfig` and the input levels."""

    N: float
    eps_v: float
    eps_x: float
    eps_t: float
    b_hat: float
    tau: float
    tau_hat: float
    lam: float
    lam_cycles: int
    K_v: int
    K_x: int
    e_phi_under: float
    max_mode: float

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class StageConfig:
    """Parameters of one stage.

    Attributes:
        N: frequency growth factor.
        Z: preparation boost (used by :func:`prepare_initial` callers).
        B_lambda: frequency multiplier, ``lam = round(B_lambda N Xi)`` in whole cycles.
        K0: energy increment constant (doubled when the output is not well prepared).
        b0, c0, c1: lifespan and mollification constants.
        delta_bar: well-preparedness threshold.
        n: grid points per axis.
        include_phi: also build current waves (needs the large frequency table).
        m_coarse: collocation grid for transported quantities.
        n_nodes: time quadrature nodes per one-sided kernel.
        max_K0_doublings: escalation cap.
        drift_tol: allowed phase gradient drift.
    """

    N: float
    Z: float = 1.1
    B_lambda: float = 1.5
    K0: float = 100.0
    b0: float = 1.0
    c0: float = 0.5
    c1: float = 0.5
    delta_bar: float = 0.01
    n: int = 64
    include_phi: bool = False
    m_coarse: int = 16
    n_nodes: int = 8
    max_K0_doublings: int = 4
    drift_tol: float = 0.5

    def table(self):
        return W.full_table() if self.include_phi else W.desk_table()

    def derive(self, levels: FrequencyEnergyLevels) -> StageParameters:
        """Mollification scales, lifespan and base frequency for the given input levels."""
        L, Xi, N = levels.L, levels.Xi, self.N
        ev, ep = levels.e_v, levels.e_phi
        eps_v = self.c1 * N ** (-1.0 / L) / Xi
        eps_x = self.c0 * N ** (-1.0 / L) / Xi
        eps_t = self.c0 / (N * Xi * math.sqrt(ep))
        b_hat = self.b0 * math.sqrt(math.sqrt(ev) / (math.sqrt(ep) * self.B_lambda * N))
        tau = levels.tau
        cycles = max(1, int(round(self.B_lambda * N * Xi / TWO_PI)))
        n_top = self.table().max_abs()
        return StageParameters(
            N=N,
            eps_v=eps_v,
            eps_x=eps_x,
            eps_t=eps_t,
            b_hat=b_hat,
            tau=tau,
            tau_hat=b_hat * tau,
            lam=TWO_PI * cycles,
            lam_cycles=cycles,
            K_v=T.velocity_band(eps_v),
            K_x=T.space_band(eps_x),
            e_phi_under=levels.e_phi_under,
            max_mode=(5.0 / 3.0) * n_top * cycles,
        )

    def check(self, levels: FrequencyEnergyLevels):
        """Raise unless ``N`` is admissible and the grid resolves every wave band.

        Raises:
            AdmissibilityError: ``N`` below the admissibility threshold.
            AliasError: the outer band edge of the top frequency reaches Nyquist.
        """
        need = levels.admissible_N()
        if self.N < need * (1 - 1e-12):
            raise AdmissibilityError(f"N={self.N:g} below the admissible minimum {need:.6g}")
        p = self.derive(levels)
        F.Grid3(self.n).require_modes(p.max_mode)
        if 2 * max(p.K_v, p.K_x) >= self.n:
            raise AliasError("mollifier band does not fit the grid")
        return p


# ---------------------------------------------------------------- cutoff profiles


@dataclass(frozen=True)
class DropProfile:
    """``value * (1 - smooth_step((t - start)/(end - start)))^2``: constant, then a smooth drop to 0."""

    value: float
    start: float
    end: float

    def sqrt(self, t):
        s = (np.asarray(t, dtype=float) - self.start) / (self.end - self.start)
        return math.sqrt(self.value) * (1.0 - W.smooth_step(s))

    def __call__(self, t):
        return self.sqrt(t) ** 2


@dataclass(frozen=True)
class Scaled:
    """``factor * base(t)`` for a time profile ``base``."""

    base: object
    factor: float

    def __call__(self, t):
        return self.factor * self.base(t)


def backward_difference(profile, times):
    """``(f(t_i) - f(t_{i-1}))/dt`` on the samples, forward difference at the first one."""
    times = np.asarray(times, dtype=float)
    f = np.array([float(profile(t)) for t in times])
    if f.size < 2:
        return np.zeros_like(f)
    dt = times[1] - times[0]
    d = np.empty_like(f)
    d[1:] = (f[1:] - f[:-1]) / dt
    d[0] = (f[1] - f[0]) / dt
    return d


# ---------------------------------------------------------------- preparation


def prepared_levels(Xi0, E0, Z, L=2):
    """Boosted levels ``(Xi0, Z^{7/2}E0, Z^{5/2}E0, Z E0, E0)``."""
    return FrequencyEnergyLevels(Xi0, Z**3.5 * E0, Z**2.5 * E0, Z * E0, E0, L, (1, 2))


def prepare_initial(flow: DissipativeEulerReynoldsFlow, Xi0, E0, Z, sup_I0, sup_I1, delta_bar=0.01, L=2):
    """Seed the principal stresses of stage 1 on a flow with plain levels ``(Xi0, E0)``.

    Sets ``p~ = p - e_Z``, ``R~_[1] = R_[1] - e_Z delta_[1]``,
    ``R~_[2] = R_[2] - e_Z delta_[2*]`` and ``mu~ = mu - (3/4) d_t e_Z`` with the
    time difference of the flow checks, leaving ``v``, ``R_G``, ``kappa_G`` and
    ``phi`` unchanged.  ``e_Z^{1/2}`` is ``Z^{1/4} E0^{1/2}`` until a smooth drop
    centred at ``sup_I1 + tau0/2`` of half-width ``tau0/8``, ``tau0 = (Xi0 E0^{1/2})^{-1}``.

    Returns:
        ``(prepared_flow, levels, well_preparedness, e_Z)``.

    Raises:
        IntervalTooShort: if the time grid is shorter than ``8 tau0``.
    """
    tau0 = 1.0 / (Xi0 * math.sqrt(E0))
    t0, t1 = float(flow.times[0]), float(flow.times[-1])
    if t1 - t0 < 8 * tau0:
        raise IntervalTooShort(f"interval length {t1 - t0:.4g} < 8 tau0 = {8 * tau0:.4g}")
    if flow.stage[0] != 1:
        raise ValueError("preparation targets stage 1")
    centre = sup_I1 + tau0 / 2
    eZ = DropProfile(math.sqrt(Z) * E0, centre - tau0 / 8, centre + tau0 / 8)
    d_eZ = backward_difference(eZ, flow.times)
    D1, D2 = _csym(DELTA_1), _csym(DELTA_2STAR)
    tr1 = float(np.trace(DELTA_1STAR))
    out = []
    for i, s in enumerate(flow):
        e = float(eZ(s.t))
        out.append(
            replace(
                s,
                p=np.asarray(s.p) - e,
                R_l=np.asarray(s.R_l) - e * D1,
                R_l1=np.asarray(s.R_l1) - e * D2,
                mu=np.asarray(s.mu) - 0.5 * tr1 * d_eZ[i],
            )
        )
    levels = prepared_levels(Xi0, E0, Z, L)
    wp = WellPreparedness(eZ, math.sqrt(Z) * E0, (t0, sup_I1), (t0, sup_I1 + tau0), delta_bar, Z**2, "plain")
    return DissipativeEulerReynoldsFlow(flow.n, flow.times, out, flow.stage), levels, wp, eZ


def aligned_times(t0, sup_I_G, tau, tau_hat, t_end, per_lifespan=4):
    """Uniform samples with ``dt <= tau_hat/per_lifespan`` and a sample at ``sup_I_G + tau/42``.

    The aligned sample is the first one after the energy increment has dropped
    to zero, so the dissipation added by the stage sits at a single sample
    inside the output support.
    """
    a = sup_I_G + tau / 42.0 - t0
    steps = max(1, math.ceil(a / (tau_hat / per_lifespan) - 1e-12))
    dt = a / steps
    n_t = math.ceil((t_end - t0) / dt - 1e-9) + 1
    return tuple(t0 + dt * np.arange(n_t))


def dissipation_increment(levels: FrequencyEnergyLevels, wp: WellPreparedness, K0, times):
    """``mu* - mu`` at the samples: minus the backward difference of the energy increment.

    Depends only on the levels, ``sup I_G``, ``K0`` and the time grid, never on the flow fields.
    """
    return -backward_difference(W.energy_increment(levels.e_phi_under, wp.I_G[1], K0, levels.tau), times)


# ---------------------------------------------------------------- branch choice


def branch_wave(table, J, tau_hat, convention="plain"):
    """Overline stress wave whose lifespan centre is nearest the midpoint of ``J``.

    Returns the sign ``+`` index; its conjugate is negated together with it.

    Raises:
        ValueError: if that lifespan is not inside ``J``.
    """
    mid = 0.5 * (J[0] + J[1])
    k = int(round(mid / tau_hat))
    if not (J[0] <= (k - 1) * tau_hat and (k + 1) * tau_hat <= J[1]):
        raise ValueError(f"lifespan of slot {k} not inside J={J}")
    return table.index(k, ("R", "overline", 0, 1, None))


# ---------------------------------------------------------------- stage result


@dataclass
class StageResult:
    """Output of :func:`perform_stage`.

    Attributes:
        flow: output flow when stored in full, else ``None``.
        velocities: ``v*`` per computed sample (``store`` of ``"velocity"`` or ``"full"``).
        digests: SHA-256 of every computed output sample.
        mu_digests: SHA-256 of the output dissipation measure per sample.
        mu_increment: ``mu* - mu`` per computed sample (spatially constant).
        levels: output levels with the measured ``c_hat``.
        wp: output well-preparedness data.
        params: derived stage parameters.
        checks: check table.
        diagnostics: measured constants and residual norms.
    """

    times: tuple
    flow: DissipativeEulerReynoldsFlow | None
    velocities: list | None
    digests: list
    mu_digests: list
    mu_increment: np.ndarray
    levels: FrequencyEnergyLevels
    wp: WellPreparedness
    params: StageParameters
    checks: CheckTable
    diagnostics: dict
    branch: object = None
    energy: object = None


# ---------------------------------------------------------------- the engine


class _Regularizer:
    """Mollified velocity, coarse flow and flow-mollified input fields."""

    # stacked layout of the flow-mollified fields
    SLICES = {"R_o": slice(0, 6), "R_2": slice(6, 12), "R_G": slice(12, 18), "k_G": slice(18, 19), "phi_1": slice(19, 22), "phi_G": slice(22, 25)}

    def __init__(self, flow, wp, prm: StageParameters, shift, L, cfg: StageConfig):
        self.flow, self.wp, self.prm, self.shift, self.L, self.cfg = flow, wp, prm, shift, L, cfg
        self.n = flow.n
        self.times = np.asarray(flow.times)
        self._canon = {}
        self._vcube = {}
        self._fcube = {}
        self.cf = T.CoarseFlow(self.times, self.velocity_cube, 1.0 / prm.tau)
        kk = np.r_[-prm.K_x : 0, 0 : prm.K_x + 1].astype(float)
        kabs = np.sqrt(kk[:, None, None] ** 2 + kk[None, :, None] ** 2 + kk[None, None, :] ** 2)
        self._space_sym = T.space_profile(TWO_PI * prm.eps_x * kabs, L) ** 2
        self.principal = _csym(DELTA_1 if wp.convention == "plain" else DELTA_1STAR)
        self.blend = (float(self.times[0]), float(self.times[-1]), prm.tau)

    def canonical(self, i):
        if i not in self._canon:
            if len(self._canon) > 8:
                self._canon.pop(min(self._canon))
            self._canon[i] = self.flow[i].permuted(self.shift)
        return self._canon[i]

    def v_eps(self, i):
        return T.mollify_velocity(np.array(expand(self.canonical(i).v, self.n)), self.prm.eps_v)

    def velocity_cube(self, i):
        if i not in self._vcube:
            self._vcube[i] = mode_cube(self.v_eps(i), self.prm.K_v)
        return self._vcube[i]

    def field_cube(self, i):
        if i not in self._fcube:
            s = self.canonical(i)
            n = self.n
            eb = float(self.wp.e_bar(s.t))
            parts = [
                expand(np.asarray(s.R_l) + eb * self.principal, n),
                expand(s.R_l1, n),
                expand(s.R_G, n),
                expand(np.asarray(s.kappa_G)[None], n),
                expand(s.phi_l, n),
                expand(s.phi_G, n),
            ]
            stack = np.concatenate([np.asarray(p, dtype=float).reshape((-1, n, n, n)) for p in parts])
            self._fcube[i] = mode_cube(stack, self.prm.K_x) * self._space_sym
        return self._fcube[i]

    def mollified(self, i):
        m = T.mollify_along_flow(i, self.times, self.field_cube, self.cf, self.prm.eps_t, self.n, self.cfg.m_coarse, self.blend, self.cfg.n_nodes)
        return {k: m[sl] for k, sl in self.SLICES.items()}


def _phi_sum(gammas, basis, eta2):
    """``sum over sign + waves of 2 eta^2 gamma^2 f f`` for one tier of current waves."""
    acc = 0.0
    for (b, role), g in gammas.items():
        f = basis[b]
        acc = acc + 2.0 * eta2 * g**2 * _csym(np.outer(f, f))
    return acc


def _vv_sym(V):
    """Sym storage of ``2 Re(V (x) conj V)``."""
    return np.stack([2.0 * (V[a] * np.conj(V[b])).real for a, b in F.SYM_PAIRS])


class _StageRun:
    def __init__(self, flow, levels, wp, cfg: StageConfig, K0, branch):
        self.flow, self.levels, self.wp, self.cfg, self.K0 = flow, levels, wp, cfg, K0
        self.l = flow.stage[0]
        self.shift = frame_shift(self.l)
        self.prm = cfg.derive(levels)
        self.n = flow.n
        self.times = np.asarray(flow.times)
        self.dt = flow.dt
        self.reg = _Regularizer(flow, wp, self.prm, self.shift, levels.L, cfg)
        self.table = cfg.table()
        self.energy = W.energy_increment(levels.e_phi_under, wp.I_G[1], K0, levels.tau)
        self.d_e = -dissipation_increment(levels, wp, K0, self.times)
        self.branch = branch
        self.grid = F.Grid3(self.n)
        self._partial = {}
        self.stats = {
            "c0_V": 0.0,
            "trio_phase": 0.0,
            "pressure_direction": 0.0,
            "ker_defect_phi2": 0.0,
            "phase_drift": 0.0,
            "mean_defect_R": 0.0,
            "mean_defect_phi": 0.0,
            "gamma_diamond": [math.inf, 0.0],
            "gamma_overline": [math.inf, 0.0],
            "n_waves": 0,
        }
        self.cascade_bases = W.FULL_BASES
        self.i_last = len(self.times) - 1

    # ------------------------------------------------------------ waves

    def _waves(self, i, moll):
        """Sum of the waves at sample ``i`` and the coefficient data they need."""
        t = float(self.times[i])
        n, prm = self.n, self.prm
        e = float(self.energy(t))
        eb = float(self.wp.e_bar(t))
        P = -(2.0 * e - 2.0 * moll["k_G"][0] + F.trace(moll["R_2"] + moll["R_G"])) / 3.0
        V = np.zeros((3, n, n, n))
        Vhat = np.zeros((3, n, n, n))
        VV = np.zeros((6, n, n, n))
        slots = [k for k in W.active_slots(t, prm.tau_hat) if k * prm.tau_hat >= self.times[0] - 1e-12] if (e > 0 or eb > 0) else []
        phi_G1 = np.stack([np.zeros((n, n, n)), moll["phi_G"][1], moll["phi_G"][2]])
        cur = {}
        if self.cfg.include_phi:
            if e > 0:
                cur["diamond"] = W.solve_current_coefficients(phi_G1, e, "diamond", K0=self.K0, normalization="energy")
            if eb > 0:
                cur["overline"] = W.solve_current_coefficients(moll["phi_1"], eb, "overline", delta_bar=self.cfg.delta_bar, normalization="energy")
        eta2 = {k: float(W.eta_bar(t / prm.tau_hat - k)) ** 4 for k in slots}
        gam = {}
        if e > 0:
            eps = (F.trace(moll["R_2"] + moll["R_G"]) - 2.0 * moll["k_G"][0]) / 3.0 * _csym(DELTA_1) - _pick(moll["R_G"], _PI1)
            eps = eps / e
            if "diamond" in cur:
                eps = eps - sum(_phi_sum(cur["diamond"], W.DIAMOND_B_PHI, eta2[k]) for k in slots)
            gam["diamond"], rep = W.solve_diamond_stress_coefficients(eps, multiplicity=1)
            self._track("gamma_diamond", rep)
        if eb > 0:
            epsb = -moll["R_o"] / eb
            if "overline" in cur:
                epsb = epsb - sum(_phi_sum(cur["overline"], W.OVERLINE_B_PHI, eta2[k]) for k in slots)
            gam["overline"], rep = W.solve_overline_stress_coefficients(epsb, multiplicity=1, convention=self.wp.convention)
            self._track("gamma_overline", rep)
        half = {"diamond": math.sqrt(e), "overline": math.sqrt(eb)}
        for k in slots:
            phase = T.transport_phase(self.reg.cf, k * prm.tau_hat, t, self.grid, self.cfg.m_coarse, self.cfg.drift_tol)
            self.stats["phase_drift"] = max(self.stats["phase_drift"], phase.drift)
            if t + self.dt > (k + 1) * prm.tau_hat or i == self.i_last:
                self._trio_check(phase)
            for tier in W.TIERS:
                if half[tier] == 0.0:
                    continue
                keys = [("R", tier, b, 1, None) for b in range(3)]
                if tier in cur:
                    keys += [("phi", tier, b, 1, role) for b in range(2) for role in ("passive", "active")]
                for key in keys:
                    idx = self.table.index(k, key)
                    g = gam[tier][key[2]] if key[0] == "R" else cur[tier][(key[2], key[4])]
                    amp = half[tier] * W.time_cutoff(t, k, prm.tau_hat, key[0]) * g
                    if not np.any(amp):
                        continue
                    wave = W.build_wave(idx, phase, amp, prm.lam, self.wp.convention, check=False, norms=False)
                    sgn = -1.0 if (self.branch is not None and idx == self.branch) else 1.0
                    fhat = wave.v_hat
                    self.stats["pressure_direction"] = max(
                        self.stats["pressure_direction"], float(np.abs(idx.n * np.asarray(amp) * (W.E1 @ DELTA_2STAR @ idx.direction(self.wp.convention))).max())
                    )
                    V += sgn * 2.0 * wave.V.real
                    VV += _vv_sym(wave.V)
                    Vhat += sgn * 2.0 * (phase.factor(prm.lam, idx.n) * fhat).real
                    self.stats["n_waves"] += 1
        return V, Vhat, VV, P, e

    def _track(self, name, rep):
        lo, hi = self.stats[name]
        self.stats[name] = [min(lo, rep["min"]), max(hi, rep["max"])]

    def _trio_check(self, phase):
        """Phase error of every cascade trio ``(q, q, -2q)``; run once per slot, at its last sample."""
        worst = 0.0
        for q in self.cascade_bases:
            z = phase.factor(self.prm.lam, q, cache=False) ** 2 * phase.factor(self.prm.lam, -2 * q, cache=False)
            worst = max(worst, float(np.abs(z - 1.0).max()))
        self.stats["trio_phase"] = max(self.stats["trio_phase"], worst)

    # ------------------------------------------------------------ per-sample assembly

    def partial(self, i):
        """Output sample ``i`` without ``phi*_G``, plus the data needed to close it."""
        if i in self._partial:
            return self._partial[i]
        for j in [j for j in self._partial if j < i - 1]:
            del self._partial[j]
        n = self.n
        s = self.reg.canonical(i)
        moll = self.reg.mollified(i)
        V, Vhat, VV, P, e = self._waves(i, moll)
        v = np.array(expand(s.v, n), dtype=float)
        v_eps = self.reg.v_eps(i)
        w = v - v_eps
        vstar = v + V
        R_in = np.array(s.R(n), dtype=float)
        MVV = F.dealias(VV)
        R_lin = R_in + P * SYM_ID + MVV + 2.0 * F.m_outer_sym(w, V)
        R2s = moll["R_2"] + _pick(moll["R_G"], _PI2)
        R3s = _pick(moll["R_G"], _PI3)
        # new density with its mean fixed by the energy balance
        kap_in = np.array(s.kappa(n), dtype=float)
        kap = 0.5 * F.trace(MVV) + kap_in - e + F.m_dot(w, V)
        target_mean = float(np.mean(kinetic(vstar)) - np.mean(kinetic(v)) + np.mean(kap_in) - e)
        kap = kap + (target_mean - float(np.mean(kap)))
        # main current, valued in ker dx^2
        pi_x = np.zeros((6, n, n, n))
        pi_x[3] = R3s[3]
        phi2 = np.stack([moll["phi_G"][0], np.zeros((n, n, n)), np.zeros((n, n, n))])
        phi2 = phi2 - F.m_contract(R2s, V) - F.m_contract(pi_x, Vhat)
        self.stats["c0_V"] = max(self.stats["c0_V"], tensor_c0(V))
        nrm = tensor_c0(phi2)
        if nrm > 0:
            self.stats["ker_defect_phi2"] = max(self.stats["ker_defect_phi2"], float(np.abs(phi2[1]).max()) / nrm)
        if self.cfg.include_phi:
            phi_explicit = np.array(s.phi(n)) - np.stack([moll["phi_G"][0], np.zeros((n, n, n)), np.zeros((n, n, n))]) - moll["phi_1"] - np.stack(
                [np.zeros((n, n, n)), moll["phi_G"][1], moll["phi_G"][2]]
            )
        else:
            phi_explicit = np.array(s.phi(n)) - np.stack([moll["phi_G"][0], np.zeros((n, n, n)), np.zeros((n, n, n))])
        part = {
            "t": s.t,
            "v": vstar,
            "V": V,
            "v_eps": v_eps,
            "p": np.asarray(expand(s.p, n)) + P,
            "R_lin": R_lin,
            "MVV": MVV,
            "Rl_out": P * _csym(DELTA_2STAR) + R2s,
            "Rl1_out": R3s,
            "kappa": kap,
            "phi2": phi2,
            "phi_x": phi_explicit,
            "mu": np.asarray(s.mu) - self.d_e[i],
            "e": e,
        }
        self._partial[i] = part
        return part

    def _neighbour(self, part):
        """Sample carrying only what the energy identity reads from a neighbour: ``v``, ``p``, ``kappa``."""
        z6 = const_field(np.zeros(6), (6,))
        z3 = const_field(np.zeros(3), (3,))
        kap_l = 0.5 * F.trace(part["Rl_out"])
        return FlowSample(part["t"], part["v"], part["p"], part["Rl_out"], z6, z6, part["kappa"] - kap_l, z3, z3, part["mu"])

    def sample(self, i):
        """Finished output sample ``i`` in the canonical frame."""
        n = self.n
        cur = self.partial(i)
        j = i - 1 if i > 0 else (1 if len(self.times) > 1 else None)
        oth = self.partial(j) if j is not None else None
        if oth is None:
            dV = np.zeros_like(cur["V"])
        elif i > 0:
            dV = (cur["V"] - oth["V"]) / self.dt
        else:
            dV = (oth["V"] - cur["V"]) / self.dt
        V = cur["V"]
        U = dV + F.div_sym(2.0 * F.m_outer_sym(cur["v_eps"], V)) + F.div_sym(F.m_outer_sym(V, V) - cur["MVV"])
        QU, md = F.inverse_divergence_sym_full(U)
        self.stats["mean_defect_R"] = max(self.stats["mean_defect_R"], md)
        Rl, Rl1 = cur["Rl_out"], cur["Rl1_out"]
        RG = cur["R_lin"] + QU - Rl - Rl1
        out = FlowSample(cur["t"], cur["v"], cur["p"], Rl, Rl1, RG, cur["kappa"] - 0.5 * F.trace(Rl), cur["phi2"], np.zeros((3, n, n, n)), cur["mu"])
        other = None if oth is None else self._neighbour(oth)
        prev, nxt = (other, None) if i > 0 else (None, other)
        D, Dk, dvR, _ = energy_terms(prev, out, nxt, self.dt, n)
        X = cur["phi_x"]
        S = D - Dk - dvR + expand(cur["mu"], n) - F.divergence(cur["phi2"]) - F.divergence(X)
        q, md = F.inverse_divergence_vec_full(S)
        self.stats["mean_defect_phi"] = max(self.stats["mean_defect_phi"], md)
        out.phi_G = X + q
        return out


# ---------------------------------------------------------------- measurements


def _test_battery(n):
    """Low-mode test fields ``phi`` with their ``L^1`` gradient norms."""
    x = F.Grid3(n).x
    out = []
    for k in ((1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (0, 1, 1), (2, 0, 0)):
        arg = TWO_PI * sum(k[a] * x[a] for a in range(3))
        for trig in (np.cos, np.sin):
            s = trig(arg)
            g = np.sqrt(sum((TWO_PI * k[a]) ** 2 for a in range(3))) * np.abs(trig(arg + np.pi / 2))
            for c in range(3):
                out.append((c, s, float(np.mean(g))))
    return out


class _Meter:
    """Running maxima of the output norms that set ``c_hat`` and the support checks."""

    def __init__(self, n):
        self.rows = {}
        self.support = {}
        self.wp_records = []
        self.battery = _test_battery(n)
        self.weak = 0.0

    def up(self, d, key, val):
        d[key] = max(d.get(key, 0.0), float(val))

    def sample(self, s: FlowSample, n, V):
        up, r = self.up, self.rows
        up(r, "R_l", tensor_c0(s.R_l, "sym"))
        up(r, "kappa_l", tensor_c0(s.kappa_l, "scalar"))
        up(r, "R_l1", tensor_c0(s.R_l1, "sym"))
        up(r, "kappa_G", tensor_c0(s.kappa_G, "scalar"))
        up(r, "phi_l", tensor_c0(s.phi_l, "vector"))
        up(r, "phi_G", tensor_c0(s.phi_G, "vector"))
        up(r, "R_G", tensor_c0(s.R_G, "sym"))
        up(r, "grad_v", tensor_c0(F.jacobian(np.array(expand(s.v, n))).reshape((9, n, n, n)), "vector"))
        up(r, "grad_p", tensor_c0(F.gradient(np.array(expand(s.p, n), dtype=float)), "vector"))
        up(r, "V", tensor_c0(V, "vector"))
        for c, phi, g1 in self.battery:
            self.weak = max(self.weak, abs(float(np.mean(phi * V[c]))) / g1)


def measured_c_hat(rows, levels: FrequencyEnergyLevels, N):
    """Smallest ``c_hat >= 1`` for which the measured C0 norms fit the output levels; also per row."""
    ep, eu, eG = levels.e_phi, levels.e_phi_under, levels.e_G
    Xi = levels.Xi
    eG_new = math.sqrt(math.sqrt(levels.e_v / ep) / N) * ep
    base_under = eu ** (1.0 / 3.0) * eG ** (2.0 / 3.0)
    need = {
        "R_l": rows["R_l"] / eu,
        "kappa_l": rows["kappa_l"] / eu,
        "R_l1": rows["R_l1"] / eG,
        "kappa_G": rows["kappa_G"] / eG,
        "phi_l": (rows["phi_l"] / eu**1.5) ** (2.0 / 3.0),
        "phi_G": (rows["phi_G"] / base_under**1.5) ** (2.0 / 3.0),
        "grad_v": (rows["grad_v"] / (N * Xi * math.sqrt(ep))) ** (2.0 / 3.0),
        "grad_p": math.sqrt(rows["grad_p"] / (N * Xi * ep)),
        "level_order": eG_new / eG * (1.0 + 1e-9),
    }
    return max(1.0, max(need.values())), need


# ---------------------------------------------------------------- driver


def perform_stage(
    flow: DissipativeEulerReynoldsFlow,
    levels: FrequencyEnergyLevels,
    wp: WellPreparedness,
    cfg: StageConfig,
    branch=None,
    store="velocity",
    sink=None,
    t_max=None,
    tolerance_scale=1.0,
    check_input=True,
    progress=None,
):
    """Run one stage and measure its output.

    Args:
        flow: input flow of stage type ``(l, l+1)``.
        levels: its frequency-energy levels.
        wp: well-preparedness data for stage ``l``.
        cfg: stage configuration.
        branch: ``None`` for the default output, or a wave index (sign ``+``)
            whose wave and conjugate are negated.
        store: ``"full"`` keeps every output sample, ``"velocity"`` only ``v*``,
            ``"none"`` only digests.
        sink: callable ``(i, sample)`` receiving each physical output sample; an
            optional ``reset()`` is called when ``K0`` is escalated.
        t_max: stop after the last sample with ``t <= t_max``.
        check_input: verify the input's well-preparedness and subspaces first.
        progress: optional callable ``(i, n_samples)``.

    Returns:
        :class:`StageResult`.

    Raises:
        AdmissibilityError, AliasError: from :meth:`StageConfig.check`.
        WellPreparednessError: input is not well prepared.
        NegativeDiscriminant: a stress coefficient system has no real solution.
    """
    if store not in ("full", "velocity", "none"):
        raise ValueError(f"unknown store mode {store!r}")
    prm = cfg.check(levels)
    l = flow.stage[0]
    if check_input:
        check_well_prepared(flow, levels, wp, raise_on_fail=True)
        for s in flow:
            if kernel_projection_defect(np.array(expand(s.R_l, flow.n)), l) > 0:
                raise WellPreparednessError("R_l has components outside ker dx^l (x) ker dx^l")
    times = np.asarray(flow.times)
    i_last = len(times) - 1 if t_max is None else int(np.searchsorted(times, t_max + 1e-12) - 1)
    out_stage = (l % 3 + 1, (l + 1) % 3 + 1)
    shift = frame_shift(l)
    K0 = cfg.K0
    t_start = time.perf_counter()
    for attempt in range(cfg.max_K0_doublings + 1):
        run = _StageRun(flow, levels, wp, cfg, K0, branch)
        run.i_last = i_last
        checker = FlowChecker(flow.n, flow.dt, out_stage)
        meter = _Meter(flow.n)
        digests, mu_digests, vel, samples = [], [], [], []
        support = {"V": 0.0, "R": 0.0, "kappa": 0.0, "phi": 0.0}
        scale = {"V": 0.0, "R": 0.0, "kappa": 0.0, "phi": 0.0}
        G_star_hi = wp.I_G[1] + levels.tau / 40.0
        e_star = Scaled(run.energy, 2.0 / 3.0)
        wp_probe = WellPreparedness(e_star, 0.0, wp.I_G, wp.I_G, cfg.delta_bar, 1.0, "star")
        for i in range(i_last + 1):
            sc = run.sample(i)
            V = run.partial(i)["V"]
            ph = sc.permuted(shift, inverse=True)
            meter.wp_records.append(well_prepared_record(ph, wp_probe, out_stage[0]))
            Vp = permute_array(V, "vector", shift, inverse=True)
            checker.push(ph)
            meter.sample(ph, flow.n, Vp)
            s_in = flow[i]
            dR = tensor_c0(np.array(ph.R(flow.n)) - np.array(s_in.R(flow.n)), "sym")
            dk = tensor_c0(np.array(ph.kappa(flow.n)) - np.array(s_in.kappa(flow.n)), "scalar")
            dphi = tensor_c0(np.array(ph.phi(flow.n)) - np.array(s_in.phi(flow.n)), "vector")
            vals = {"V": tensor_c0(V), "R": dR, "kappa": dk, "phi": dphi}
            for k, val in vals.items():
                scale[k] = max(scale[k], val)
                if sc.t > G_star_hi + 1e-12:
                    support[k] = max(support[k], val)
            digests.append(ph.digest(flow.n))
            mu_digests.append(hashlib.sha256(np.ascontiguousarray(ph.mu, dtype="<f8").tobytes()).hexdigest())
            if store == "full":
                samples.append(ph)
            elif store == "velocity":
                vel.append(np.array(expand(ph.v, flow.n)))
            if sink is not None:
                sink(i, ph)
            if progress is not None:
                progress(i, i_last + 1)
        checker.finish()
        c_hat, c_rows = measured_c_hat(meter.rows, levels, prm.N)
        new_levels = levels.next(c_hat, prm.N)
        I_next = (max(float(times[0]), wp.I_G[0] - 1e-3 * levels.tau), min(float(times[-1]), wp.I_G[1] + 1e-3 * levels.tau))
        wp_new = WellPreparedness(
            e_star, (4.0 / 3.0) * K0 * levels.e_phi_under, I_next, (float(times[0]), G_star_hi), cfg.delta_bar, c_hat, "star"
        )
        wp_table = well_prepared_table(meter.wp_records, new_levels, wp_new, tol=1e-12 * max(1.0, meter.rows["R_l"]))
        if wp_table.rows["smallness"]["pass"] or attempt == cfg.max_K0_doublings:
            break
        log.info("output not well prepared (%.3g); doubling K0 to %g", wp_table.rows["smallness"]["value"], 2 * K0)
        K0 *= 2.0
        if sink is not None and hasattr(sink, "reset"):
            sink.reset()
    elapsed = time.perf_counter() - t_start
    mu_inc = -run.d_e[: i_last + 1]
    on_G = times[: i_last + 1] <= wp.I_G[1] + 1e-12
    table = checker.table(tolerance_scale)
    st = run.stats
    table.add("mu_increment_min", float(mu_inc.min()), 0.0, kind="ge")
    table.add("mu_increment_on_I_G", float(np.abs(mu_inc[on_G]).max()) if on_G.any() else 0.0, 0.0)
    table.add("trio_phase", st["trio_phase"], 1e-8 * tolerance_scale)
    table.add("pressure_direction", st["pressure_direction"], 0.0)
    table.add("phi2_ker_dx2_rel", st["ker_defect_phi2"], 1e-12 * tolerance_scale)
    for k in support:
        table.add(f"support_{k}", support[k] / scale[k] if scale[k] > 0 else 0.0, 1e-12 * tolerance_scale)
    for k, r in wp_table.rows.items():
        table.rows[f"output_wp_{k}"] = r
    e_phi = levels.e_phi
    C_L = meter.rows["V"] / math.sqrt(e_phi)
    diagnostics = {
        "stage": list(flow.stage),
        "output_stage": list(out_stage),
        "K0": K0,
        "K0_doublings": attempt,
        "c_hat": c_hat,
        "c_hat_rows": c_rows,
        "C_L": C_L,
        "weak_norm_ratio": meter.weak / (math.sqrt(e_phi) / levels.Xi),
        "stress_contraction_ratio": meter.rows["R_G"] / new_levels.e_G,
        "norms": meter.rows,
        "params": prm.as_dict(),
        "levels_in": levels.as_dict(),
        "levels_out": new_levels.as_dict(),
        "I_next": list(I_next),
        "I_G_star": [float(times[0]), G_star_hi],
        "energy_plateau": run.energy.plateau,
        "stats": {k: v for k, v in st.items()},
        "n_samples": i_last + 1,
        "partial": i_last < len(times) - 1,
        "elapsed_s": elapsed,
        "branch": None if branch is None else W.index_dict(branch),
        "checks": table.as_dict(),
        "mu_increment": [float(x) for x in mu_inc],
    }
    t_out = tuple(float(x) for x in times[: i_last + 1])
    out_flow = DissipativeEulerReynoldsFlow(flow.n, t_out, samples, out_stage) if store == "full" else None
    return StageResult(
        times=t_out,
        flow=out_flow,
        velocities=vel if store == "velocity" else ([np.array(expand(s.v, flow.n)) for s in samples] if store == "full" else None),
        digests=digests,
        mu_digests=mu_digests,
        mu_increment=mu_inc,
        levels=new_levels,
        wp=wp_new,
        params=prm,
        checks=table,
        diagnostics=diagnostics,
        branch=branch,
        energy=run.energy,
    )
