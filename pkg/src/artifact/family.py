"""Branching families of stage outputs.

A branch code is a bit string; bit ``j`` acts on stage ``start_bit + j`` and
selects the default output (``0``) or the output with one overline stress wave
and its conjugate negated (``1``).  The negated wave is the one whose lifespan
is centred nearest the midpoint of the branching interval ``J``, so member
differences are supported in ``J``.

At full field resolution only depth 1 fits the grid: the second stage's
frequency exceeds it and :class:`~artifact.errors.AliasError` is raised.
Deeper codes run through a surrogate that keeps one leading Fourier mode per
branching wave and takes the levels from the parameter ledger; its outputs are
labelled non-physical.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import fields as F
from . import scheduler as S
from . import waves as W
from .errors import AliasError
from .flow import expand, tensor_c0
from .scenarios import Scenario
from .stage import StageResult, branch_wave, perform_stage

log = logging.getLogger(__name__)


def all_codes(depth):
    """Every bit string of length ``depth`` in lexicographic order."""
    return ["".join(b) for b in itertools.product("01", repeat=depth)]


def first_difference(a: str, b: str):
    """Index of the first differing bit, or ``None`` for equal codes."""
    for j, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return j
    return None


def _l2(a):
    """``int |a|^2 dx`` over the unit torus."""
    return float(np.mean(np.sum(np.asarray(a) ** 2, axis=0)))


class _BranchSink:
    """Compares a branch member with the stored default member sample by sample."""

    def __init__(self, reference, times, J, sup_I0, base_v, i_snap):
        self.reference, self.times, self.J, self.sup_I0, self.base_v = reference, times, J, sup_I0, base_v
        self.i_snap = i_snap
        self.reset()

    def reset(self):
        self.l2 = []
        self.c0 = []
        self.outside_J = 0.0
        self.on_I0 = 0.0
        self.dev_base = 0.0
        self.snapshot = None

    def __call__(self, i, s):
        n = self.base_v.shape[-1]
        v = np.asarray(expand(s.v, n))
        d = v - self.reference[i]
        self.l2.append(_l2(d))
        self.c0.append(tensor_c0(d))
        m = float(np.abs(d).max())
        t = float(self.times[i])
        if not (self.J[0] < t < self.J[1]):
            self.outside_J = max(self.outside_J, m)
        if t <= self.sup_I0:
            self.on_I0 = max(self.on_I0, m)
        self.dev_base = max(self.dev_base, tensor_c0(v - self.base_v))
        if i == self.i_snap:
            self.snapshot = v.copy()


@dataclass
class FamilyRun:
    """Finite-prefix family and its measured separation data.

    Attributes:
        codes: member codes.
        depth: code length.
        start_bit: stage label of bit 0.
        physical: ``False`` for the leading-mode surrogate.
        distance_L2: matrix of ``sup_t ||v_a - v_b||_{L^2}``.
        distance_C0: matrix of ``sup_t ||v_a - v_b||_{C^0}`` (an upper bound for the surrogate).
        e_phi: ``e_phi`` of every stage, indexed by bit.
        C_L, c_hat: measured (or assumed) stage constants.
        N: frequency growth factor of each stage.
        Z: level decay base.
        E0: base energy level.
        extras: mode-specific measurements.
    """

    codes: list
    depth: int
    start_bit: int
    physical: bool
    distance_L2: np.ndarray
    distance_C0: np.ndarray
    e_phi: list
    C_L: float
    c_hat: float
    N: list
    Z: float
    E0: float
    extras: dict = field(default_factory=dict)

    def pair_rows(self):
        """Every unordered pair with its first differing bit and distances."""
        rows = []
        for a, b in itertools.combinations(range(len(self.codes)), 2):
            ca, cb = self.codes[a], self.codes[b]
            rows.append((ca, cb, first_difference(ca, cb), float(self.distance_L2[a, b]), float(self.distance_C0[a, b])))
        return rows


# ---------------------------------------------------------------- full resolution


def run_field_family(scenario: Scenario, depth=1, start_bit=2, default: StageResult | None = None, out_dir=None, tolerance_scale=1.0):
    """Depth-1 family at full field resolution.

    Args:
        scenario: prepared stage input.
        depth: requested depth; above 1 the second stage is checked against the grid first.
        start_bit: stage label of bit 0.
        default: an already computed default member (``store="velocity"``), reused if given.
        out_dir: when set, velocity snapshots at the branching time are written there.

    Raises:
        AliasError: if ``depth > 1`` and the next stage does not fit the grid.
    """
    flow, levels, wp, cfg = scenario.flow, scenario.levels, scenario.wp, scenario.cfg
    prm = cfg.derive(levels)
    J = scenario.branch_interval()
    I_star = branch_wave(cfg.table(), J, prm.tau_hat)
    times = np.asarray(flow.times)
    base_v = np.asarray(expand(scenario.base[0].v, flow.n))
    if default is None or default.velocities is None:
        default = perform_stage(flow, levels, wp, cfg, store="velocity", tolerance_scale=tolerance_scale)
    if depth > 1:
        nxt = default.levels
        cfg2 = replace(cfg, N=max(cfg.N, nxt.admissible_N()))
        cfg2.check(nxt)  # raises AliasError at desk scale
        raise AliasError("depth > 1 at full field resolution is not supported")
    i_snap = int(np.argmin(np.abs(times - 0.5 * (J[0] + J[1]))))
    sink = _BranchSink(default.velocities, times, J, scenario.config.sup_I0, base_v, i_snap)
    branch = perform_stage(flow, levels, wp, cfg, branch=I_star, store="none", sink=sink, tolerance_scale=tolerance_scale)
    dev_default = max(tensor_c0(v - base_v) for v in default.velocities)
    d_l2 = math.sqrt(max(sink.l2))
    d_c0 = max(sink.c0)
    D2 = np.array([[0.0, d_l2], [d_l2, 0.0]])
    D0 = np.array([[0.0, d_c0], [d_c0, 0.0]])
    i_star = int(np.argmax(sink.l2))
    C_L = max(default.diagnostics["C_L"], branch.diagnostics["C_L"])
    c_hat = max(default.diagnostics["c_hat"], branch.diagnostics["c_hat"])
    snapshots = {}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for code, v in (("0", default.velocities[i_snap]), ("1", sink.snapshot)):
            path = os.path.join(out_dir, f"member_{code}_sample{i_snap}.cifld")
            F.dump_fields(path, v[None])
            snapshots[code] = path
    mu_branch_equal = default.mu_increment.tobytes() == branch.mu_increment.tobytes() and default.mu_digests == branch.mu_digests
    extras = {
        "branch_index": W.index_dict(I_star),
        "J": list(J),
        "t_max_separation": float(times[i_star]),
        "t_snapshot": float(times[i_snap]),
        "l2_squared_by_time": sink.l2,
        "max_diff_outside_J": sink.outside_J,
        "max_diff_on_I0": sink.on_I0,
        "mu_bitwise_equal": bool(mu_branch_equal),
        "uniform_bound_C": max(dev_default, sink.dev_base) / math.sqrt(scenario.config.E0),
        "digests": {"0": hashlib.sha256("".join(default.digests).encode()).hexdigest(), "1": hashlib.sha256("".join(branch.digests).encode()).hexdigest()},
        "checks": {"0": default.checks.as_dict(), "1": branch.checks.as_dict()},
        "snapshots": snapshots,
        "diagnostics_default": default.diagnostics,
    }
    return FamilyRun(["0", "1"], 1, start_bit, True, D2, D0, [levels.e_phi], C_L, c_hat, [cfg.N], scenario.config.Z, scenario.config.E0, extras)


# ---------------------------------------------------------------- surrogate


def run_surrogate_family(depth, start_bit=2, Z=math.exp(10.0), L_c=1.0, C_L=1.0, E0=1.0, gamma=1.0 / math.sqrt(2.0)):
    """Leading-mode surrogate family of the given depth (non-physical).

    Stage ``k`` contributes one branching wave ``2 Re(a_k f e^{i lam_k x^1})``
    with ``a_k = gamma e_phi,(k)^{1/2}`` and ``|f| = 1``; flipping it changes a
    member by ``2 (2 Re V)`` of squared ``L^2`` norm ``8 a_k^2``.  Leading modes of
    different stages are treated as distinct, so squared distances add.  Levels
    come from the parameter ledger started on the sector axis with base ``Z``.
    """
    L_Z = math.log(Z)
    led = S.ParameterLedger.sector_start(L_Z, L_c=L_c)
    steps = start_bit + depth
    traj = S.trajectory(led, steps)
    log_e = S.log_e_phi(traj) + math.log(E0)
    a = gamma * np.exp(0.5 * log_e)  # every stage from 0
    N = [S.ParameterLedger(traj[k], L_c).frequency_growth() for k in range(steps)]
    codes = all_codes(depth)
    bits = np.array([[int(c) for c in code] for code in codes], dtype=bool).reshape(len(codes), depth)
    diff = bits[:, None, :] != bits[None, :, :]
    stage_a = a[start_bit : start_bit + depth]
    D2 = np.sqrt(np.einsum("ijk,k->ij", diff, 8.0 * stage_a**2))
    D0 = np.einsum("ijk,k->ij", diff, 4.0 * stage_a)
    early = {}
    for k in range(min(start_bit, 2)):
        d = math.sqrt(8.0) * a[k]
        bound = 0.5 * (C_L * math.exp(L_c)) ** -0.5 * math.exp(0.5 * log_e[k])
        early[str(k)] = {"distance": d, "bound": bound, "separates": bool(d > 0 and d >= bound)}
    extras = {
        "label": "non-physical surrogate: one leading Fourier mode per branching wave, no grid",
        "L_c": L_c,
        "gamma": gamma,
        "amplitudes": stage_a.tolist(),
        "uniform_bound_C": float(np.sum(4.0 * a[start_bit:])) / math.sqrt(E0),
        "early_bits": early,
        "decay": S.decay_laws(traj, L_c),
    }
    return FamilyRun(codes, depth, start_bit, False, D2, D0, [float(np.exp(x)) for x in log_e[start_bit : start_bit + depth]], C_L, math.exp(L_c), N[start_bit:], Z, E0, extras)


def run_family(scenario: Scenario | None, depth, start_bit=2, surrogate=None, **kw):
    """Field family for depth 1 (``surrogate`` false), surrogate family otherwise."""
    if surrogate is None:
        surrogate = depth > 1
    if surrogate:
        return run_surrogate_family(depth, start_bit, **kw)
    if scenario is None:
        raise ValueError("a field family needs a scenario")
    return run_field_family(scenario, depth, start_bit, **kw)


# ---------------------------------------------------------------- separation


def separation_check(run: FamilyRun):
    """Separation report with the measured constants.

    Rows:
      * ``pairs``: per pair the distance, the bound
        ``2^{-1} (C_L c_hat)^{-1/2} e_phi,(k*)^{1/2}`` and the margin;
      * ``injectivity``: the bound ``((C_L c_hat)^{-1} - N^{-1}) e_phi`` on
        ``sup_t int |v_a - v_b|^2``, with a flag when it is not positive;
      * ``ratio``: for depth >= 2, ``min d(k*=1) / min d(k*=0)`` against
        ``[Z^{-3/4}, Z^{-1/4}]`` and the strict ordering of the two classes.
    """
    K = run.C_L * run.c_hat
    pairs = []
    worst = math.inf
    by_k = {}
    for ca, cb, k, d2, d0 in run.pair_rows():
        bound = 0.5 * K**-0.5 * math.sqrt(run.e_phi[k])
        margin = d2 - bound
        worst = min(worst, margin)
        pairs.append({"a": ca, "b": cb, "k_star": k, "distance_L2": d2, "distance_C0": d0, "bound": bound, "margin": margin, "pass": bool(margin >= 0)})
        by_k.setdefault(k, []).append(d2)
    e0 = run.e_phi[0]
    inj_bound = (1.0 / K - 1.0 / run.N[0]) * e0
    d_first = min(by_k.get(0, [math.inf]))
    rep = {
        "physical": run.physical,
        "pairs": pairs,
        "worst_margin": worst,
        "identical_distance": float(np.max(np.abs(np.diag(run.distance_L2)))),
        "injectivity": {
            "bound": inj_bound,
            "vacuous": bool(inj_bound <= 0),
            "measured_sq": d_first**2,
            "measured_over_e_phi": d_first**2 / e0,
            "pass": bool(d_first**2 >= inj_bound),
        },
        "uniform_bound_C": run.extras.get("uniform_bound_C"),
    }
    if run.depth >= 2:
        lo, hi = run.Z**-0.75, run.Z**-0.25
        r = min(by_k[1]) / min(by_k[0])
        rep["ratio"] = {"value": r, "lo": lo, "hi": hi, "pass": bool(lo <= r <= hi)}
        rep["ordering"] = {"min_k0": min(by_k[0]), "max_k1": max(by_k[1]), "pass": bool(min(by_k[0]) > max(by_k[1]))}
    rep["passed"] = bool(all(p["pass"] for p in pairs) and rep["injectivity"]["pass"] and rep.get("ratio", {"pass": True})["pass"] and rep.get("ordering", {"pass": True})["pass"])
    return rep


def family_json(run: FamilyRun, report=None):
    """``code -> {distance row, margins, snapshot refs}`` plus run metadata."""
    report = separation_check(run) if report is None else report
    members = {}
    for i, code in enumerate(run.codes):
        margins = {p["b"] if p["a"] == code else p["a"]: p["margin"] for p in report["pairs"] if code in (p["a"], p["b"])}
        members[code] = {
            "distance_L2": [float(x) for x in run.distance_L2[i]],
            "distance_C0": [float(x) for x in run.distance_C0[i]],
            "margins": margins,
            "snapshots": run.extras.get("snapshots", {}).get(code),
        }
    meta = {k: v for k, v in run.extras.items() if k not in ("snapshots", "diagnostics_default", "l2_squared_by_time")}
    return {
        "physical": run.physical,
        "depth": run.depth,
        "start_bit": run.start_bit,
        "codes": run.codes,
        "C_L": run.C_L,
        "c_hat": run.c_hat,
        "e_phi": run.e_phi,
        "members": members,
        "separation": {k: v for k, v in report.items() if k != "pairs"},
        "meta": meta,
    }


def write_family_json(path, run: FamilyRun, report=None):
    with open(path, "w") as fh:
        json.dump(family_json(run, report), fh, indent=1, default=float)
