"""Index sets, integer frequencies, time cutoffs, coefficients and wave assembly.

Waves are built in the canonical frame where they oscillate along ``x^1`` and
take values in ``ker dx^1``.  Each index ``I = (k, f)`` carries a time slot
``k``, a family (``"R"`` for stress waves, ``"phi"`` for current waves), a
tier (``"overline"`` for the larger amplitudes, ``"diamond"`` for the smaller),
a direction from a fixed basis, a sign ``sigma`` distinguishing a wave from its
conjugate and, for current waves, a role (``"active"`` or ``"passive"``).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from . import fields as F
from .errors import NegativeDiscriminant, SearchExhausted

S2 = math.sqrt(2.0)

# ---------------------------------------------------------------- constant tensors

E1, E2, E3 = np.eye(3)
DELTA = np.eye(3)
DELTA_1 = np.outer(E2, E2) + 0.5 * np.outer(E3, E3)
DELTA_1STAR = 0.5 * np.outer(E2, E2) + np.outer(E3, E3)
DELTA_2STAR = np.outer(E1, E1) + 0.5 * np.outer(E3, E3)

DIAMOND_B_PHI = (np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))
OVERLINE_B_PHI = (np.array([0.0, 1 / S2, 1 / S2]), np.array([0.0, -1 / S2, 1 / S2]))
# three vectors in ker dx^1 with sum f f = e2 e2 + e3 e3 / 2
DIAMOND_B_R = (
    np.array([0.0, 1 / S2, 1 / (2 * S2)]),
    np.array([0.0, 1 / S2, -1 / (2 * S2)]),
    np.array([0.0, 0.0, 0.5]),
)
# three vectors in ker dx^1 with sum f f = e2 e2 / 2 + e3 e3
OVERLINE_B_R_STAR = (
    np.array([0.0, 0.5, 0.5]),
    np.array([0.0, -0.5, 0.5]),
    np.array([0.0, 0.0, 1 / S2]),
)
OVERLINE_B_R_PLAIN = DIAMOND_B_R
# three vectors in ker dx^2 with sum g g = e1 e1 + e3 e3 / 2
STAR_B_R = (
    np.array([0.5, 0.0, 0.5]),
    np.array([0.5, 0.0, -0.5]),
    np.array([1 / S2, 0.0, 0.0]),
)


def basis_sum(basis):
    return sum(np.outer(f, f) for f in basis)


def spans_kernel_square(basis, axis=0):
    """Whether ``{f f}`` spans ``ker dx^axis (x) ker dx^axis`` (3-dimensional)."""
    idx = [i for i in range(3) if i != axis]
    rows = [[f[idx[0]] ** 2, f[idx[1]] ** 2, f[idx[0]] * f[idx[1]]] for f in basis]
    return abs(np.linalg.det(np.array(rows))) > 1e-12


def overline_basis(convention):
    """Overline stress basis for the ``"star"`` or ``"plain"`` well-preparedness convention."""
    if convention == "star":
        return OVERLINE_B_R_STAR
    if convention == "plain":
        return OVERLINE_B_R_PLAIN
    raise ValueError(f"unknown convention {convention!r}")


def overline_target(convention):
    return DELTA_1STAR if convention == "star" else DELTA_1


# ---------------------------------------------------------------- indices

TIERS = ("diamond", "overline")


@dataclass(frozen=True)
class WaveIndex:
    """One wave ``I = (k, f)``."""

    k: int
    family: str
    tier: str
    basis_index: int
    sign: int
    role: str | None
    n: int

    @property
    def key(self):
        """``f`` without the time slot and frequency."""
        return (self.family, self.tier, self.basis_index, self.sign, self.role)

    def conjugate(self):
        return WaveIndex(self.k, self.family, self.tier, self.basis_index, -self.sign, self.role, -self.n)

    def direction(self, convention="plain"):
        if self.family == "R":
            return (DIAMOND_B_R if self.tier == "diamond" else overline_basis(convention))[self.basis_index]
        return (DIAMOND_B_PHI if self.tier == "diamond" else OVERLINE_B_PHI)[self.basis_index]

    def t_center(self, tau_hat):
        return self.k * tau_hat


def f_elements(include_phi=True):
    """All ``f`` keys ``(family, tier, basis_index, sign, role)``."""
    out = []
    for tier in TIERS:
        for b in range(3):
            for s in (1, -1):
                out.append(("R", tier, b, s, None))
    if include_phi:
        for tier in TIERS:
            for b in range(2):
                for s in (1, -1):
                    for role in ("passive", "active"):
                        out.append(("phi", tier, b, s, role))
    return out


def cascade_trios(tier):
    """Ordered trios of ``f`` keys in the cascade set for one tier.

    Each ``(passive, passive, active)`` multiset of equal direction and sign is
    listed in all ``3!`` orders with the two passive slots treated as labelled,
    so the set has ``4 * 3!`` members per tier.
    """
    out = []
    for b in range(2):
        for s in (1, -1):
            p = ("phi", tier, b, s, "passive")
            a = ("phi", tier, b, s, "active")
            labelled = [(a, 0), (p, 1), (p, 2)]
            for perm in itertools.permutations(labelled):
                out.append(tuple(x for x, _ in perm))
    return out


# ---------------------------------------------------------------- frequency tables


@dataclass(frozen=True)
class FrequencyTable:
    """Injective map ``(k mod 2, f) -> n`` with conjugate symmetry."""

    entries: tuple
    spacing: int
    cascade_gap: int

    def __getitem__(self, item):
        return dict(self.entries)[item]

    def as_dict(self):
        return dict(self.entries)

    def positive_values(self):
        return sorted({abs(n) for _, n in self.entries})

    def max_abs(self):
        return max(abs(n) for _, n in self.entries)

    def index(self, k, key):
        n = self[(k % 2, key)]
        fam, tier, b, s, role = key
        return WaveIndex(k, fam, tier, b, s, role, n)


def _pos_keys(include_phi):
    r = [(p, ("R", tier, b, 1, None)) for p in (0, 1) for tier in TIERS for b in range(3)]
    phi = [(p, tier, b) for p in (0, 1) for tier in TIERS for b in range(2)] if include_phi else []
    return r, phi


def _forbidden(values, designed, spacing, gap):
    """Violations among positive magnitudes ``values`` (a brute-force scan)."""
    vals = sorted(values)
    bad = []
    for a, b in itertools.combinations(vals, 2):
        if abs(a - b) < spacing:
            bad.append(("pair", a, b))
    if len(set(vals)) != len(vals):
        bad.append(("repeat",))
    if gap > 0:
        for a, b in itertools.combinations_with_replacement(vals, 2):
            for c in vals:
                if c in (a, b):
                    continue
                if abs(a + b - c) < gap and not (a == b and c == 2 * a and a in designed):
                    bad.append(("triple", a, b, c))
    return bad


def _lowest(spacing, gap):
    return max(1, gap, (spacing + 1) // 2)


def table_key(singles, bases):
    """Order used to pick among feasible tables: ``(n_max, bases, singles)``."""
    vals = list(singles) + list(bases) + [2 * q for q in bases]
    return (max(vals), tuple(sorted(bases)), tuple(sorted(singles)))


def search_table_exhaustive(n_singles, n_bases, spacing=8, cascade_gap=4, n_max=60):
    """Smallest table under :func:`table_key` by plain enumeration (small instances only).

    Raises:
        SearchExhausted: if no set exists with values up to ``n_max``.
    """
    lo = _lowest(spacing, cascade_gap)
    for top in range(lo, n_max + 1):
        for bases in itertools.combinations(range(lo, top // 2 + 1), n_bases):
            used = list(bases) + [2 * q for q in bases]
            if _forbidden(used, set(bases), spacing, cascade_gap):
                continue
            for singles in itertools.combinations(range(lo, top + 1), n_singles):
                vals = used + list(singles)
                if max(vals) != top:
                    continue
                if not _forbidden(vals, set(bases), spacing, cascade_gap):
                    return sorted(singles), sorted(bases)
    raise SearchExhausted(f"no table with values <= {n_max}")


def _cp_model(n_singles, n_bases, spacing, gap, n_max):
    from ortools.sat.python import cp_model

    m = cp_model.CpModel()
    s = {v: m.NewBoolVar(f"s{v}") for v in range(1, n_max + 1)}
    b = {v: m.NewBoolVar(f"b{v}") for v in range(1, n_max // 2 + 1)}
    u = {}
    for v in range(1, n_max + 1):
        terms = [s[v]] + ([b[v]] if v in b else []) + ([b[v // 2]] if v % 2 == 0 and v // 2 in b else [])
        u[v] = m.NewBoolVar(f"u{v}")
        m.Add(sum(terms) == u[v])
    lo = _lowest(spacing, gap)
    for v in range(1, lo):
        m.Add(u[v] == 0)
    m.Add(sum(s.values()) == n_singles)
    m.Add(sum(b.values()) == n_bases)
    for v in range(1, n_max + 1):
        for w in range(v + 1, min(n_max, v + spacing - 1) + 1):
            m.AddBoolOr([u[v].Not(), u[w].Not()])
    if gap > 0:
        for a in range(lo, n_max + 1):
            for c2 in range(a, n_max + 1):
                for c in range(max(1, a + c2 - gap + 1), min(n_max, a + c2 + gap - 1) + 1):
                    if c in (a, c2):
                        continue
                    if a == c2 and c == 2 * a and a in b:
                        m.AddBoolOr([u[a].Not(), u[c].Not(), b[a]])
                    else:
                        m.AddBoolOr([u[a].Not(), u[c2].Not(), u[c].Not()])
    return m, s, b, u


def _cp_solve(model, time_limit):
    from ortools.sat.python import cp_model

    solver = cp_model.CpSolver()
    solver.parameters.max_time_in_seconds = float(time_limit)
    solver.parameters.num_workers = 1
    solver.parameters.random_seed = 0
    status = solver.Solve(model)
    return solver, status, cp_model


def search_table(n_singles, n_bases, spacing=8, cascade_gap=4, n_max=400, time_limit=600.0):
    """Smallest table under :func:`table_key` with a constraint-programming solver.

    Chooses ``n_singles`` values and ``n_bases`` values ``q`` whose doubles
    ``2q`` are also reserved, so that all values with both signs obey the
    pairwise gap ``spacing`` (except a value and its negative) and every triple
    sum stays at least ``cascade_gap`` away from zero, except the designed
    ``q + q - 2q``.  The value bound ``n_max`` must be feasible; the search then
    lowers it and fixes the bases and singles one at a time, smallest first.
    Requires the optional ``ortools`` package.

    Returns:
        ``(singles, bases)`` sorted ascending.

    Raises:
        SearchExhausted: if ``n_max`` is infeasible or a solve exceeds ``time_limit``.
    """
    m, s, b, u = _cp_model(n_singles, n_bases, spacing, cascade_gap, n_max)
    top = m.NewIntVar(0, n_max, "top")
    for v, x in u.items():
        m.Add(top >= v).OnlyEnforceIf(x)
    m.Minimize(top)
    solver, st, cp = _cp_solve(m, time_limit)
    if st != cp.OPTIMAL:
        raise SearchExhausted(f"n_max search status {solver.StatusName(st)} for bound {n_max}")
    best = int(solver.ObjectiveValue())
    m.ClearObjective()
    m.Add(top <= best)
    for group, count in ((b, n_bases), (s, n_singles)):
        fixed = []
        for _ in range(count):
            nxt = m.NewIntVar(0, n_max + 1, "next")
            floor = fixed[-1] if fixed else 0
            m.AddMinEquality(nxt, [v * x + (n_max + 1) * (1 - x) for v, x in group.items() if v > floor])
            m.Minimize(nxt)
            solver, st, cp = _cp_solve(m, time_limit)
            if st != cp.OPTIMAL:
                raise SearchExhausted(f"lexicographic step status {solver.StatusName(st)}")
            v = int(solver.ObjectiveValue())
            m.ClearObjective()
            m.Add(group[v] == 1)
            for w in range(floor + 1, v):
                if w in group:
                    m.Add(group[w] == 0)
            fixed.append(v)
    singles = sorted(v for v, x in s.items() if solver.Value(x))
    bases = sorted(v for v, x in b.items() if solver.Value(x))
    return singles, bases


# Full table for 12 singles, 8 bases, pair gap 8 and triple gap 4, found by the
# constraint solver and frozen here.  Its top value 480 is feasible; the best
# proven lower bound is 321, so the table is not known to be minimal.
FULL_SINGLES = (4, 20, 28, 52, 320, 344, 352, 368, 376, 392, 400, 424)
FULL_BASES = (108, 124, 148, 156, 180, 192, 224, 240)


def assign_frequencies(include_phi=True, spacing=8, cascade_gap=4, values=None, n_max=400, search="cp"):
    """Frequency table for the full index set (or the stress waves only).

    Stress-wave entries take the singles in ascending order over
    ``(parity, tier, basis)``; current-wave entries take the bases: the passive
    wave of sign ``+`` gets ``+q`` and the active wave of sign ``+`` gets ``-2q``.
    Negative signs get the negated values.

    Args:
        values: precomputed ``(singles, bases)``; searched for when ``None``.
        search: ``"cp"`` for :func:`search_table`, ``"exhaustive"`` for
            :func:`search_table_exhaustive`.
    """
    r_keys, phi_keys = _pos_keys(include_phi)
    if values is None:
        fn = search_table if search == "cp" else search_table_exhaustive
        values = fn(len(r_keys), len(phi_keys), spacing, cascade_gap, n_max=n_max)
    singles, bases = values
    if len(singles) != len(r_keys) or len(bases) != len(phi_keys):
        raise ValueError("value counts do not match the index set")
    entries = []
    for (p, key), n in zip(r_keys, sorted(singles)):
        fam, tier, b, _, _ = key
        entries.append(((p, ("R", tier, b, 1, None)), n))
        entries.append(((p, ("R", tier, b, -1, None)), -n))
    for (p, tier, b), q in zip(phi_keys, sorted(bases)):
        for s in (1, -1):
            entries.append(((p, ("phi", tier, b, s, "passive")), s * q))
            entries.append(((p, ("phi", tier, b, s, "active")), -2 * s * q))
    return FrequencyTable(tuple(entries), spacing, cascade_gap)


@lru_cache(maxsize=8)
def full_table():
    """Table for the complete index set with the pair gap 8 and triple gap 4."""
    return assign_frequencies(True, 8, 4, values=(FULL_SINGLES, FULL_BASES))


@lru_cache(maxsize=8)
def desk_table():
    """Stress-wave-only table on the smallest integers 1..12 (no gap constraints)."""
    return assign_frequencies(False, 1, 0, n_max=12, search="exhaustive")


def verify_table(table: FrequencyTable):
    """Brute-force scan of the three constraint families; returns violation lists."""
    d = table.as_dict()
    conj = [k for k, n in d.items() if d[(k[0], _conj_key(k[1]))] != -n]
    casc = []
    for p in (0, 1):
        for tier in TIERS:
            for b in range(2):
                for s in (1, -1):
                    if (p, ("phi", tier, b, s, "passive")) in d:
                        q = d[(p, ("phi", tier, b, s, "passive"))]
                        a = d[(p, ("phi", tier, b, s, "active"))]
                        if 2 * q + a != 0:
                            casc.append((p, tier, b, s))
    designed = set()
    for (p, key), n in d.items():
        if key[0] == "phi" and key[4] == "passive" and n > 0:
            designed.add(n)
    vals = sorted(set(d.values()))
    bad_pairs, bad_triples = [], []
    if table.spacing > 0:
        for a in vals:
            for b in vals:
                if a != -b and abs(a + b) < table.spacing:
                    bad_pairs.append((a, b))
    if table.cascade_gap > 0:
        for a, b, c in itertools.product(vals, repeat=3):
            s = a + b + c
            if abs(s) < table.cascade_gap:
                m = sorted((a, b, c))
                # designed: q, q, -2q or -q, -q, 2q
                ok = (m[0] == m[1] and m[2] == -2 * m[0] and abs(m[0]) in designed) or (
                    m[1] == m[2] and m[0] == -2 * m[1] and abs(m[1]) in designed
                )
                if not ok:
                    bad_triples.append((a, b, c))
    injective = len(set(d.values())) == len(d)
    return {"conjugation": conj, "cascade": casc, "pairs": bad_pairs, "triples": bad_triples, "injective": injective}


def _conj_key(key):
    fam, tier, b, s, role = key
    return (fam, tier, b, -s, role)


# ---------------------------------------------------------------- time cutoffs


def smooth_step(s):
    """C-infinity step: 0 for ``s <= 0``, 1 for ``s >= 1``."""
    s = np.asarray(s, dtype=float)
    a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def eta_tilde(tb):
    """Plateau cutoff: 1 on ``[-2/3, 2/3]``, supported in ``[-1, 1]``."""
    a = np.abs(np.asarray(tb, dtype=float))
    return 1.0 - smooth_step((a - 2.0 / 3.0) * 3.0)


def eta_bar(tb):
    """Normalized cutoff with ``sum_k eta_bar(t - k)^6 = 1``."""
    tb = np.asarray(tb, dtype=float)
    frac = tb - np.floor(tb)
    den = sum(eta_tilde(frac - j) ** 6 for j in (-1, 0, 1, 2))
    return eta_tilde(tb) / den ** (1.0 / 6.0)


def eta_bar_dt(tb, h=1e-5):
    return (eta_bar(tb + h) - eta_bar(tb - h)) / (2 * h)


def time_cutoff(t, k, tau_hat, family):
    """``eta_I(t)``: ``eta_bar^3`` for stress waves, ``eta_bar^2`` for current waves."""
    e = eta_bar(np.asarray(t, dtype=float) / tau_hat - k)
    return e**3 if family == "R" else e**2


def time_cutoffs(tau_hat):
    """Return a callable ``(t, k, family) -> eta_I(t)`` for the given time scale."""
    if tau_hat <= 0:
        raise ValueError("tau_hat must be positive")
    return lambda t, k, family: time_cutoff(t, k, tau_hat, family)


def active_slots(t, tau_hat):
    """Slots ``k`` with ``|t - k tau_hat| < tau_hat``."""
    r = t / tau_hat
    return [k for k in range(int(math.floor(r)) - 1, int(math.ceil(r)) + 2) if abs(r - k) < 1.0]


# ---------------------------------------------------------------- energy increment


@dataclass(frozen=True)
class EnergyIncrement:
    """Nonincreasing ``e(t)`` with ``e^{1/2} = 2 (K0 e_under)^{1/2} (eta * 1_{t <= t_end + tau/100})``.

    ``eta`` is a nonnegative mollifier supported in ``[0, tau/200]``, taken as
    the derivative of :func:`smooth_step`, so the convolution with the
    indicator is ``1 - smooth_step``.  The plateau value is ``4 K0 e_under`` and
    ``e`` vanishes from ``t_end + 3 tau/200`` on.
    """

    plateau: float
    t_end: float
    tau: float

    @property
    def drop_start(self):
        return self.t_end + self.tau / 100.0

    @property
    def drop_end(self):
        return self.drop_start + self.tau / 200.0

    def sqrt(self, t):
        s = (np.asarray(t, dtype=float) - self.drop_start) / (self.drop_end - self.drop_start)
        return math.sqrt(self.plateau) * (1.0 - smooth_step(s))

    def __call__(self, t):
        return self.sqrt(t) ** 2

    def derivative(self, t, h=None):
        h = (self.drop_end - self.drop_start) * 1e-4 if h is None else h
        return (self(np.asarray(t) + h) - self(np.asarray(t) - h)) / (2 * h)


def energy_increment(e_under, sup_I_G, K0, tau):
    """Energy increment for a stage with plateau ``4 K0 e_under``."""
    return EnergyIncrement(4.0 * K0 * e_under, sup_I_G, tau)


# ---------------------------------------------------------------- coefficient solvers

# ker dx^1 (x) ker dx^1 coordinates: (22, 33, 23) in sym storage order indices
_K1 = (1, 2, 5)


def _ff_matrix(basis):
    rows = []
    for f in basis:
        ff = np.outer(f, f)
        rows.append([ff[1, 1], ff[2, 2], ff[1, 2]])
    return np.array(rows).T  # columns = basis tensors


def _solve_squares(basis, target, multiplicity, lo, hi, what):
    """Solve ``sum_f 2 m g_f f f = target`` for ``g_f = gamma_f^2`` pointwise."""
    A = _ff_matrix(basis)
    Ainv = np.linalg.inv(A)
    rhs = np.stack([target[i] for i in _K1])  # (3, ...)
    g = np.tensordot(Ainv, rhs, axes=(1, 0)) / (2.0 * multiplicity)
    if np.any(g <= 0):
        raise NegativeDiscriminant(f"{what}: squared coefficient {g.min():.3g} <= 0")
    gam = np.sqrt(g)
    return gam, {"min": float(gam.min()), "max": float(gam.max()), "in_bounds": bool(gam.min() >= lo and gam.max() <= hi)}


def _sym_in_k1(eps):
    """Check a sym-storage tensor lies in ker dx^1 (x) ker dx^1."""
    eps = np.asarray(eps, dtype=float)
    bad = max(float(np.abs(eps[i]).max()) for i in (0, 3, 4))
    if bad > 1e-12 * max(1.0, float(np.abs(eps).max())):
        raise ValueError("tensor has components outside ker dx^1 (x) ker dx^1")
    return eps


def solve_diamond_stress_coefficients(eps, multiplicity=1):
    """Coefficients with ``sum_f 2 m gamma_f^2 f f = (2/3) delta_[1] + eps``.

    Args:
        eps: sym-storage tensor (6, ...) valued in ``ker dx^1 (x) ker dx^1``.
        multiplicity: how many times each basis direction appears in the sum
            (1 counts a wave together with its conjugate once).

    Returns:
        ``(gamma (3, ...), report)``; ``report["in_bounds"]`` tells whether
        ``1/3 <= gamma <= 2/3`` holds.

    Raises:
        NegativeDiscriminant: if some ``gamma_f^2 <= 0``.
    """
    eps = _sym_in_k1(eps)
    target = F.const_sym(2.0 / 3.0 * DELTA_1).reshape((6,) + (1,) * (eps.ndim - 1)) + eps
    return _solve_squares(DIAMOND_B_R, target, multiplicity, 1 / 3, 2 / 3, "diamond")


def solve_overline_stress_coefficients(eps_bar, multiplicity=2, convention="star"):
    """Coefficients with ``sum_f 2 m gamma_f^2 f f = delta_[1*] + eps_bar``.

    The default multiplicity 2 treats each direction as listed twice (once per
    sign); the stage passes 1 so that a wave and its conjugate together carry
    the target energy.  With the ``"plain"`` convention the target is
    ``delta_[1]`` and the basis is the diamond one.
    """
    eps_bar = _sym_in_k1(eps_bar)
    T = overline_target(convention)
    target = F.const_sym(T).reshape((6,) + (1,) * (eps_bar.ndim - 1)) + eps_bar
    return _solve_squares(overline_basis(convention), target, multiplicity, 1 / 4, 1, "overline")


NORMALIZATIONS = {"labelled": 12.0, "wave": 6.0, "energy": 3.0}


def solve_current_coefficients(phi_target, e_profile, tier, K0=None, delta_bar=None, normalization="labelled"):
    """Current-wave coefficients for one tier.

    Passive waves get a constant (``K0^{-1/2}`` diamond, ``delta_bar^{1/3}``
    overline); active waves are linear in ``f . phi_target`` scaled by
    ``e^{-3/2}``.  The normalization divides the active coefficient:
    ``"labelled"`` (12) matches the sum over the labelled cascade trios,
    ``"wave"`` (6) the sum over distinct ordered wave products and ``"energy"``
    (3) the low-frequency part of ``|V|^2 V / 2``.

    Returns:
        dict ``{(basis_index, role): gamma}`` (same for both signs).
    """
    phi_target = np.asarray(phi_target, dtype=float)
    e = np.asarray(e_profile, dtype=float)
    c = NORMALIZATIONS[normalization]
    if tier == "diamond":
        passive = K0**-0.5
        scale = -K0 * np.where(e > 0, e, 1.0) ** -1.5 / c
        basis = DIAMOND_B_PHI
    elif tier == "overline":
        passive = delta_bar ** (1.0 / 3.0)
        scale = -(delta_bar ** (-2.0 / 3.0)) * np.where(e > 0, e, 1.0) ** -1.5 / c
        basis = OVERLINE_B_PHI
    else:
        raise ValueError(tier)
    scale = np.where(e > 0, scale, 0.0)
    out = {}
    for b, f in enumerate(basis):
        proj = sum(f[a] * phi_target[a] for a in range(3))
        out[(b, "active")] = scale * proj
        out[(b, "passive")] = passive * np.ones_like(proj)
    return out


def trilinear_sum(gammas, tier):
    """``sum over labelled cascade trios of g1 g2 g3 f2 (f1 . f3)``; returns (3, ...)."""
    basis = DIAMOND_B_PHI if tier == "diamond" else OVERLINE_B_PHI
    acc = 0.0
    for trio in cascade_trios(tier):
        g = [gammas[(key[2], key[4])] for key in trio]
        fs = [basis[key[2]] for key in trio]
        coef = g[0] * g[1] * g[2] * float(fs[0] @ fs[2])
        acc = acc + np.multiply.outer(fs[1], coef)
    return acc


# ---------------------------------------------------------------- wave assembly


def band_for(n, lam):
    """Band multiplier for frequency ``n``: ball around ``n lam / 2pi e_1`` (cycles)."""
    c = n * lam / (2.0 * np.pi)
    return F.BandMultiplier((c, 0.0, 0.0), 0.5 * abs(c), (2.0 / 3.0) * abs(c))


def tilde_direction(fhat, grad_unit):
    """Project ``fhat`` orthogonally to the phase gradient."""
    g2 = sum(grad_unit[a] ** 2 for a in range(3))
    dot = sum(grad_unit[a] * fhat[a] for a in range(3))
    return np.stack([fhat[a] - dot / g2 * grad_unit[a] for a in range(3)])


@dataclass
class BuiltWave:
    """One assembled wave with diagnostics."""

    index: WaveIndex
    V: np.ndarray
    v_hat: np.ndarray
    norms: dict

    def manifest(self, tau_hat):
        return {
            "index": [self.index.k, self.index.family, self.index.tier, self.index.basis_index, self.index.sign, self.index.role],
            "n": self.index.n,
            "t_center": self.index.t_center(tau_hat),
            **self.norms,
        }


def build_wave(index: WaveIndex, phase, amplitude, lam, convention="plain", check=True, norms=True):
    """``V_I = P_I[exp(i lam xi_I) v_I]`` with ``v_I = amplitude * f_tilde``.

    Args:
        index: wave index (its ``n`` sets the band and the phase frequency).
        phase: :class:`artifact.transport.PhaseData` for the wave's slot.
        amplitude: ``e_I^{1/2} eta_I gamma_I`` (scalar or grid field).
        lam: base frequency (angular; a multiple of ``2 pi``).
        check: verify the band against the grid before projecting.
        norms: compute the diagnostic norms (empty dict otherwise).

    Returns:
        :class:`BuiltWave` with ``V`` complex (3, n, n, n) and ``v_hat = amplitude * fhat``.
    """
    fhat = index.direction(convention)
    amp = np.asarray(amplitude, dtype=float)
    ft = tilde_direction(fhat, phase.grad_unit)
    v = amp * ft
    factor = phase.factor(lam, index.n)
    VR = factor * v
    V = F.band_leray_project(VR, band_for(index.n, lam), check=check)
    v_hat = amp * fhat.reshape(3, 1, 1, 1)
    info = {}
    if norms:
        info = {
            "c0_V": F.c0_norm(V),
            "c0_v": F.c0_norm(v),
            "c0_dv": F.c0_norm(V - VR),
            "c0_dhat_v": F.c0_norm(v - v_hat),
            "orthogonality": float(np.abs(sum(v[a] * phase.grad_unit[a] for a in range(3))).max()),
        }
    return BuiltWave(index, V, v_hat, info)


def pressure_direction_term(n, fhat):
    """``(grad xi_hat)_j fhat_l delta_[2*]^{jl}`` for ``xi_hat = n x^1`` (a scalar)."""
    g = n * E1
    return float(g @ DELTA_2STAR @ np.asarray(fhat))


def write_wave_manifest(path, waves, tau_hat):
    with open(path, "w") as fh:
        json.dump([w.manifest(tau_hat) if isinstance(w, BuiltWave) else w for w in waves], fh, indent=1)


def index_dict(index: WaveIndex):
    return asdict(index)
