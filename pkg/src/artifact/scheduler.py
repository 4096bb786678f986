"""Log-parameter recursion that governs the full convex integration iteration.

The ledger vector is ``L = [L_Z, L_G, L_uG, L_pu, L_vp, L_Xi]`` (natural logs):

* ``L_Z``  log of the growth base ``Z``
* ``L_G``  log of the smallest energy level ``e_G``
* ``L_uG`` log of ``e_u / e_G`` where ``e_u = e_phi**(1/3) * e_R**(2/3)``
* ``L_pu`` log of ``e_phi / e_u``
* ``L_vp`` log of ``e_v / e_phi``
* ``L_Xi`` log of the frequency level ``Xi``

Each stage maps ``L -> T L + L_c (e_3 + e_6)`` where ``L_c`` is the log of the
stage constant.  Everything here is field free and cheap.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError

TRANSITION = np.array(
    [
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [-1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 0.0, 1.0 / 3.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 2.0 / 3.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        [2.0, 0.0, 2.0, 2.0, 0.5, 1.0],
    ]
)
TRANSITION_EXACT = [
    [Fraction(1), 0, 0, 0, 0, 0],
    [Fraction(-1), Fraction(1), 0, 0, 0, 0],
    [Fraction(1), 0, Fraction(1, 3), 0, 0, 0],
    [0, 0, Fraction(2, 3), 0, 0, 0],
    [0, 0, 0, Fraction(1), 0, 0],
    [Fraction(2), 0, Fraction(2), Fraction(2), Fraction(1, 2), Fraction(1)],
]
# forcing enters the third and sixth slots
FORCING = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 1.0])

# reduced dynamics on [L_Z, L_uG, L_pu, L_vp]
REDUCED = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [1.0, 1.0 / 3.0, 0.0, 0.0],
        [0.0, 2.0 / 3.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ]
)
REDUCED_FORCING = np.array([0.0, 1.0, 0.0, 0.0])
REDUCED_SLOTS = (0, 2, 3, 4)
ZETA = np.array([1.0, 1.5, 1.0, 1.0])

# left null vector of (T - I); pairing it with a step gives 13 L_c
CONSERVATION = np.array([0.0, 15.0, 11.0, 5.0, 1.0, 2.0])
CONSERVATION_FORCING = 13.0


def _check_conservation_vector():
    resid = CONSERVATION @ (TRANSITION - np.eye(6))
    if np.max(np.abs(resid)) > 1e-12 or CONSERVATION @ FORCING != CONSERVATION_FORCING:
        raise RuntimeError("conservation vector does not annihilate T - I")


_check_conservation_vector()


@dataclass(frozen=True)
class ParameterLedger:
    """Ledger state for one stage of the iteration."""

    L: np.ndarray
    L_c: float
    k: int = 0

    def __post_init__(self):
        object.__setattr__(self, "L", np.asarray(self.L, dtype=float).reshape(6))

    @property
    def reduced(self) -> np.ndarray:
        return self.L[list(REDUCED_SLOTS)]

    @classmethod
    def from_reduced(cls, red, L_G=0.0, L_Xi=0.0, L_c=0.0, k=0):
        red = np.asarray(red, dtype=float)
        return cls(np.array([red[0], L_G, red[1], red[2], red[3], L_Xi]), L_c, k)

    @classmethod
    def sector_start(cls, L_Z, eps=(0.0, 0.0, 0.0), L_G=0.0, L_Xi=0.0, L_c=0.0):
        """Start at ``L_Z * (zeta + eps)`` with ``eps_1 = 0``."""
        e = np.concatenate([[0.0], np.asarray(eps, dtype=float)])
        return cls.from_reduced(L_Z * (ZETA + e), L_G, L_Xi, L_c)

    def levels(self):
        """Return ``(Xi, e_v, e_phi, e_R, e_G)`` encoded by this ledger."""
        L_Z, L_G, L_uG, L_pu, L_vp, L_Xi = self.L
        e_G = math.exp(L_G)
        e_u = e_G * math.exp(L_uG)
        e_phi = e_u * math.exp(L_pu)
        e_v = e_phi * math.exp(L_vp)
        # e_u = e_phi^(1/3) e_R^(2/3)
        e_R = (e_u / e_phi ** (1.0 / 3.0)) ** 1.5
        return math.exp(L_Xi), e_v, e_phi, e_R, e_G

    def frequency_growth(self) -> float:
        """Stage parameter ``N = Z^2 Q_vp^(1/2) Q_pG^2`` (``Q_pG = Q_pu Q_uG``)."""
        L_Z, _, L_uG, L_pu, L_vp, _ = self.L
        return math.exp(2 * L_Z + 0.5 * L_vp + 2 * (L_pu + L_uG))


def advance(ledger: ParameterLedger) -> ParameterLedger:
    """One stage of the recursion: ``L' = T L + L_c (e_3 + e_6)``."""
    L = TRANSITION @ ledger.L + ledger.L_c * FORCING
    return replace(ledger, L=L, k=ledger.k + 1)


def step_difference(L, L_c):
    """Exact one-step increment ``(T - I) L + L_c (e_3 + e_6)``.

    Works on a single 6-vector or a stack ``(..., 6)``.
    """
    L = np.asarray(L, dtype=float)
    return L @ (TRANSITION - np.eye(6)).T + np.multiply.outer(np.asarray(L_c), FORCING)


def advance_exact(L: Sequence[Fraction], L_c: Fraction) -> list[Fraction]:
    """Rational-arithmetic version of :func:`advance`."""
    forcing = [0, 0, L_c, 0, 0, L_c]
    return [
        sum((TRANSITION_EXACT[i][j] * L[j] for j in range(6)), Fraction(0)) + forcing[i]
        for i in range(6)
    ]


def conservation_residual(L_before, L_after, L_c):
    """``15 dL_G + 11 dL_uG + 5 dL_pu + dL_vp + 2 dL_Xi - 13 L_c``."""
    if isinstance(L_c, Fraction):
        d = [a - b for a, b in zip(L_after, L_before)]
        return sum(Fraction(int(c)) * x for c, x in zip(CONSERVATION, d)) - 13 * L_c
    d = np.asarray(L_after, dtype=float) - np.asarray(L_before, dtype=float)
    return d @ CONSERVATION - CONSERVATION_FORCING * np.asarray(L_c)


def advance_reduced(red, L_c):
    """Reduced affine map on ``[L_Z, L_uG, L_pu, L_vp]`` (stackable)."""
    red = np.asarray(red, dtype=float)
    return red @ REDUCED.T + np.multiply.outer(np.asarray(L_c), REDUCED_FORCING)


def trajectory(ledger: ParameterLedger, steps: int) -> np.ndarray:
    """Array of shape ``(steps + 1, 6)`` holding the ledger vectors."""
    out = np.empty((steps + 1, 6))
    out[0] = ledger.L
    for k in range(steps):
        out[k + 1] = TRANSITION @ out[k] + ledger.L_c * FORCING
    return out


# ---------------------------------------------------------------- admissibility


def admissibility_margins(red) -> np.ndarray:
    """Both admissibility margins for reduced vector(s) ``[L_Z, L_uG, L_pu, L_vp]``.

    ``m1 = 2 L_Z - L_pu`` and ``m2 = 2 L_Z + 2 L_uG + 2 L_pu - L_vp``.
    """
    red = np.asarray(red, dtype=float)
    L_Z, L_uG, L_pu, L_vp = (red[..., i] for i in range(4))
    return np.stack([2 * L_Z - L_pu, 2 * L_Z + 2 * L_uG + 2 * L_pu - L_vp], axis=-1)


def check_admissible(ledger):
    """Return ``(ok, margin1, margin2)`` for a ledger or reduced vector."""
    red = ledger.reduced if isinstance(ledger, ParameterLedger) else ledger
    m1, m2 = admissibility_margins(red)
    return bool(m1 >= 0 and m2 >= 0), float(m1), float(m2)


def in_sector(red, r0, L_Zlow, slack=1e-12) -> np.ndarray:
    """Membership in the truncated sector around the direction ``zeta``."""
    red = np.asarray(red, dtype=float)
    L_Z = red[..., 0]
    eps = red / L_Z[..., None] - ZETA
    return (
        (L_Z >= L_Zlow - slack)
        & (np.abs(eps[..., 0]) <= slack)
        & (np.max(np.abs(eps), axis=-1) <= r0 + slack)
    )


def _corner_margins(r0):
    corners = np.array(np.meshgrid([-r0, r0], [-r0, r0], [-r0, r0])).reshape(3, -1).T
    vecs = ZETA + np.concatenate([np.zeros((len(corners), 1)), corners], axis=1)
    return admissibility_margins(vecs)


@dataclass
class SectorReport:
    r0: float
    Z_low: float
    checked: list = field(default_factory=list)


def search_sector(Z, L_c, samples=2000, steps=50, seed=0, grid=None) -> SectorReport | None:
    """Largest sector radius below 1/2 that passes sampled verification.

    A radius is feasible when the sector's corners are admissible (the margins
    are linear so corners suffice) and randomly sampled sector points remain in
    the sector for ``steps`` iterations.  ``Z_low`` is the smallest base for
    which the reported radius is invariant.
    """
    L_Z = math.log(Z)
    if L_Z <= 0:
        raise DomainError("Z must exceed 1")
    grid = np.arange(0.49, 0.0, -0.01) if grid is None else np.asarray(grid)
    rng = np.random.default_rng(seed)
    report = SectorReport(float("nan"), float("nan"))
    for r0 in grid:
        if np.any(_corner_margins(r0) < 0):
            report.checked.append((float(r0), "corners"))
            continue
        L_Zlow = 1.5 * L_c / r0 if L_c > 0 else 0.0
        if L_Z < L_Zlow:
            report.checked.append((float(r0), "Z too small"))
            continue
        fails = sector_violations(r0, L_Z, L_c, samples, steps, rng, fixed_L_Z=True)
        report.checked.append((float(r0), int(fails)))
        if fails == 0:
            report.r0 = float(r0)
            report.Z_low = math.exp(L_Zlow)
            return report
    return None


def sector_violations(r0, L_Zlow, L_c, n_starts, n_steps, rng, fixed_L_Z=False) -> int:
    """Count admissibility or sector failures over random sector starts.

    Starts are ``L_Z (zeta + eps)`` with ``eps_2..4`` uniform in ``[-r0, r0]``
    and ``L_Z`` uniform in ``[L_Zlow, 4 L_Zlow]`` (or equal to ``L_Zlow``).
    """
    rng = np.random.default_rng(rng)
    L_Z = np.full(n_starts, L_Zlow) if fixed_L_Z else rng.uniform(L_Zlow, 4 * L_Zlow, n_starts)
    eps = np.concatenate([np.zeros((n_starts, 1)), rng.uniform(-r0, r0, (n_starts, 3))], axis=1)
    red = L_Z[:, None] * (ZETA + eps)
    bad = np.zeros(n_starts, dtype=bool)
    for _ in range(n_steps + 1):
        bad |= np.any(admissibility_margins(red) < 0, axis=1)
        bad |= ~in_sector(red, r0, L_Zlow, slack=1e-9 * L_Zlow)
        red = advance_reduced(red, np.full(n_starts, L_c))
    return int(bad.sum())


# ---------------------------------------------------------------- decay laws


def log_e_phi(L) -> np.ndarray:
    L = np.asarray(L)
    return L[..., 1] + L[..., 2] + L[..., 3]


def log_timescale(L) -> np.ndarray:
    """``log(Xi e_v^(1/2))``."""
    L = np.asarray(L)
    return L[..., 5] + 0.5 * (log_e_phi(L) + L[..., 4])


def decay_laws(traj: np.ndarray, L_c: float) -> dict:
    """Check both sandwich laws along a trajectory of ledger vectors."""
    traj = np.asarray(traj)
    L_Z = traj[:, 0]
    d_phi = 0.5 * np.diff(log_e_phi(traj))  # log of the e_phi^(1/2) ratio
    d_time = np.diff(log_timescale(traj))
    amp_lo = d_phi >= -0.75 * L_Z[:-1] - 1e-9 * np.abs(L_Z[:-1])
    amp_hi = d_phi <= -0.25 * L_Z[:-1] + 1e-9 * np.abs(L_Z[:-1])
    time_lo = d_time >= L_Z[:-1] - 1e-9 * np.abs(L_Z[:-1])
    time_hi = d_time <= 9 * L_Z[:-1] + 1e-9 * np.abs(L_Z[:-1])
    exact_phi = 2 * d_phi - (-traj[:-1, 3] + L_c)
    exact_time = d_time - (
        2 * traj[:-1, 0] + 2 * traj[:-1, 2] + 2 * traj[:-1, 3] + 1.5 * L_c
    )
    return {
        "amplitude_ok": bool(np.all(amp_lo & amp_hi)),
        "timescale_ok": bool(np.all(time_lo & time_hi)),
        "amplitude_exponent_range": (
            float(np.min(d_phi / L_Z[:-1])),
            float(np.max(d_phi / L_Z[:-1])),
        ),
        "timescale_exponent_range": (
            float(np.min(d_time / L_Z[:-1])),
            float(np.max(d_time / L_Z[:-1])),
        ),
        "max_phi_law_error": float(np.max(np.abs(exact_phi))),
        "max_timescale_law_error": float(np.max(np.abs(exact_time))),
    }


# ---------------------------------------------------------------- regularity


def log_holder_increment(L, L_c, alpha) -> float:
    """Per-step change of ``log H_alpha`` at ledger vector ``L``.

    ``log H_alpha = (L_G + L_uG + L_pu + (1 + alpha) L_vp) / 2 + alpha L_Xi``.
    """
    d = step_difference(L, L_c)
    return 0.5 * (d[1] + d[2] + d[3] + (1 + alpha) * d[4]) + alpha * d[5]


def holder_exponent(Z, L_c, start: ParameterLedger | None = None, burn_in=1000, tol=1e-6):
    """Largest ``alpha`` whose correction norms ``H_alpha`` remain summable.

    Iterates ``burn_in`` steps, then bisects on the sign of the per-step change
    of ``log H_alpha`` (negative means geometric decay, hence summable).
    """
    L_Z = math.log(Z)
    if L_Z <= 0:
        raise DomainError("Z must exceed 1")
    ledger = start if start is not None else ParameterLedger.sector_start(L_Z, L_c=L_c)
    ledger = replace(ledger, L_c=L_c)
    L = ledger.L.copy()
    for _ in range(burn_in):
        L = TRANSITION @ L + L_c * FORCING
    lo, hi = 0.0, 1.0
    if log_holder_increment(L, L_c, lo) >= 0:
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if log_holder_increment(L, L_c, mid) < 0:
            lo = mid
        else:
            hi = mid
    return lo


def holder_exponent_closed_form(Z, L_c) -> float:
    """Independent route: ``L_Z / (15 L_Z + 13 L_c)`` from the fixed point."""
    L_Z = math.log(Z)
    return L_Z / (15 * L_Z + 13 * L_c)


def extrapolate_holder(Zs: Iterable[float], alphas: Iterable[float], L_c: float) -> float:
    """Neville extrapolation of ``alpha*(Z)`` to ``L_c / L_Z -> 0``."""
    x = np.array([L_c / math.log(z) for z in Zs], dtype=float)
    y = np.array(list(alphas), dtype=float)
    # polynomial through the points, evaluated at x = 0
    p = y.copy()
    n = len(x)
    for m in range(1, n):
        for i in range(n - m):
            p[i] = ((0 - x[i + m]) * p[i] + (x[i] - 0) * p[i + 1]) / (x[i] - x[i + m])
    return float(p[0])


# ---------------------------------------------------------------- Hausdorff


def hausdorff_lower_bound(Z) -> float:
    """Dimension bound ``4 log 2 / (3 log Z)`` for the Cantor family."""
    if Z <= 1:
        raise DomainError("Z must exceed 1")
    return 4.0 * math.log(2.0) / (3.0 * math.log(Z))


def min_cylinder_cover(depth: int, fixed_bits: int = 2):
    """Exact minimum of ``sum 2^-k`` over every cover by dyadic cylinders.

    The covered set is all bit strings whose first ``fixed_bits`` bits vanish,
    resolved to ``depth`` bits.  Dynamic programming over the prefix tree:
    a node is either used as a cylinder itself or split into its children.
    Every cover (redundant ones included) is dominated by one of these choices,
    so the returned minimum ranges over all covers.  Also returns the number of
    irredundant covers of the free part of the tree.
    """
    if depth < fixed_bits:
        raise DomainError("depth must be at least the number of fixed bits")
    # cost of covering a full subtree rooted at level k; counts of antichain covers
    cost = Fraction(1, 2**depth)
    count = 1
    for k in range(depth - 1, fixed_bits - 1, -1):
        cost = min(Fraction(1, 2**k), 2 * cost)
        count = count * count + 1
    # ancestors of the prefix node also cover the set, at larger cost
    for k in range(fixed_bits - 1, -1, -1):
        cost = min(cost, Fraction(1, 2**k))
        count += 1
    return cost, count


def enumerate_cylinder_covers(depth: int, fixed_bits: int = 2):
    """Explicitly enumerate irredundant cylinder covers (small depth only).

    Yields lists of cylinder levels ``k``.
    """

    def covers(level):
        yield [level]
        if level < depth:
            for left in list(covers(level + 1)):
                for right in covers(level + 1):
                    yield left + right

    yield from covers(fixed_bits)


def ball_cover_sum(levels, Z, c, e_phi0, decay=0.75):
    """``sum r_i^dZ`` for radii ``r_i = c e_phi,(k_i + 1)^(1/2)``.

    The slowest admissible amplitude decay ``Z^-decay`` per stage is used, so
    the sum is a lower bound for every trajectory in the sector.
    """
    dz = hausdorff_lower_bound(Z)
    levels = np.asarray(levels, dtype=float)
    r = c * math.sqrt(e_phi0) * Z ** (-decay * (levels + 1))
    return float(np.sum(r**dz)), (c * math.sqrt(e_phi0)) ** dz / 8.0


# ---------------------------------------------------------------- export


def write_trajectory_csv(path, traj: np.ndarray):
    red = traj[:, list(REDUCED_SLOTS)]
    margins = admissibility_margins(red)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "L_Z", "L_G", "L_uG", "L_pu", "L_vp", "L_Xi", "margin1", "margin2"])
        for k, (row, m) in enumerate(zip(traj, margins)):
            w.writerow([k, *(f"{x:.17g}" for x in row), f"{m[0]:.17g}", f"{m[1]:.17g}"])
