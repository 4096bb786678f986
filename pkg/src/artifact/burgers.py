"""Closed-form family of compactly supported Burgers solutions.

For ``alpha`` in ``[0, 1]`` and ``x > 0``::

    u(t, x) = alpha      on 0 < x < alpha t
              x / t      on alpha t <= x < t
              1          on t <= x <= 1 + t/2
              0          beyond

extended oddly in ``x``.  All members share the initial data
``1_{0 < x <= 1} - 1_{-1 <= x < 0}``.  Discontinuities sit at ``x = 0``
(stationary, jump ``-alpha -> alpha``) and at ``x = +-(1 + t/2)`` (speed
``+-1/2``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError

T_MAX = 2.0


def _check(alpha, t):
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha={alpha} outside [0, 1]")
    if np.any(np.asarray(t) <= 0.0) or np.any(np.asarray(t) > T_MAX):
        raise DomainError("time must lie in (0, 2]")


def evaluate(alpha, t, x, plateau=1.0):
    """Value of ``u_alpha(t, x)``; vectorized over ``t`` and ``x``.

    ``plateau`` replaces the value 1 on the plateau; it exists only to build
    deliberately wrong profiles for negative tests.
    """
    _check(alpha, t)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    s = np.sign(x)
    a = np.abs(x)
    u = np.where(
        a < alpha * t,
        alpha,
        np.where(a < t, a / t, np.where(a <= 1.0 + 0.5 * t, plateau, 0.0)),
    )
    u = s * u
    return float(u) if u.ndim == 0 else u


def breakpoints(alpha, t):
    """Sorted curves where the profile changes formula at time ``t``."""
    pts = {0.0, t, 1.0 + 0.5 * t, -t, -(1.0 + 0.5 * t)}
    if alpha > 0:
        pts |= {alpha * t, -alpha * t}
    return sorted(pts)


# ---------------------------------------------------------------- energy


def energy(alpha, t):
    """``int u_alpha(t, x)^2 dx`` by piecewise exact integration."""
    _check(alpha, t)
    half = alpha**3 * t + t * (1.0 - alpha**3) / 3.0 + (1.0 - 0.5 * t)
    return 2.0 * half


def total_rate(alpha, t=1.0):
    """``d/dt int u_alpha^2 dx`` from the exact energy (time independent)."""
    _check(alpha, t)
    return 2.0 * alpha**3 + 2.0 * (1.0 - alpha**3) / 3.0 - 1.0


@dataclass(frozen=True)
class Jump:
    position: float
    speed: float
    left: float
    right: float

    @property
    def production(self) -> float:
        """Energy production ``s [u^2/2] - [u^3/3]`` with ``[f] = f_left - f_right``.

        Positive values create energy and violate the local energy inequality.
        """
        s, l, r = self.speed, self.left, self.right
        return s * (l * l - r * r) / 2.0 - (l**3 - r**3) / 3.0

    @property
    def rankine_hugoniot_defect(self) -> float:
        """``s (l - r) - (l^2 - r^2)/2``; zero for an admissible weak jump."""
        l, r = self.left, self.right
        return self.speed * (l - r) - (l * l - r * r) / 2.0


def jumps(alpha, t=1.0):
    """Discontinuities of ``u_alpha`` at time ``t`` (left to right)."""
    _check(alpha, t)
    out = [Jump(-(1.0 + 0.5 * t), -0.5, 0.0, -1.0)]
    if alpha > 0:
        out.append(Jump(0.0, 0.0, -alpha, alpha))
    out.append(Jump(1.0 + 0.5 * t, 0.5, 1.0, 0.0))
    return out


def energy_accounting(alpha, t=1.0) -> dict:
    """Total energy rate and per-jump productions.

    Smooth regions conserve ``u^2/2`` exactly, so the sum of jump productions
    equals ``d/dt int u^2/2``; both routes are returned for cross-checking.
    """
    js = jumps(alpha, t)
    return {
        "alpha": alpha,
        "total_rate": total_rate(alpha, t),
        "total_rate_from_jumps": 2.0 * sum(j.production for j in js),
        "productions": [(j.position, j.production) for j in js],
        "violates_local_inequality": any(j.production > 0 for j in js),
    }


def dissipation_threshold(tol=1e-12):
    """Largest ``alpha`` with ``-d/dt int u_alpha^2 >= 0``, by bisection."""
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if -total_rate(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return lo


def dissipation_threshold_scan(step=1e-6):
    """Independent sign scan of ``-d/dt int u_alpha^2`` on a uniform grid."""
    a = np.arange(0.0, 1.0 + step, step)
    rate = 2.0 * a**3 + 2.0 * (1.0 - a**3) / 3.0 - 1.0
    ok = -rate >= 0
    return float(a[ok][-1])


# ---------------------------------------------------------------- weak form


@lru_cache(maxsize=None)
def _gauss(n):
    return np.polynomial.legendre.leggauss(n)


def _panel_nodes(edges, n):
    x, w = _gauss(n)
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), weights.ravel()


@dataclass(frozen=True)
class TestFunction:
    """Smooth compactly supported ``psi(t, x) = b_t(t) b_x(x) cos(k x + p)``.

    The bumps are normalized to peak value 1.
    """

    t0: float
    rt: float
    x0: float
    rx: float
    k: float = 0.0
    phase: float = 0.0

    @staticmethod
    def _bump(s):
        s = np.asarray(s, dtype=float)
        inside = np.abs(s) < 1
        out = np.zeros_like(s)
        si = s[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - si * si))
        return out

    @staticmethod
    def _dbump(s):
        s = np.asarray(s, dtype=float)
        inside = np.abs(s) < 1
        out = np.zeros_like(s)
        si = s[inside]
        q = 1.0 - si * si
        out[inside] = np.exp(1.0 - 1.0 / q) * (-2.0 * si / (q * q))
        return out

    def support_t(self):
        return self.t0 - self.rt, self.t0 + self.rt

    def support_x(self):
        return self.x0 - self.rx, self.x0 + self.rx

    def derivatives(self, t, x):
        """Return ``(psi_t, psi_x)`` on broadcast arrays."""
        st = (t - self.t0) / self.rt
        sx = (x - self.x0) / self.rx
        bt, dbt = self._bump(st), self._dbump(st) / self.rt
        bx, dbx = self._bump(sx), self._dbump(sx) / self.rx
        c = np.cos(self.k * x + self.phase)
        dc = -self.k * np.sin(self.k * x + self.phase)
        return dbt * bx * c, bt * (dbx * c + bx * dc)


def default_battery(n=20, seed=1234):
    """Deterministic battery of test functions, many straddling discontinuities."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        t0 = rng.uniform(0.4, 1.6)
        rt = rng.uniform(0.1, min(t0 - 0.05, T_MAX - t0 - 0.05, 0.6))
        kind = i % 4
        if kind == 0:
            x0 = rng.uniform(-0.3, 0.3)  # straddles the stationary jump
        elif kind == 1:
            x0 = 1.0 + 0.5 * t0 + rng.uniform(-0.2, 0.2)  # right shock
        elif kind == 2:
            x0 = -(1.0 + 0.5 * t0) + rng.uniform(-0.2, 0.2)  # left shock
        else:
            x0 = rng.uniform(-1.5, 1.5)
        rx = rng.uniform(0.3, 1.0)
        out.append(TestFunction(t0, rt, x0, rx, rng.uniform(0, 6), rng.uniform(0, 2 * math.pi)))
    return out


def weak_residual_one(alpha, psi: TestFunction, plateau=1.0, n_t=24, n_x=24, t_panels=16):
    """``int int u psi_t + (u^2/2) psi_x dx dt`` with discontinuity-fitted panels."""
    ta, tb = psi.support_t()
    tn, tw = _panel_nodes(np.linspace(ta, tb, t_panels + 1), n_t)
    xa, xb = psi.support_x()
    total = 0.0
    for t, wt in zip(tn, tw):
        cuts = [p for p in breakpoints(alpha, t) if xa < p < xb]
        # sub-split each smooth piece so the bump tails are well resolved
        edges = np.unique(np.concatenate([[xa, xb], cuts]))
        fine = np.concatenate(
            [np.linspace(a, b, 5)[:-1] for a, b in zip(edges[:-1], edges[1:])] + [[xb]]
        )
        xn, xw = _panel_nodes(fine, n_x)
        u = evaluate(alpha, t, xn, plateau=plateau)
        pt, px = psi.derivatives(t, xn)
        total += wt * np.sum(xw * (u * pt + 0.5 * u * u * px))
    return total


def weak_residual(alpha, battery=None, plateau=1.0) -> float:
    """Largest absolute weak-form residual over a test-function battery."""
    battery = default_battery() if battery is None else battery
    return max(abs(weak_residual_one(alpha, psi, plateau)) for psi in battery)


def write_table(path, alphas, t=1.0):
    """CSV rows ``alpha, total_rate, production per jump``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "total_rate", "minus_total_rate", "left_shock", "center", "right_shock"])
        for a in alphas:
            acc = energy_accounting(a, t)
            prods = dict((round(p, 12), v) for p, v in acc["productions"])
            w.writerow(
                [
                    f"{a:.17g}",
                    f"{acc['total_rate']:.17g}",
                    f"{-acc['total_rate']:.17g}",
                    f"{prods[round(-(1 + t / 2), 12)]:.17g}",
                    f"{prods.get(0.0, 0.0):.17g}",
                    f"{prods[round(1 + t / 2, 12)]:.17g}",
                ]
            )
