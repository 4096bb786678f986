"""Ready-made stage inputs built on a stationary shear flow.

The shear ``v = A sin(2 pi x^2) e_1`` with zero pressure is an exact Euler
solution.  :func:`desk_scenario` prepares it for stage 1 with boosted levels,
puts the samples on a grid aligned with the end of the energy increment and
returns everything :func:`~artifact.stage.perform_stage` needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .flow import DissipativeEulerReynoldsFlow, FrequencyEnergyLevels, WellPreparedness, stationary_shear
from .stage import StageConfig, aligned_times, branch_wave, dissipation_increment, perform_stage, prepare_initial, prepared_levels


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs of the shear scenario.

    Attributes:
        n: grid points per axis.
        amplitude: shear amplitude ``A``.
        Xi0, E0: plain levels of the base flow.
        Z: preparation boost.
        N: frequency growth factor of the stage.
        sup_I0: end of the window where all family members agree.
        sup_I1: end of the window carrying the seeded stress.
        t_end: last time sample.
        per_lifespan: time samples per wave lifespan.
    """

    n: int = 64
    amplitude: float = 0.1
    Xi0: float = 2.0
    E0: float = 1.0
    Z: float = 1.1
    N: float = 2.0
    sup_I0: float = 1.5
    sup_I1: float = 2.0
    t_end: float = 4.0
    per_lifespan: int = 4


@dataclass
class Scenario:
    """Prepared input of one stage."""

    flow: DissipativeEulerReynoldsFlow
    levels: FrequencyEnergyLevels
    wp: WellPreparedness
    cfg: StageConfig
    e_Z: object
    config: ScenarioConfig
    base: DissipativeEulerReynoldsFlow

    @property
    def tau0(self):
        return 1.0 / (self.config.Xi0 * math.sqrt(self.config.E0))

    def branch_interval(self):
        """Interval ``J`` around ``sup_I0 + tau0/2`` of radius ``tau`` where branching may act."""
        t_star = self.config.sup_I0 + 0.5 * self.tau0
        return (t_star - self.levels.tau, t_star + self.levels.tau)


def desk_scenario(sc: ScenarioConfig = ScenarioConfig(), **stage_kw) -> Scenario:
    """Prepared shear flow on an aligned time grid, with its stage configuration.

    Args:
        sc: scenario knobs.
        **stage_kw: extra :class:`~artifact.stage.StageConfig` fields.
    """
    cfg = StageConfig(N=sc.N, Z=sc.Z, n=sc.n, **stage_kw)
    levels = prepared_levels(sc.Xi0, sc.E0, sc.Z)
    prm = cfg.derive(levels)
    tau0 = 1.0 / (sc.Xi0 * math.sqrt(sc.E0))
    sup_I_G = sc.sup_I1 + tau0
    times = aligned_times(0.0, sup_I_G, levels.tau, prm.tau_hat, sc.t_end, sc.per_lifespan)
    base = stationary_shear(sc.n, times, sc.amplitude)
    flow, levels, wp, eZ = prepare_initial(base, sc.Xi0, sc.E0, sc.Z, sc.sup_I0, sc.sup_I1, cfg.delta_bar)
    return Scenario(flow, levels, wp, cfg, eZ, sc, base)


def perturbed_after(flow: DissipativeEulerReynoldsFlow, T, q=0.25):
    """Copy of ``flow`` with ``p + q`` and ``R_G + q I`` at samples with ``t > T``.

    Both changes cancel in the momentum equation, so the result is again a
    dissipative Euler-Reynolds flow that differs from ``flow`` only after ``T``.
    """
    ident = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]).reshape(6, 1, 1, 1)
    out = []
    for s in flow:
        if s.t > T:
            s = replace(s, p=np.asarray(s.p) + q, R_G=np.asarray(s.R_G) + q * ident)
        out.append(s)
    return DissipativeEulerReynoldsFlow(flow.n, flow.times, out, flow.stage)


def wild_data(sc: ScenarioConfig, E0_values=(4.0, 1.0), **stage_kw):
    """Initial data of depth-1 families built on the shear, over a sweep of ``E0``.

    For each ``E0`` both family members are computed at the first sample only;
    the report gives the ``C^0`` gap between their common initial velocity and
    the base shear, whether the members agree bitwise there, and the squared-gap
    ratios between consecutive ``E0`` values.  A second scenario, whose seeded
    stress window covers the whole run, compares the output dissipation measure
    with that of the base flow at every sample.
    """
    rows = []
    for E0 in E0_values:
        s = desk_scenario(replace(sc, E0=float(E0)), **stage_kw)
        prm = s.cfg.derive(s.levels)
        I_star = branch_wave(s.cfg.table(), s.branch_interval(), prm.tau_hat)
        t0 = float(s.flow.times[0])
        a = perform_stage(s.flow, s.levels, s.wp, s.cfg, t_max=t0, store="velocity")
        b = perform_stage(s.flow, s.levels, s.wp, s.cfg, t_max=t0, store="velocity", branch=I_star)
        base_v = np.asarray(s.base[0].v)
        gap = float(np.abs(a.velocities[0] - base_v).max())
        rows.append(
            {
                "E0": float(E0),
                "gap_c0": gap,
                "C_bar": gap / math.sqrt(E0),
                "members_equal_at_t0": a.digests[0] == b.digests[0],
            }
        )
    ratios = []
    for r0, r1 in zip(rows, rows[1:]):
        ratios.append({"E0_ratio": r1["E0"] / r0["E0"], "gap_sq_ratio": (r1["gap_c0"] / r0["gap_c0"]) ** 2})
    # local energy equality: e_Z and e are constant on the grid
    eq = desk_scenario(replace(sc, sup_I1=sc.t_end + 1.0), **stage_kw)
    times = np.asarray(eq.flow.times)
    inc = dissipation_increment(eq.levels, eq.wp, eq.cfg.K0, times)
    mu_diff = max(float(np.abs(np.asarray(s.mu) - inc[i] - np.asarray(base.mu)).max()) for i, (s, base) in enumerate(zip(eq.flow, eq.base)))
    return {"sweep": rows, "ratios": ratios, "energy_equality_mu_diff": mu_diff, "energy_equality_samples": len(times)}
