"""Acceptance suite.

Each test carries a ``criterion`` marker; the terminal summary prints one
pass/fail line per criterion with the measured numbers attached through
``detail`` properties.  Expected failures are listed on the criterion's line.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from artifact import burgers as B
from artifact import fields as F
from artifact import scheduler as S
from artifact import waves as W
from artifact.family import run_field_family, separation_check
from artifact.scenarios import desk_scenario, perturbed_after
from artifact.stage import perform_stage

Z_SWEEP = [math.exp(x) for x in (10.0, 20.0, 40.0, 80.0, 160.0)]
L_C = 1.0


@pytest.fixture
def detail(request):
    def add(text):
        request.node.user_properties.append(("detail", text))

    return add


@pytest.fixture(scope="session")
def desk_stage():
    sc = desk_scenario()
    t = time.perf_counter()
    res = perform_stage(sc.flow, sc.levels, sc.wp, sc.cfg, store="velocity")
    return sc, res, time.perf_counter() - t


# ---------------------------------------------------------------- 1-4: parameter ledger


@pytest.mark.criterion(1)
def test_holder_exponent_sweep(detail):
    t = time.perf_counter()
    alphas = [S.holder_exponent(Z, L_C) for Z in Z_SWEEP]
    limit = S.extrapolate_holder(Z_SWEEP, alphas, L_C)
    elapsed = time.perf_counter() - t
    detail(f"alpha* {alphas[0]:.6f}..{alphas[-1]:.6f}, limit {limit:.7f}, {elapsed:.2f}s")
    assert all(a < 1 / 15 for a in alphas)
    assert all(b >= a for a, b in zip(alphas, alphas[1:]))
    assert abs(limit - 1 / 15) <= 1e-3
    # independent route: fixed-point formula
    for Z, a in zip(Z_SWEEP, alphas):
        assert a == pytest.approx(S.holder_exponent_closed_form(Z, L_C), abs=2e-6)
    assert elapsed < 10


@pytest.mark.criterion(2)
def test_conservation_identity(detail):
    rng = np.random.default_rng(2)
    t = time.perf_counter()
    L = rng.uniform(-10, 10, (10_000, 6))
    Lc = rng.uniform(0, 2, 10_000)
    after = L + S.step_difference(L, Lc)
    res = np.abs(S.conservation_residual(L, after, Lc))
    elapsed = time.perf_counter() - t
    detail(f"max residual {res.max():.2e} over 1e4 steps, {elapsed:.3f}s")
    assert res.max() <= 1e-12
    # exact rational arithmetic gives exactly zero
    Lq = [Fraction(int(x * 1000), 1000) for x in L[0]]
    assert S.conservation_residual(Lq, S.advance_exact(Lq, Fraction(1, 3)), Fraction(1, 3)) == 0
    assert elapsed < 1


@pytest.mark.criterion(3)
def test_sector_invariance(detail):
    t = time.perf_counter()
    rep = S.search_sector(math.exp(10.0), L_C)
    bad = S.sector_violations(rep.r0, math.log(rep.Z_low), L_C, 10_000, 500, np.random.default_rng(3))
    elapsed = time.perf_counter() - t
    detail(f"r0 {rep.r0:.2f}, Z_low {rep.Z_low:.4g}, violations {bad}, {elapsed:.2f}s")
    assert bad == 0
    assert elapsed < 30


@pytest.mark.criterion(4)
def test_reduced_matrix_eigenstructure(detail):
    fixed = S.REDUCED @ S.ZETA
    ev = np.sort(np.linalg.eigvals(S.REDUCED).real)
    detail(f"eigenvalues {np.round(ev, 15).tolist()}")
    assert np.abs(fixed - S.ZETA).max() <= 1e-12
    assert np.abs(ev - np.array([0.0, 0.0, 1 / 3, 1.0])).max() <= 1e-12


# ---------------------------------------------------------------- 5-6: full stage


def _row(res, name):
    return res.checks.rows[name]


@pytest.mark.criterion(5)
def test_full_stage_identities(desk_stage, detail):
    sc, res, elapsed = desk_stage
    assert sc.config.n == 64 and res.params.lam <= 40
    names = ("divergence_rel", "euler_reynolds_rel", "energy_identity_rel", "mu_min", "mu_increment_min", "mu_increment_on_I_G")
    detail(", ".join(f"{k} {_row(res, k)['value']:.1e}" for k in names) + f", {elapsed:.0f}s")
    for k in names:
        assert _row(res, k)["pass"], (k, _row(res, k))
    assert _row(res, "divergence_rel")["threshold"] == 1e-10
    assert _row(res, "euler_reynolds_rel")["threshold"] == 1e-6
    assert _row(res, "mu_min")["threshold"] == -1e-10
    assert elapsed < 300


@pytest.mark.criterion(5)
def test_full_stage_all_checks(desk_stage, detail):
    sc, res, _ = desk_stage
    failed = [k for k, r in res.checks.rows.items() if not r["pass"]]
    detail(f"{len(res.checks.rows)} stage rows, c_hat {res.diagnostics['c_hat']:.4g}, C_L {res.diagnostics['C_L']:.4g}")
    assert not failed
    assert not res.diagnostics["partial"]


@pytest.mark.criterion(6)
def test_cancellations(desk_stage, detail):
    _, res, _ = desk_stage
    names = ("trio_phase", "pressure_direction", "phi2_ker_dx2_rel")
    detail(", ".join(f"{k} {_row(res, k)['value']:.1e}" for k in names))
    assert _row(res, "trio_phase")["value"] <= 1e-8
    assert _row(res, "pressure_direction")["value"] == 0.0
    assert _row(res, "phi2_ker_dx2_rel")["value"] <= 1e-12
    # coefficient-level cancellation of the trilinear cascade sum
    phi = np.array([0.0, 0.4, -0.2])
    for tier in W.TIERS:
        g = W.solve_current_coefficients(phi, np.array(1.5), tier, K0=100.0, delta_bar=0.01)
        assert np.abs(W.trilinear_sum(g, tier) + 1.5**-1.5 * phi).max() <= 1e-12


@pytest.mark.xfail(strict=True, reason="at desk scale the closing stress exceeds the next level e_G")
def test_output_stress_below_next_level(desk_stage):
    _, res, _ = desk_stage
    assert res.diagnostics["stress_contraction_ratio"] <= 1.0


# ---------------------------------------------------------------- 7: coefficient solvers


def _k1(a, b, c):
    e = np.zeros((6, 1))
    e[1, 0], e[2, 0], e[5, 0] = a, b, c
    return e


def _oracle(basis, full, m):
    A = np.stack([(2 * m * np.outer(f, f)).ravel() for f in basis], axis=1)
    g, *_ = np.linalg.lstsq(A, full.ravel(), rcond=None)
    return np.sqrt(g)


@pytest.mark.criterion(7)
def test_coefficient_solvers(detail):
    t = time.perf_counter()
    gd, _ = W.solve_diamond_stress_coefficients(_k1(0, 0, 0), 1)
    go, _ = W.solve_overline_stress_coefficients(_k1(0, 0, 0), 2, "star")
    assert np.abs(gd - 1 / math.sqrt(3)).max() <= 1e-12
    assert np.abs(go - 0.5).max() <= 1e-12
    rng = np.random.default_rng(7)
    worst_rec = worst_orc = 0.0
    for _ in range(100):
        eps = rng.uniform(-0.05, 0.05, 3)
        e = _k1(*eps)
        E = F.sym_matrix(e[:, 0])
        for basis, target, solve, m in (
            (W.DIAMOND_B_R, 2 / 3 * W.DELTA_1, lambda x: W.solve_diamond_stress_coefficients(x, 1), 1),
            (W.OVERLINE_B_R_STAR, W.DELTA_1STAR, lambda x: W.solve_overline_stress_coefficients(x, 2, "star"), 2),
        ):
            g = solve(e)[0][:, 0]
            rec = sum(2 * m * gi**2 * np.outer(f, f) for gi, f in zip(g, basis))
            worst_rec = max(worst_rec, float(np.abs(rec - target - E).max()))
            worst_orc = max(worst_orc, float(np.abs(g - _oracle(basis, target + E, m)).max()))
    elapsed = time.perf_counter() - t
    detail(f"reconstruction {worst_rec:.1e}, oracle gap {worst_orc:.1e}, {elapsed:.2f}s")
    assert worst_rec <= 1e-12 and worst_orc <= 1e-12
    assert elapsed < 5


# ---------------------------------------------------------------- 8: depth-1 family


@pytest.fixture(scope="session")
def desk_family(desk_stage):
    sc, res, elapsed = desk_stage
    t = time.perf_counter()
    run = run_field_family(sc, 1, default=res)
    return run, separation_check(run), elapsed + time.perf_counter() - t


@pytest.mark.criterion(8)
def test_branch_separation(desk_family, detail):
    run, rep, elapsed = desk_family
    inj = rep["injectivity"]
    detail(
        f"C_L {run.C_L:.4g}, c_hat {run.c_hat:.4g}: bound {inj['bound']:.3g}"
        f"{' (vacuous)' if inj['vacuous'] else ''}, measured {inj['measured_sq']:.4g}; "
        f"L2 distance {run.distance_L2[0, 1]:.4g} vs {rep['pairs'][0]['bound']:.3g}; {elapsed:.0f}s"
    )
    assert run.physical
    assert inj["pass"] and rep["passed"]
    assert run.distance_L2[0, 1] > 0
    assert elapsed < 600


@pytest.mark.criterion(8)
def test_branch_difference_support_and_dissipation(desk_family, detail):
    run, _, _ = desk_family
    ex = run.extras
    detail(f"max diff outside J {ex['max_diff_outside_J']:.1e}, on I0 {ex['max_diff_on_I0']:.1e}, mu bitwise {ex['mu_bitwise_equal']}")
    assert ex["max_diff_outside_J"] == 0.0
    assert ex["max_diff_on_I0"] == 0.0
    assert ex["mu_bitwise_equal"]
    assert all(all(r["pass"] for r in t.values()) for t in ex["checks"].values())


# ---------------------------------------------------------------- 9: Burgers


@pytest.mark.criterion(9)
def test_burgers_exact_values(detail):
    t = time.perf_counter()
    rate = -B.total_rate(0.0)
    thr = B.dissipation_threshold()
    res = {a: B.weak_residual(a) for a in (0.0, 0.2, 0.5, 0.63, 0.8, 1.0)}
    viol = {a: B.energy_accounting(a)["violates_local_inequality"] for a in res}
    elapsed = time.perf_counter() - t
    detail(f"rate {rate:.15f}, threshold {thr:.9f}, max weak residual {max(res.values()):.1e}, {elapsed:.1f}s")
    assert abs(rate - 1 / 3) <= 1e-12
    assert abs(thr - 0.25 ** (1 / 3)) <= 1e-6
    assert abs(B.dissipation_threshold_scan() - 0.25 ** (1 / 3)) <= 1e-6
    assert max(res.values()) <= 1e-8
    assert all(v == (a > 0) for a, v in viol.items())
    assert elapsed < 30


@pytest.mark.criterion(9)
@pytest.mark.xfail(strict=True, reason="the exact rate is 1/3; 2/3 does not hold")
def test_burgers_rate_two_thirds():
    assert abs(-B.total_rate(0.0) - 2 / 3) <= 1e-12


@pytest.mark.criterion(9)
@pytest.mark.xfail(strict=True, reason="the exact threshold is (1/4)^(1/3); (1/6)^(1/3) does not hold")
def test_burgers_threshold_cube_root_sixth():
    assert abs(B.dissipation_threshold() - (1 / 6) ** (1 / 3)) <= 1e-6


# ---------------------------------------------------------------- 10: Hausdorff


@pytest.mark.criterion(10)
def test_hausdorff_formula_and_covers(detail):
    t = time.perf_counter()
    for z in (2.0, 10.0, 80.0):
        assert S.hausdorff_lower_bound(math.exp(z)) == pytest.approx(4 * math.log(2) / (3 * z), rel=1e-15)
    best, count = S.min_cylinder_cover(10)
    # brute-force enumeration agrees with the tree minimum on smaller depths
    for depth in range(2, 7):
        enum = min(sum(Fraction(1, 2**k) for k in c) for c in S.enumerate_cylinder_covers(depth))
        assert enum == S.min_cylinder_cover(depth)[0]
    elapsed = time.perf_counter() - t
    detail(f"depth-10 minimum {best} over {float(count):.3g} covers, {elapsed:.2f}s")
    assert best >= Fraction(1, 4)
    assert elapsed < 30


# ---------------------------------------------------------------- 11: locality, determinism

T_PERTURB = 0.7


@pytest.mark.criterion(11)
def test_locality(desk_stage, detail):
    sc, res, _ = desk_stage
    p = sc.cfg.derive(sc.levels)
    dt = float(sc.flow.times[1] - sc.flow.times[0])
    reach = p.tau_hat + p.eps_t + 3 * dt
    bumped = perturbed_after(sc.flow, T_PERTURB)
    out = perform_stage(bumped, sc.levels, sc.wp, sc.cfg, store="none", t_max=T_PERTURB + 2 * dt)
    times = np.asarray(out.times)
    same = [a == b for a, b in zip(out.digests, res.digests)]
    before = times < T_PERTURB - reach
    after = times > T_PERTURB
    detail(f"{int(before.sum())} samples before {T_PERTURB - reach:.3f} identical, {int(after.sum())} after {T_PERTURB} changed")
    assert all(s for s, b in zip(same, before) if b)
    assert any(after) and not any(s for s, a in zip(same, after) if a)


@pytest.mark.criterion(11)
def test_repeat_runs_are_bitwise_identical(desk_stage, detail):
    sc, res, _ = desk_stage
    again = perform_stage(sc.flow, sc.levels, sc.wp, sc.cfg, store="none", t_max=0.5)
    k = len(again.digests)
    detail(f"{k} samples rerun, digests equal")
    assert again.digests == res.digests[:k]
    assert again.mu_digests == res.mu_digests[:k]
