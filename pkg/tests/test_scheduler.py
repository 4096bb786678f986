import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact import scheduler as S
from artifact.errors import DomainError

finite = st.floats(-50, 50, allow_nan=False)


def test_exact_and_float_recursions_agree():
    L = [Fraction(3), Fraction(-1, 2), Fraction(5, 3), Fraction(2), Fraction(1, 7), Fraction(4)]
    Lc = Fraction(1, 3)
    exact = S.advance_exact(L, Lc)
    fl = S.advance(S.ParameterLedger(np.array([float(x) for x in L]), float(Lc)))
    assert np.allclose(fl.L, [float(x) for x in exact], atol=1e-14)
    assert fl.k == 1
    assert S.conservation_residual(L, exact, Lc) == 0


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=6, max_size=6), st.floats(0, 5))
def test_conservation_identity_holds_for_every_step(L, Lc):
    after = S.advance(S.ParameterLedger(np.array(L), Lc)).L
    scale = 1 + max(abs(x) for x in L) + Lc
    assert abs(S.conservation_residual(L, after, Lc)) <= 1e-12 * 40 * scale


def test_reduced_map_matches_full_map():
    led = S.ParameterLedger.sector_start(7.0, (0.1, -0.2, 0.05), L_G=-3.0, L_Xi=2.0, L_c=1.0)
    nxt = S.advance(led)
    assert np.allclose(S.advance_reduced(led.reduced, 1.0), nxt.reduced, atol=1e-14)


def test_eigenstructure_of_reduced_matrix():
    assert np.allclose(S.REDUCED @ S.ZETA, S.ZETA, atol=1e-15)
    ev = np.sort(np.linalg.eigvals(S.REDUCED).real)
    assert np.allclose(ev, [0, 0, 1 / 3, 1], atol=1e-12)


def test_ledger_levels_roundtrip():
    led = S.ParameterLedger(np.array([1.0, -2.0, 0.5, 0.25, 0.75, 3.0]), 0.0)
    Xi, e_v, e_phi, e_R, e_G = led.levels()
    assert math.log(e_G) == pytest.approx(-2.0)
    e_u = e_phi ** (1 / 3) * e_R ** (2 / 3)
    assert math.log(e_u / e_G) == pytest.approx(0.5)
    assert math.log(e_phi / e_u) == pytest.approx(0.25)
    assert math.log(e_v / e_phi) == pytest.approx(0.75)
    assert Xi == pytest.approx(math.exp(3.0))


def test_holder_exponent_two_routes():
    for z in (10.0, 40.0, 160.0):
        Z = math.exp(z)
        assert S.holder_exponent(Z, 1.0) == pytest.approx(S.holder_exponent_closed_form(Z, 1.0), abs=2e-6)
    with pytest.raises(DomainError):
        S.holder_exponent(1.0, 1.0)
    # without the constant the exponent is exactly 1/15
    assert S.holder_exponent_closed_form(math.e, 0.0) == pytest.approx(1 / 15)


def test_extrapolation_is_exact_for_polynomials():
    Zs = [math.exp(x) for x in (1.0, 2.0, 4.0, 8.0)]
    xs = [1.0 / math.log(z) for z in Zs]
    ys = [0.3 + 2 * x - x**3 for x in xs]
    assert S.extrapolate_holder(Zs, ys, 1.0) == pytest.approx(0.3, abs=1e-12)


def test_sector_search_and_invariance():
    rep = S.search_sector(math.exp(10.0), 1.0, samples=500, steps=30)
    assert rep is not None and 0 < rep.r0 < 0.5
    assert S.sector_violations(rep.r0, math.log(rep.Z_low), 1.0, 500, 100, 3) == 0
    # a radius with inadmissible corners is skipped
    assert S.search_sector(math.exp(10.0), 1.0, samples=50, steps=5, grid=[2.0, 0.3]).r0 == 0.3


def test_decay_laws_along_sector_trajectory():
    traj = S.trajectory(S.ParameterLedger.sector_start(10.0, L_c=1.0), 100)
    d = S.decay_laws(traj, 1.0)
    assert d["amplitude_ok"] and d["timescale_ok"]
    assert d["max_phi_law_error"] < 1e-9 and d["max_timescale_law_error"] < 1e-9


@pytest.mark.parametrize("depth", [2, 3, 4, 5, 6])
def test_cover_minimum_matches_enumeration(depth):
    best, count = S.min_cylinder_cover(depth)
    covers = list(S.enumerate_cylinder_covers(depth))
    assert count == len(covers) + 2
    assert best == min(sum(Fraction(1, 2**k) for k in c) for c in covers)
    assert best == Fraction(1, 4)


def test_hausdorff_formula():
    assert S.hausdorff_lower_bound(math.exp(3.0)) == pytest.approx(4 * math.log(2) / 9)
    with pytest.raises(DomainError):
        S.hausdorff_lower_bound(1.0)
    total, floor = S.ball_cover_sum(np.arange(0, 5), math.exp(4.0), 1.0, 1.0)
    assert total >= floor


def test_trajectory_csv(tmp_path):
    traj = S.trajectory(S.ParameterLedger.sector_start(5.0, L_c=1.0), 3)
    S.write_trajectory_csv(tmp_path / "t.csv", traj)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert len(lines) == 5
