import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact import fields as F
from artifact import transport as T
from artifact import waves as W
from artifact.errors import NegativeDiscriminant


def lstsq_oracle(basis, target_full, m):
    """Independent route: least squares on all nine tensor entries for ``g_f = gamma_f^2``."""
    A = np.stack([(2 * m * np.outer(f, f)).ravel() for f in basis], axis=1)
    g, *_ = np.linalg.lstsq(A, target_full.ravel(), rcond=None)
    return np.sqrt(g), float(np.abs(A @ g - target_full.ravel()).max())


def k1_sym(a, b, c):
    """Sym-storage tensor with entries (22, 33, 23) = (a, b, c)."""
    e = np.zeros((6, 1))
    e[1, 0], e[2, 0], e[5, 0] = a, b, c
    return e


def reconstruct(basis, gam, m):
    return sum(2 * m * g**2 * np.outer(f, f) for g, f in zip(gam, basis))


def test_bases_span_the_kernel_square():
    for basis in (W.DIAMOND_B_R, W.OVERLINE_B_R_STAR, W.OVERLINE_B_R_PLAIN):
        assert W.spans_kernel_square(basis)
    assert W.spans_kernel_square(W.STAR_B_R, axis=1)


def test_exact_coefficients_at_zero_perturbation():
    g, rep = W.solve_diamond_stress_coefficients(k1_sym(0, 0, 0), multiplicity=1)
    assert np.allclose(g, 1 / math.sqrt(3), atol=1e-12, rtol=0)
    assert rep["in_bounds"]
    g, rep = W.solve_overline_stress_coefficients(k1_sym(0, 0, 0), multiplicity=2, convention="star")
    assert np.allclose(g, 0.5, atol=1e-12, rtol=0)
    g, _ = W.solve_overline_stress_coefficients(k1_sym(0, 0, 0), multiplicity=1, convention="plain")
    assert np.allclose(g, 1 / math.sqrt(2), atol=1e-12, rtol=0)


@settings(max_examples=60, deadline=None)
@given(st.tuples(*[st.floats(-0.05, 0.05)] * 3), st.sampled_from([1, 2]), st.sampled_from(["diamond", "star", "plain"]))
def test_solvers_match_least_squares_oracle(eps, m, kind):
    e = k1_sym(*eps)
    if kind == "diamond":
        g, _ = W.solve_diamond_stress_coefficients(e, m)
        basis, target = W.DIAMOND_B_R, 2 / 3 * W.DELTA_1
    else:
        g, _ = W.solve_overline_stress_coefficients(e, m, kind)
        basis, target = W.overline_basis(kind), W.overline_target(kind)
    full = target + F.sym_matrix(e[:, 0])
    oracle, res = lstsq_oracle(basis, full, m)
    assert res < 1e-14
    assert np.allclose(g[:, 0], oracle, atol=1e-12, rtol=0)
    assert np.abs(reconstruct(basis, g[:, 0], m) - full).max() <= 1e-12


def test_solver_rejects_off_kernel_and_negative():
    bad = np.zeros((6, 1))
    bad[0] = 0.1
    with pytest.raises(ValueError):
        W.solve_diamond_stress_coefficients(bad)
    with pytest.raises(NegativeDiscriminant):
        W.solve_diamond_stress_coefficients(k1_sym(-2.0, 0, 0))


@pytest.mark.parametrize("tier", W.TIERS)
def test_cascade_sum_cancels_current(tier):
    phi = np.array([0.0, 0.3, -0.7])
    e = np.array(2.0)
    g = W.solve_current_coefficients(phi, e, tier, K0=100.0, delta_bar=0.01)
    assert np.allclose(W.trilinear_sum(g, tier), -(e**-1.5) * phi, atol=1e-15)
    assert len(W.cascade_trios(tier)) == 24


def test_table_constraints_hold():
    for tb in (W.full_table(), W.desk_table()):
        rep = W.verify_table(tb)
        assert rep == {"conjugation": [], "cascade": [], "pairs": [], "triples": [], "injective": True}
    # designed cascade triples really sum to zero
    d = W.full_table().as_dict()
    for p, tier, b, s in itertools.product((0, 1), W.TIERS, range(2), (1, -1)):
        q = d[(p, ("phi", tier, b, s, "passive"))]
        assert 2 * q + d[(p, ("phi", tier, b, s, "active"))] == 0


def test_verify_table_catches_violations():
    bad = W.assign_frequencies(False, 8, 0, values=((1, 2, 20, 40, 60, 80, 100, 120, 140, 160, 180, 200), ()))
    assert W.verify_table(bad)["pairs"]


@pytest.mark.parametrize("shape", [(2, 1, 3, 2), (3, 1, 4, 2)])
def test_constraint_solver_agrees_with_enumeration(shape):
    pytest.importorskip("ortools")
    assert W.search_table(*shape, n_max=60, time_limit=30) == W.search_table_exhaustive(*shape, n_max=60)


def test_time_cutoffs_partition_unity():
    t = np.linspace(-3, 3, 2001)
    total = sum(W.eta_bar(t - k) ** 6 for k in range(-5, 6))
    assert np.allclose(total, 1.0, atol=1e-13)
    assert np.all(W.eta_bar(np.array([1.0, -1.0, 1.5])) == 0.0)
    cut = W.time_cutoffs(0.5)
    assert cut(0.25, 0, "R") == pytest.approx(float(W.eta_bar(0.5)) ** 3)
    assert cut(0.25, 0, "phi") == pytest.approx(float(W.eta_bar(0.5)) ** 2)
    assert W.active_slots(1.0, 0.5) == [2]
    assert W.active_slots(1.1, 0.5) == [2, 3]


def test_energy_increment_profile():
    e = W.energy_increment(0.5, 2.0, 10.0, 0.4)
    assert e(1.0) == pytest.approx(20.0)
    assert e(e.drop_end + 1e-9) == 0.0
    t = np.linspace(0, 3, 3001)
    assert np.all(np.diff(e(t)) <= 0)


def static_phase(n):
    times = np.linspace(0.0, 1.0, 3)
    cf = T.CoarseFlow.from_fields(times, [np.zeros((3, n, n, n))] * 3, 1)
    return T.transport_phase(cf, 0.0, 0.0, F.Grid3(n))


def test_wave_on_undistorted_phase_is_a_plane_wave():
    n, lam = 32, 2 * np.pi
    ph = static_phase(n)
    idx = W.WaveIndex(0, "R", "diamond", 2, 1, None, 5)
    w = W.build_wave(idx, ph, 0.7, lam)
    f = idx.direction()
    plane = 0.7 * np.multiply.outer(f, np.exp(2j * np.pi * 5 * ph.x1))
    assert np.allclose(w.V, plane, atol=1e-13)
    assert np.abs(F.divergence(w.V)).max() < 1e-10
    assert w.norms["c0_dv"] < 1e-13 and w.norms["orthogonality"] == 0.0
    assert W.build_wave(idx, ph, 0.7, lam, norms=False).norms == {}


def test_pressure_direction_term_vanishes_for_stress_waves():
    for basis in (W.DIAMOND_B_R, W.OVERLINE_B_R_STAR, W.OVERLINE_B_R_PLAIN):
        for f in basis:
            assert W.pressure_direction_term(17, f) == 0.0
