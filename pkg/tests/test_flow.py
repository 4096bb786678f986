from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact import fields as F
from artifact import flow as FL

from conftest import random_field

N = 16


def levels():
    return FL.FrequencyEnergyLevels(4.0, 2.0, 1.0, 0.5, 0.1)


def test_levels_validation_and_derived_quantities():
    lv = levels()
    assert lv.e_phi_under == pytest.approx(1.0 ** (1 / 3) * 0.5 ** (2 / 3))
    assert lv.tau == pytest.approx(1 / (4 * np.sqrt(2)))
    for bad in [(1.0, 2, 1, 0.5, 0.1), (4.0, 1, 2, 0.5, 0.1), (4.0, 2, 1, 0.5, 0.5)]:
        with pytest.raises(ValueError):
            FL.FrequencyEnergyLevels(*bad)
    nxt = lv.next(3.0, 500.0)
    assert (nxt.Xi, nxt.e_v, nxt.e_R) == pytest.approx((6000.0, 3.0, 0.3))
    assert nxt.stage == (2, 3)
    assert nxt.e_G == pytest.approx(np.sqrt(np.sqrt(2.0) / 500.0))
    with pytest.raises(ValueError):
        lv.next(3.0, 5.0)
    assert lv.admissible_N() >= 1.0


def test_frame_shift():
    assert [FL.frame_shift(l) for l in (1, 2, 3)] == [0, 1, 2]
    with pytest.raises(ValueError):
        FL.frame_shift(4)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]))
def test_frame_permutation_commutes_with_derivatives(seed, s):
    f = random_field(np.random.default_rng(seed), (), 8, kmax=2)
    g = F.gradient(f)
    assert np.allclose(FL.permute_array(g, "vector", s), F.gradient(FL.permute_array(f, "scalar", s)), atol=1e-12)
    S = F.sym_grad(g)
    assert np.allclose(FL.permute_array(S, "sym", s), F.sym_grad(F.gradient(FL.permute_array(f, "scalar", s))), atol=1e-11)
    for kind, a in (("scalar", f), ("vector", g), ("sym", S)):
        back = FL.permute_array(FL.permute_array(a, kind, s), kind, s, inverse=True)
        assert np.array_equal(back, a)


def test_permute_matrix_and_kernel_defect():
    M = FL.permute_matrix(FL.DELTA_1, 1)
    assert np.array_equal(np.diag(M), [0.5, 0.0, 1.0])
    R = F.const_sym(FL.DELTA_1).reshape(6, 1, 1, 1)
    assert FL.kernel_projection_defect(R, 1) == 0.0
    assert FL.kernel_projection_defect(R, 2) == 1.0


def test_sample_roundtrip_and_digest():
    rng = np.random.default_rng(1)
    s = FL.FlowSample.zeros(0.5)
    s = replace(s, v=rng.standard_normal((3, 8, 8, 8)), mu=rng.random((8, 8, 8)))
    arr = s.stacked(8)
    assert arr.shape == (30, 8, 8, 8)
    back = FL.FlowSample.from_stacked(0.5, arr)
    assert back.digest(8) == s.digest(8)
    assert replace(s, t=0.6).digest(8) != s.digest(8)


def test_shear_is_an_exact_solution():
    flow = FL.stationary_shear(N, np.linspace(0, 1, 5))
    tab = FL.check_flow(flow)
    assert tab.passed
    assert tab.rows["euler_reynolds_rel"]["value"] == 0.0
    assert tab.rows["divergence_rel"]["value"] == 0.0


def synthetic_flow(seed=0, nt=4):
    """Time-dependent divergence-free flow closed by a stress from the symmetric inverse divergence."""
    rng = np.random.default_rng(seed)
    a, b = random_field(rng, (3,), N, 2), random_field(rng, (3,), N, 2)
    p = random_field(rng, (), N, 2)
    times = np.linspace(0, 0.3, nt)
    vs = [F.leray_project(a + t * b) for t in times]
    dt = times[1] - times[0]
    samples = []
    for i, t in enumerate(times):
        prev = vs[i - 1] if i else None
        nxt = vs[i + 1] if i == 0 else None
        dv = FL.ddt(prev, vs[i], nxt, dt)
        rhs = dv + F.div_sym(F.m_outer_sym(vs[i], vs[i])) + F.gradient(p)
        R, defect = F.inverse_divergence_sym_full(rhs)
        assert defect < 1e-12
        samples.append(replace(FL.FlowSample.zeros(t), v=vs[i], p=p, R_G=R))
    flow = FL.DissipativeEulerReynoldsFlow(N, times, samples)
    out = []
    for i in range(nt):
        prev, nxt = FL._neighbors(flow, i)
        mu = FL.dissipation_from_identity(prev, flow[i], nxt, dt, N)
        out.append(replace(flow[i], mu=mu))
    return FL.DissipativeEulerReynoldsFlow(N, times, out)


def test_checker_on_synthetic_flow():
    flow = synthetic_flow()
    tab = FL.check_flow(flow)
    assert tab.rows["divergence_rel"]["pass"]
    assert tab.rows["euler_reynolds_rel"]["value"] < 1e-12
    assert tab.rows["energy_identity_rel"]["value"] < 1e-12
    # the constructed mu need not be a nonnegative measure
    assert tab.rows["mu_min"]["pass"] == (min(float(np.min(s.mu)) for s in flow) >= -1e-10)


def test_checker_detects_defects():
    flow = FL.stationary_shear(N, np.linspace(0, 1, 3))
    x = F.Grid3(N).x
    bad_v = [replace(s, v=np.asarray(s.v) + 0.01 * s.t * np.stack([np.sin(2 * np.pi * x[2]), 0 * x[0], 0 * x[0]])) for s in flow]
    tab = FL.check_flow(FL.DissipativeEulerReynoldsFlow(N, flow.times, bad_v))
    assert not tab.rows["euler_reynolds_rel"]["pass"]
    bad_mu = [replace(s, mu=FL.const_field(-1.0)) for s in flow]
    tab = FL.check_flow(FL.DissipativeEulerReynoldsFlow(N, flow.times, bad_mu))
    assert not tab.rows["mu_min"]["pass"] and not tab.rows["energy_identity_rel"]["pass"]
    off = [replace(s, R_l=F.const_sym(np.eye(3)).reshape(6, 1, 1, 1)) for s in flow]
    tab = FL.check_flow(FL.DissipativeEulerReynoldsFlow(N, flow.times, off))
    assert not tab.rows["subspace_defect"]["pass"]


def test_streaming_checker_matches_batch():
    flow = synthetic_flow(3, nt=5)
    ch = FL.FlowChecker(N, flow.dt)
    for s in flow:
        ch.push(s)
    ch.finish()
    assert ch.table().as_dict() == FL.check_flow(flow).as_dict()
    assert ch.count == 5


def test_well_preparedness_table():
    lv = levels()
    eb = lambda t: 0.5 if t <= 1.0 else 0.0  # noqa: E731
    wp = FL.WellPreparedness(eb, 1.0, (0.0, 0.5), (0.0, 1.0), 0.01, 1.0, "plain")
    D = F.const_sym(wp.principal(1)).reshape(6, 1, 1, 1)
    times = np.linspace(0, 2, 9)
    good = [replace(FL.FlowSample.zeros(t), R_l=-eb(t) * D) for t in times]
    flow = FL.DissipativeEulerReynoldsFlow(8, times, good)
    assert FL.check_well_prepared(flow, lv, wp).passed
    bad = [replace(s, R_l=np.asarray(s.R_l) + 0.1 * D) for s in good]
    tab = FL.check_well_prepared(FL.DissipativeEulerReynoldsFlow(8, times, bad), lv, wp)
    assert not tab.rows["smallness"]["pass"] and not tab.rows["remainder_support"]["pass"]
    from artifact.errors import WellPreparednessError

    with pytest.raises(WellPreparednessError):
        FL.check_well_prepared(FL.DissipativeEulerReynoldsFlow(8, times, bad), lv, wp, raise_on_fail=True)
