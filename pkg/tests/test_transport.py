import math

import numpy as np
import pytest

from artifact import fields as F
from artifact import transport as T
from artifact.errors import DriftError, OutOfRangeError


def test_mollifier_spec_validation():
    T.MollifierSpec("space", 0.1, 3)
    with pytest.raises(ValueError):
        T.MollifierSpec("bogus", 0.1)
    with pytest.raises(ValueError):
        T.MollifierSpec("time", 0.0)


def test_velocity_profile_plateau_and_support():
    z = np.array([0.0, 0.5, 1.0, 2.0, 3.0])
    assert np.array_equal(T.velocity_profile(z), [1.0, 1.0, 1.0, 0.0, 0.0])


@pytest.mark.parametrize("L", range(0, 9))
def test_space_symbol_moments_vanish(L):
    assert T.space_moment_defect(L) == 0.0
    q = L // 2 + 1
    # independent route: 1 - symbol behaves like zeta^(2q) near the origin
    d = 1.0 - T.space_profile(np.array([0.2, 0.4]), L)
    assert math.log(d[1] / d[0], 2) == pytest.approx(2 * q, abs=0.3)
    assert np.all(T.space_profile(np.array([2.0, 2.5]), L) == 0.0)
    # series and closed form agree
    u = 0.3**2 / 4
    assert np.polynomial.polynomial.polyval(u, T.space_series(L)) == pytest.approx(float(T.space_profile(0.3, L)), rel=1e-13)


def test_mollifiers_preserve_low_modes():
    x = F.Grid3(16).x
    f = np.sin(2 * np.pi * x[0])
    eps = 0.01  # 2 pi eps |k| < 1 for |k| = 1
    assert np.allclose(T.mollify_velocity(np.stack([f, f, f]), eps)[0], f, atol=1e-14)
    assert np.allclose(T.mollify_space(f, eps, 2), f, atol=1e-4)
    assert T.velocity_band(eps) == math.floor(2 / (2 * np.pi * eps))


@pytest.mark.parametrize("side", [0, 1, -1])
def test_time_kernel_mass_and_support(side):
    eps = 0.3
    s = np.linspace(-eps, eps, 200001)
    k = T.time_kernel(s, eps, side)
    assert np.trapezoid(k, s) == pytest.approx(1.0, rel=1e-6)
    assert np.all(k >= 0)
    if side:
        assert np.all(k[side * s < 0] == 0)
    nodes, w = T.time_quadrature(eps, side)
    assert w.sum() == pytest.approx(1.0)
    assert np.all(np.abs(nodes) <= eps)


def test_lagrange_stencil_is_exact_for_cubics():
    times = np.linspace(0.0, 1.0, 11)
    p = lambda t: 1 - 2 * t + 3 * t**2 - t**3
    for t in (0.0, 0.03, 0.55, 0.97, 1.0):
        idx, w = T.lagrange_stencil(times, t)
        assert np.dot(w, p(times[idx])) == pytest.approx(p(t), abs=1e-14)
    with pytest.raises(OutOfRangeError):
        T.lagrange_stencil(times, 1.2)


def shear_coarse_flow(amp=0.2, n=16, nt=5):
    x = F.Grid3(n).x
    v = np.stack([amp * np.sin(2 * np.pi * x[1]), 0 * x[0], 0 * x[0]])
    times = np.linspace(0.0, 1.0, nt)
    return T.CoarseFlow.from_fields(times, [v] * nt, 2), x


def test_coarse_flow_follows_shear_exactly():
    cf, _ = shear_coarse_flow()
    pts = np.random.default_rng(0).random((50, 3))
    X = cf.flow_map(0.2, pts, 0.5)[1]
    expect = pts.copy()
    expect[:, 0] += 0.5 * 0.2 * np.sin(2 * np.pi * pts[:, 1])
    assert np.allclose(X, expect, atol=1e-12)
    back = cf.integrate(0.7, X, [-0.5])[0]
    assert np.allclose(back, pts, atol=1e-12)
    with pytest.raises(OutOfRangeError):
        cf.integrate(0.5, pts, [0.8])


def test_transported_phase_and_drift():
    cf, x = shear_coarse_flow()
    ph = T.transport_phase(cf, 0.0, 0.5, F.Grid3(16), m=16, drift_tol=1.0)
    assert np.allclose(ph.foot1, -0.5 * 0.2 * np.sin(2 * np.pi * x[1]), atol=1e-12)
    assert ph.drift == pytest.approx(0.5 * 0.2 * 2 * np.pi, rel=1e-10)
    assert T.transport_residual(cf, 0.0, 0.5) < 1e-6
    f = ph.factor(3.0, 2)
    assert ph.factor(3.0, 2) is f
    assert np.allclose(f, np.exp(6j * (x[0] + ph.foot1)))
    with pytest.raises(DriftError):
        T.transport_phase(cf, 0.0, 1.0, F.Grid3(16), drift_tol=0.1)


def test_mollify_along_stationary_flow_is_spatial_identity():
    n, nt = 16, 9
    x = F.Grid3(n).x
    f = np.stack([np.cos(2 * np.pi * x[2])])
    times = np.linspace(0.0, 1.0, nt)
    cf = T.CoarseFlow.from_fields(times, [np.zeros((3, n, n, n))] * nt, 2)
    from artifact.kernels import mode_cube

    cube = mode_cube(f, 2)
    out = T.mollify_along_flow(4, times, lambda j: cube, cf, 0.2, n, m=8)
    assert np.allclose(out, f, atol=1e-12)
    out = T.mollify_along_flow(4, times, lambda j: cube, cf, 0.2, n, m=8, blend=(0.0, 1.0, 0.1))
    assert np.allclose(out, f, atol=1e-12)


def test_commutator_vanishes_for_constant_velocity():
    x = F.Grid3(16).x
    v = np.stack([np.full_like(x[0], 0.3), np.full_like(x[0], -0.1), np.zeros_like(x[0])])
    f = np.sin(2 * np.pi * (x[0] + 2 * x[1]))
    assert np.abs(T.advective_commutator(v, f, 0.05, 0.05, 2)).max() < 1e-13
