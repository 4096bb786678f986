import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact import burgers as B
from artifact.errors import DomainError

alphas = st.floats(0.0, 1.0)
times = st.floats(0.05, 2.0)


def quadrature_energy(alpha, t, n=40):
    edges = np.array(B.breakpoints(alpha, t) + [-(1 + t), 1 + t])
    edges = np.unique(edges)
    x, w = np.polynomial.legendre.leggauss(n)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        xs = 0.5 * (b - a) * x + 0.5 * (a + b)
        total += 0.5 * (b - a) * np.sum(w * B.evaluate(alpha, t, xs) ** 2)
    return total


@settings(max_examples=50, deadline=None)
@given(alphas, times)
def test_energy_closed_form_matches_quadrature(alpha, t):
    assert B.energy(alpha, t) == pytest.approx(quadrature_energy(alpha, t), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(alphas, times)
def test_energy_rate_three_routes(alpha, t):
    acc = B.energy_accounting(alpha, t)
    fd = (B.energy(alpha, min(t + 0.01, 2.0)) - B.energy(alpha, min(t + 0.01, 2.0) - 0.01)) / 0.01
    assert acc["total_rate"] == pytest.approx(acc["total_rate_from_jumps"], abs=1e-12)
    assert acc["total_rate"] == pytest.approx(fd, abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(alphas, times)
def test_jumps_satisfy_rankine_hugoniot(alpha, t):
    for j in B.jumps(alpha, t):
        assert abs(j.rankine_hugoniot_defect) <= 1e-12
        eps = 1e-9
        assert B.evaluate(alpha, t, j.position - eps) == pytest.approx(j.left, abs=1e-6)
        assert B.evaluate(alpha, t, j.position + eps) == pytest.approx(j.right, abs=1e-6)


def test_center_jump_production_and_entropy_violation():
    for a in (0.0, 0.2, 0.7, 1.0):
        js = B.jumps(a)
        outer = [j for j in js if j.position != 0.0]
        assert all(j.production == pytest.approx(-1 / 12, abs=1e-15) for j in outer)
        center = [j for j in js if j.position == 0.0]
        assert bool(center) == (a > 0)
        if center:
            assert center[0].production == pytest.approx(2 * a**3 / 3, abs=1e-15)
        assert B.energy_accounting(a)["violates_local_inequality"] == (a > 0)


def test_exact_rate_and_threshold():
    assert -B.total_rate(0.0) == pytest.approx(1 / 3, abs=1e-15)
    thr = B.dissipation_threshold()
    assert thr == pytest.approx(0.25 ** (1 / 3), abs=1e-11)
    assert abs(B.dissipation_threshold_scan() - thr) <= 1e-6


def test_all_members_share_initial_data():
    x = np.linspace(-1.5, 1.5, 301)
    ref = B.evaluate(0.0, 1e-9, x)
    for a in (0.3, 1.0):
        assert np.abs(B.evaluate(a, 1e-9, x) - ref).max() <= 1e-8


@pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 1.0])
def test_weak_residual_small_and_sensitive(alpha):
    assert B.weak_residual(alpha) <= 1e-8
    assert B.weak_residual(alpha, plateau=0.9) > 1e-3


def test_domain_errors():
    with pytest.raises(DomainError):
        B.evaluate(1.5, 1.0, 0.0)
    with pytest.raises(DomainError):
        B.energy(0.5, 0.0)


def test_table_rows(tmp_path):
    p = tmp_path / "b.csv"
    B.write_table(p, [0.0, 0.5])
    rows = list(csv.DictReader(open(p)))
    assert float(rows[0]["minus_total_rate"]) == pytest.approx(1 / 3, abs=1e-15)
    assert float(rows[1]["center"]) == pytest.approx(2 * 0.125 / 3)
