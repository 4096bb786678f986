import json
import math

import numpy as np
import pytest

from artifact import family as FM


def test_codes_and_first_difference():
    assert FM.all_codes(2) == ["00", "01", "10", "11"]
    assert FM.first_difference("0110", "0100") == 2
    assert FM.first_difference("01", "01") is None


@pytest.mark.parametrize("depth", [1, 2, 4])
def test_surrogate_family_separates(depth):
    run = FM.run_surrogate_family(depth)
    assert not run.physical
    assert "non-physical" in run.extras["label"]
    D = run.distance_L2
    assert np.allclose(D, D.T) and np.all(np.diag(D) == 0)
    off = D[~np.eye(len(run.codes), dtype=bool)]
    assert off.min() > 0
    rep = FM.separation_check(run)
    assert rep["passed"], rep
    if depth >= 2:
        assert rep["ratio"]["pass"] and rep["ordering"]["pass"]


def test_surrogate_distances_follow_amplitudes():
    run = FM.run_surrogate_family(2)
    a = np.array(run.extras["amplitudes"])
    i, j = run.codes.index("00"), run.codes.index("11")
    assert run.distance_L2[i, j] == pytest.approx(math.sqrt(8 * (a**2).sum()))
    assert run.distance_C0[i, j] == pytest.approx(4 * a.sum())
    # the nearest pair at the later bit is smaller by the amplitude ratio
    assert run.distance_L2[run.codes.index("00"), run.codes.index("01")] == pytest.approx(math.sqrt(8) * a[1])


def test_family_json_shape(tmp_path):
    run = FM.run_surrogate_family(2)
    p = tmp_path / "family.json"
    FM.write_family_json(p, run)
    d = json.loads(p.read_text())
    assert set(d["members"]) == set(run.codes)
    assert d["physical"] is False
    assert len(d["members"]["00"]["distance_L2"]) == 4
