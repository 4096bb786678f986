import csv
import json

import pytest

from artifact import cli


def run(tmp_path, argv, config=None):
    args = list(argv)
    if config is not None:
        p = tmp_path / "run.cfg"
        p.write_text(config)
        args += ["--config", str(p)]
    return cli.main(args)


def test_config_parsing_and_digest(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nscenario = zero\nalphas = 0, 0.5  # inline\nt_max = none\n")
    raw = cli.read_config(p)
    cfg = cli.RunConfig(**{k: v for k, v in raw.items() if k != "t_max"})
    assert cfg.alphas == [0.0, 0.5] and cfg.scenario == "zero"
    assert cfg.digest() == cli.RunConfig(scenario="zero", alphas=[0, 0.5]).digest()
    assert cfg.digest() != cli.RunConfig().digest()


@pytest.mark.parametrize(
    "text",
    ["bogus = 1\n", "eps_v = 0.1\n", "grid = 48\n", "scenario = vortex\n", "code = 01x\n", "N = not-a-number\n"],
)
def test_config_errors_exit_3(tmp_path, text, capsys):
    assert run(tmp_path, ["burgers", "--out", str(tmp_path / "o")], text) == 3
    assert "config error" in capsys.readouterr().err


def test_missing_config_file_exits_3(tmp_path):
    assert cli.main(["burgers", "--config", str(tmp_path / "nope.cfg")]) == 3


def test_inadmissible_N_exits_3(tmp_path, capsys):
    assert run(tmp_path, ["stage", "--out", str(tmp_path / "o")], "N = 1.01\n") == 3
    assert "AdmissibilityError" in capsys.readouterr().err


def test_burgers_command(tmp_path):
    out = tmp_path / "b"
    assert cli.main(["burgers", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "burgers.csv")))
    assert float(rows[0]["alpha"]) == 0.0
    assert float(rows[0]["minus_total_rate"]) == pytest.approx(1 / 3, abs=1e-15)
    man = json.loads((out / "manifest.json").read_text())
    assert man["passed"] and man["command"] == "burgers"
    assert man["config_sha256"] == cli.RunConfig(**man["config"]).digest()


def test_schedule_command(tmp_path):
    out = tmp_path / "s"
    assert cli.main(["schedule", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "holder.csv")))
    a = [float(r["alpha_star"]) for r in rows]
    assert all(x < 1 / 15 for x in a) and a == sorted(a)
    assert (out / "trajectory.csv").exists()


def test_surrogate_family_command(tmp_path, capsys):
    out = tmp_path / "f"
    assert cli.main(["family", "--out", str(out), "--depth", "3", "--code", "010"]) == 0
    d = json.loads((out / "family.json").read_text())
    assert d["physical"] is False and len(d["codes"]) == 8
    assert "code 010" in capsys.readouterr().out
    assert cli.main(["family", "--out", str(out), "--depth", "3", "--code", "01"]) == 3


def test_zero_stage_dump_and_verify_roundtrip(tmp_path, capsys):
    out = tmp_path / "z"
    cfgtext = "scenario = zero\nt_max = 0.1\ndump = full\n"
    assert run(tmp_path, ["stage", "--out", str(out)], cfgtext) == 0
    stage_out = capsys.readouterr().out
    diag = json.loads((out / "diagnostics.json").read_text())
    for k in ("eps_v", "eps_x", "eps_t", "tau_hat", "lam"):
        assert k in diag["params"]
    man = json.loads((out / "manifest.json").read_text())
    for k in ("divergence_rel", "euler_reynolds_rel", "energy_identity_rel"):
        assert man["checks"][k]["value"] <= 1e-14
    assert cli.main(["verify", str(out / "flow"), "--out", str(tmp_path / "v")]) == 0
    verify_out = capsys.readouterr().out
    shared = [line for line in verify_out.splitlines() if line.split(":")[0] in {l.split(":")[0] for l in stage_out.splitlines()}]
    assert shared and all(line in stage_out.splitlines() for line in shared)
    assert "PASS matches stored table" in verify_out
