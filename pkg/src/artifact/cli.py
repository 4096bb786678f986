"""Command line front end.

Subcommands ``stage``, ``schedule``, ``family``, ``burgers``, ``verify`` and
``wild`` read an optional flat ``key = value`` config file, validate it against
:class:`RunConfig` (unknown keys are rejected), run the scenario and write JSON
or CSV results plus a ``manifest.json`` into the output directory.

Exit codes: 0 when every enabled check passes, 2 on a check failure, 3 on a
configuration or validation error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import replace
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from . import __version__
from . import burgers as B
from . import fields as F
from . import scheduler as S
from .errors import AdmissibilityError, AliasError, ArtifactError, ConfigError, DomainError, IntervalTooShort, WellPreparednessError
from .family import run_family, separation_check, write_family_json
from .flow import COMPONENTS, DissipativeEulerReynoldsFlow, FlowSample, FrequencyEnergyLevels, check_flow
from .kernels import BACKEND
from .scenarios import ScenarioConfig, desk_scenario, wild_data
from .stage import perform_stage

log = logging.getLogger("artifact")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 2, 3
VALIDATION_ERRORS = (AdmissibilityError, AliasError, ConfigError, DomainError, IntervalTooShort, WellPreparednessError)


def _floats(v):
    if isinstance(v, str):
        return [float(x) for x in v.replace(",", " ").split()]
    return [float(x) for x in v]


class RunConfig(BaseModel):
    """Validated run configuration; derived stage parameters are never read from it."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    scenario: Literal["shear", "zero"] = "shear"
    grid: int = 64
    out: str = "out"
    tolerance_scale: float = 1.0
    dump: Literal["none", "velocity", "full"] = "velocity"
    t_max: Optional[float] = None
    # base flow and preparation
    amplitude: float = 0.1
    Xi0: float = 2.0
    E0: float = 1.0
    Z: float = 1.1
    sup_I0: float = 1.5
    sup_I1: float = 2.0
    t_end: float = 4.0
    per_lifespan: int = 4
    # stage
    N: float = 2.0
    B_lambda: float = 1.5
    K0: float = 100.0
    b0: float = 1.0
    c0: float = 0.5
    c1: float = 0.5
    delta_bar: float = 0.01
    include_phi: bool = False
    m_coarse: int = 16
    n_nodes: int = 8
    max_K0_doublings: int = 4
    drift_tol: float = 0.5
    # scheduler
    Z_sweep: list[float] = [math.exp(x) for x in (10.0, 20.0, 40.0, 80.0, 160.0)]
    L_c: float = 1.0
    steps: int = 200
    # family
    depth: int = 1
    code: Optional[str] = None
    start_bit: int = 2
    surrogate_Z: float = math.exp(10.0)
    # burgers
    alphas: list[float] = [0.0, 0.1, 0.3, 0.5, 0.55, 0.6, 1.0]
    t_eval: float = 1.0
    # wild data
    E0_sweep: list[float] = [4.0, 1.0]

    @field_validator("Z_sweep", "alphas", "E0_sweep", mode="before")
    @classmethod
    def _split(cls, v):
        return _floats(v)

    @field_validator("code")
    @classmethod
    def _bits(cls, v):
        if v is not None and (not v or set(v) - {"0", "1"}):
            raise ValueError("code must be a nonempty bit string")
        return v

    @field_validator("grid")
    @classmethod
    def _grid(cls, v):
        if v < 8 or v & (v - 1):
            raise ValueError("grid must be a power of two >= 8")
        return v

    def stage_kw(self):
        return {k: getattr(self, k) for k in ("B_lambda", "K0", "b0", "c0", "c1", "delta_bar", "include_phi", "m_coarse", "n_nodes", "max_K0_doublings", "drift_tol")}

    def scenario_config(self):
        return ScenarioConfig(self.grid, self.amplitude, self.Xi0, self.E0, self.Z, self.N, self.sup_I0, self.sup_I1, self.t_end, self.per_lifespan)

    def digest(self):
        return hashlib.sha256(json.dumps(self.model_dump(), sort_keys=True).encode()).hexdigest()


def read_config(path):
    """Parse a flat ``key = value`` file (``#`` comments) into a dict of strings."""
    with open(path) as fh:
        text = fh.read()
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    cp.read_string("[run]\n" + text)
    return dict(cp["run"])


def load_config(args) -> RunConfig:
    raw = read_config(args.config) if getattr(args, "config", None) else {}
    for flag, key in (("out", "out"), ("tolerance_scale", "tolerance_scale"), ("depth", "depth"), ("code", "code"), ("grid", "grid")):
        val = getattr(args, flag, None)
        if val is not None:
            raw[key] = val
    if raw.get("t_max") in ("", "none", "None"):
        raw["t_max"] = None
    return RunConfig(**raw)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, default=_json_default)


def write_manifest(cfg: RunConfig, command, passed, constants=None, checks=None):
    os.makedirs(cfg.out, exist_ok=True)
    write_json(
        os.path.join(cfg.out, "manifest.json"),
        {
            "command": command,
            "version": __version__,
            "kernel_backend": BACKEND,
            "config": cfg.model_dump(),
            "config_sha256": cfg.digest(),
            "passed": bool(passed),
            "constants": constants or {},
            "checks": checks or {},
        },
    )


# ---------------------------------------------------------------- flow dumps


def dump_flow(dirname, flow_or_samples, times, n, stage, levels: FrequencyEnergyLevels | None = None, extra=None):
    """Write ``flow.cifld`` (all components stacked, one time slab per sample) and ``flow.json``."""
    os.makedirs(dirname, exist_ok=True)
    samples = list(flow_or_samples)
    arr = np.stack([s.stacked(n) for s in samples])
    F.dump_fields(os.path.join(dirname, "flow.cifld"), arr)
    write_json(
        os.path.join(dirname, "flow.json"),
        {"n": n, "times": list(times), "stage": list(stage), "components": list(COMPONENTS), "levels": levels.as_dict() if levels else None, **(extra or {})},
    )


def load_flow(dirname):
    """Inverse of :func:`dump_flow`; returns ``(flow, sidecar)``."""
    with open(os.path.join(dirname, "flow.json")) as fh:
        meta = json.load(fh)
    arr = F.load_fields(os.path.join(dirname, "flow.cifld"))
    samples = [FlowSample.from_stacked(t, arr[i]) for i, t in enumerate(meta["times"])]
    return DissipativeEulerReynoldsFlow(meta["n"], tuple(meta["times"]), samples, tuple(meta["stage"])), meta


# ---------------------------------------------------------------- commands


def _build_stage_input(cfg: RunConfig):
    sc = cfg.scenario_config()
    if cfg.scenario == "zero":
        sc = replace(sc, amplitude=0.0)
    return desk_scenario(sc, **cfg.stage_kw())


def cmd_stage(cfg: RunConfig):
    sc = _build_stage_input(cfg)
    keep = []

    def sink(i, s):
        keep.append(s)

    sink.reset = keep.clear
    res = perform_stage(
        sc.flow, sc.levels, sc.wp, sc.cfg, store="velocity" if cfg.dump == "velocity" else "none", sink=sink if cfg.dump == "full" else None, t_max=cfg.t_max, tolerance_scale=cfg.tolerance_scale
    )
    os.makedirs(cfg.out, exist_ok=True)
    write_json(os.path.join(cfg.out, "diagnostics.json"), res.diagnostics)
    if cfg.dump == "velocity":
        F.dump_fields(os.path.join(cfg.out, "velocity.cifld"), np.stack(res.velocities))
        write_json(os.path.join(cfg.out, "velocity.json"), {"times": list(res.times), "n": cfg.grid})
    elif cfg.dump == "full":
        dump_flow(os.path.join(cfg.out, "flow"), keep, res.times, cfg.grid, res.diagnostics["output_stage"], res.levels, {"checks": res.checks.as_dict()})
    for line in res.checks.lines():
        print(line)
    consts = {k: res.diagnostics[k] for k in ("c_hat", "C_L", "K0", "weak_norm_ratio", "stress_contraction_ratio")}
    write_manifest(cfg, "stage", res.checks.passed, consts, res.checks.as_dict())
    return EXIT_OK if res.checks.passed else EXIT_FAIL


def cmd_schedule(cfg: RunConfig):
    os.makedirs(cfg.out, exist_ok=True)
    rows = []
    for Z in cfg.Z_sweep:
        rows.append((Z, S.holder_exponent(Z, cfg.L_c), S.holder_exponent_closed_form(Z, cfg.L_c)))
    alphas = [r[1] for r in rows]
    limit = S.extrapolate_holder(cfg.Z_sweep, alphas, cfg.L_c)
    with open(os.path.join(cfg.out, "holder.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Z", "log_Z", "alpha_star", "alpha_closed_form"])
        for Z, a, c in rows:
            w.writerow([f"{Z:.17g}", f"{math.log(Z):.17g}", f"{a:.17g}", f"{c:.17g}"])
    led = S.ParameterLedger.sector_start(math.log(cfg.Z_sweep[0]), L_c=cfg.L_c)
    traj = S.trajectory(led, cfg.steps)
    S.write_trajectory_csv(os.path.join(cfg.out, "trajectory.csv"), traj)
    decay = S.decay_laws(traj, cfg.L_c)
    checks = {
        "below_one_fifteenth": all(a < 1 / 15 for a in alphas),
        "nondecreasing": all(b >= a for a, b in zip(alphas, alphas[1:])),
        "extrapolation": abs(limit - 1 / 15) <= 1e-3,
        "decay_laws": decay["amplitude_ok"] and decay["timescale_ok"],
    }
    for k, v in checks.items():
        print(f"{'PASS' if v else 'FAIL'} {k}")
    print(f"alpha* limit {limit:.6g}")
    passed = all(checks.values())
    write_manifest(cfg, "schedule", passed, {"alpha_limit": limit, "alphas": alphas}, checks)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_family(cfg: RunConfig):
    os.makedirs(cfg.out, exist_ok=True)
    surrogate = cfg.depth > 1
    if surrogate:
        run = run_family(None, cfg.depth, cfg.start_bit, surrogate=True, Z=cfg.surrogate_Z, L_c=cfg.L_c)
    else:
        sc = _build_stage_input(cfg)
        run = run_family(sc, cfg.depth, cfg.start_bit, surrogate=False, out_dir=os.path.join(cfg.out, "snapshots"), tolerance_scale=cfg.tolerance_scale)
    rep = separation_check(run)
    checks = {"separation": rep["passed"]}
    if run.physical:
        ex = run.extras
        checks["difference_supported_in_J"] = ex["max_diff_outside_J"] == 0.0
        checks["identical_on_I0"] = ex["max_diff_on_I0"] == 0.0
        checks["mu_bitwise_equal"] = ex["mu_bitwise_equal"]
        checks["stage_checks"] = all(all(r["pass"] for r in t.values()) for t in ex["checks"].values())
    if cfg.code is not None:
        if len(cfg.code) != run.depth:
            raise ConfigError(f"code length {len(cfg.code)} does not match depth {run.depth}")
        i = run.codes.index(cfg.code)
        print(f"code {cfg.code}: L2 distances {run.distance_L2[i].tolist()}")
    write_family_json(os.path.join(cfg.out, "family.json"), run, rep)
    for k, v in checks.items():
        print(f"{'PASS' if v else 'FAIL'} {k}")
    passed = all(checks.values())
    write_manifest(cfg, "family", passed, {"C_L": run.C_L, "c_hat": run.c_hat, "worst_margin": rep["worst_margin"]}, checks)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_burgers(cfg: RunConfig):
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "burgers.csv")
    B.write_table(path, cfg.alphas, cfg.t_eval)
    battery = B.default_battery()
    res = {a: B.weak_residual(a, battery) for a in cfg.alphas}
    viol = {a: any(j.production > 0 for j in B.jumps(a, cfg.t_eval)) for a in cfg.alphas}
    checks = {
        "weak_residual": max(res.values()) <= 1e-8,
        "entropy_violation_iff_alpha_positive": all(viol[a] == (a > 0) for a in cfg.alphas),
    }
    for k, v in checks.items():
        print(f"{'PASS' if v else 'FAIL'} {k}")
    print(f"rate(alpha=0) {B.total_rate(0.0, cfg.t_eval):.17g}; threshold {B.dissipation_threshold():.12g}")
    passed = all(checks.values())
    write_manifest(cfg, "burgers", passed, {"rate_alpha0": B.total_rate(0.0, cfg.t_eval), "threshold": B.dissipation_threshold()}, checks)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_verify(cfg: RunConfig, dump_dir):
    flow, meta = load_flow(dump_dir)
    table = check_flow(flow, cfg.tolerance_scale)
    stored = meta.get("checks") or {}
    same = all(stored[k]["value"] == r["value"] for k, r in table.rows.items() if k in stored)
    for line in table.lines():
        print(line)
    print(f"{'PASS' if same else 'FAIL'} matches stored table")
    passed = table.passed and same
    write_manifest(cfg, "verify", passed, {}, table.as_dict())
    return EXIT_OK if passed else EXIT_FAIL


def cmd_wild(cfg: RunConfig):
    os.makedirs(cfg.out, exist_ok=True)
    rep = wild_data(cfg.scenario_config(), cfg.E0_sweep, **cfg.stage_kw())
    checks = {
        "members_equal_at_t0": all(r["members_equal_at_t0"] for r in rep["sweep"]),
        "gap_scales_with_E0": all(abs(r["gap_sq_ratio"] / r["E0_ratio"] - 1.0) <= 0.3 for r in rep["ratios"]),
        "energy_equality": rep["energy_equality_mu_diff"] == 0.0,
    }
    write_json(os.path.join(cfg.out, "wild.json"), rep)
    for k, v in checks.items():
        print(f"{'PASS' if v else 'FAIL'} {k}")
    passed = all(checks.values())
    write_manifest(cfg, "wild", passed, {"C_bar": max(r["C_bar"] for r in rep["sweep"])}, checks)
    return EXIT_OK if passed else EXIT_FAIL


# ---------------------------------------------------------------- entry point


def build_parser():
    p = argparse.ArgumentParser(prog="artifact", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("stage", "schedule", "family", "burgers", "verify", "wild"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--tolerance-scale", dest="tolerance_scale", type=float)
        sp.add_argument("--depth", type=int)
        sp.add_argument("--code")
        sp.add_argument("--grid", type=int)
        if name == "verify":
            sp.add_argument("dump", help="directory holding flow.cifld and flow.json")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except (ValidationError, OSError, configparser.Error, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cmds = {"stage": cmd_stage, "schedule": cmd_schedule, "family": cmd_family, "burgers": cmd_burgers, "wild": cmd_wild}
    try:
        if args.command == "verify":
            return cmd_verify(cfg, args.dump)
        return cmds[args.command](cfg)
    except VALIDATION_ERRORS as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArtifactError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
