"""Command-line front end: config-driven runs, sweeps, and analysis.

Subcommands:

    spherefilm run     --config run.toml [--out DIR]
    spherefilm sweep   --config run.toml --param eps --values 1e-3,1e-4 [...]
    spherefilm analyze hardy  --gamma 1.0 --N 64,128,256 [--out DIR]
    spherefilm analyze decay  --diag out/diag.csv
    spherefilm analyze steady --c1 -1 --c2 0 --c3 1 [--N 256] [--out DIR]
    spherefilm analyze weak   --run-dir out [--basis 6]

Configs are TOML with flat dotted tables (see README).  Every resolved
default is recorded into summary.json so a run can be reproduced from its
outputs alone; data files carry no timestamps and re-running a config
reproduces diag.csv byte for byte.

Exit codes: 0 success, 2 numerical/solver failure, 3 configuration error.
"""

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .analysis import (fit_decay, functional_gap_constant, hardy_quotient_min,
                       steady_residual, steady_state_log, weak_residual)
from .continuation import run_sequence
from .errors import ConfigurationError, DomainError, NumericalError
from .functionals import DiagRecord, DriftParams, Field, ModelParams, mass
from .grid import build_grid
from .timestepper import SolverConfig, Trajectory, run

EXIT_OK = 0
EXIT_NUMERICAL = 2
EXIT_CONFIG = 3

_FMT = "%.17g"

SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["status", "config", "final", "audit", "n_steps",
                 "snapshot_times", "decay_fit"],
    "additionalProperties": False,
    "properties": {
        "status": {"enum": ["completed", "newton_failure", "blow_up"]},
        "config": {"type": "object"},
        "final": {
            "type": "object",
            "required": list(DiagRecord.CSV_COLUMNS),
            "additionalProperties": False,
            "properties": {c: {"type": "number"} for c in DiagRecord.CSV_COLUMNS},
        },
        "audit": {"type": "object"},
        "n_steps": {"type": "integer", "minimum": 0},
        "snapshot_times": {"type": "array", "items": {"type": "number"}},
        "decay_fit": {
            "type": ["object", "null"],
            "properties": {
                "A_fit": {"type": "number"},
                "B_fit": {"type": "number"},
                "rmse": {"type": "number"},
                "window": {"type": "array"},
                "n_skipped": {"type": "integer"},
                "B_discrete": {"type": "number"},
            },
        },
    },
}

_DEFAULTS = {
    "model": {
        "n": 1.0, "eps": 1e-6, "delta": 1e-3, "anchor": 1.0,
        "theta": None, "mobility": "entropy",
    },
    "drift": None,
    "grid": {"N": 128},
    "solver": {
        "t_end": 1.0, "dt0": None, "dt_min": None, "dt_max": None,
        "newton_tol": 1e-10, "newton_max_iter": 12, "output_stride": 10,
        "snapshot_stride": None, "accept_policy": True, "growth": 1.2,
        "blowup_threshold": 1e6,
    },
    "initial": {"kind": "cosine", "amplitude": 0.1, "offset": 1.0,
                "width": 0.5, "path": ""},
    "output": {"dir": "out", "snapshots": False},
    "analysis": {"beta": None, "mu": 0.0, "gamma": 0.5, "alpha": None,
                 "decay_fit": True},
}


def _merge_config(user: dict) -> dict:
    cfg = {}
    for section, defaults in _DEFAULTS.items():
        if defaults is None:
            cfg[section] = user.get(section)
            continue
        block = dict(defaults)
        extra = user.get(section, {})
        if not isinstance(extra, dict):
            raise ConfigurationError(f"config section [{section}] must be a table")
        unknown = set(extra) - set(block)
        if unknown:
            raise ConfigurationError(
                f"unknown keys in [{section}]: {sorted(unknown)}")
        block.update(extra)
        cfg[section] = block
    unknown_sections = set(user) - set(_DEFAULTS)
    if unknown_sections:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown_sections)}")
    return cfg


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            user = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config parse error in {p}: {exc}") from exc
    return _merge_config(user)


def make_initial(cfg_initial: dict, grid) -> Field:
    kind = cfg_initial["kind"]
    amp = float(cfg_initial["amplitude"])
    off = float(cfg_initial["offset"])
    x = grid.nodes
    if kind == "flat":
        u = np.full_like(x, off)
    elif kind == "cosine":
        u = off + amp * np.cos(np.pi * x)
    elif kind == "bump":
        width = float(cfg_initial["width"])
        if not (0.0 < width <= 1.0):
            raise ConfigurationError(f"bump width={width} must be in (0, 1]")
        profile = np.maximum(0.0, 1.0 - (x / width) ** 2)
        u = off + amp * profile * profile
    elif kind == "file":
        path = Path(cfg_initial["path"])
        if not path.is_file():
            raise ConfigurationError(f"initial data file not found: {path}")
        data = np.genfromtxt(path, delimiter=",", names=True)
        try:
            xs, us = data["x"], data["u"]
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(
                f"initial data file {path} needs columns x,u") from exc
        u = np.interp(x, xs, us)
    else:
        raise ConfigurationError(f"unknown initial kind {kind!r}")
    return Field(grid, u)


def _build_problem(cfg: dict):
    grid = build_grid(int(cfg["grid"]["N"]))
    u0 = make_initial(cfg["initial"], grid)
    m = cfg["model"]
    anchor = m["anchor"]
    if anchor == "mass":
        anchor = 0.5 * mass(u0)
    drift = None
    if cfg["drift"] is not None:
        drift = DriftParams(**cfg["drift"])
    params = ModelParams(
        n=float(m["n"]), eps=float(m["eps"]), delta=float(m["delta"]),
        anchor=float(anchor), theta=m["theta"], mobility=m["mobility"],
        drift=drift,
    )
    s = cfg["solver"]
    solver = SolverConfig(
        t_end=float(s["t_end"]), dt0=s["dt0"], dt_min=s["dt_min"],
        dt_max=s["dt_max"], newton_tol=float(s["newton_tol"]),
        newton_max_iter=int(s["newton_max_iter"]),
        output_stride=int(s["output_stride"]),
        snapshot_stride=s["snapshot_stride"],
        accept_policy=bool(s["accept_policy"]), growth=float(s["growth"]),
        blowup_threshold=float(s["blowup_threshold"]),
    )
    return grid, u0, params, solver


def _resolved_config(cfg, params, solver, beta, mu, gamma) -> dict:
    out = json.loads(json.dumps(cfg))  # deep copy, JSON-clean
    out["model"].update({
        "n": params.n, "eps": params.eps, "delta": params.delta,
        "anchor": params.anchor, "theta": params.theta,
        "mobility": params.mobility,
    })
    out["drift"] = None if params.drift is None else asdict(params.drift)
    out["solver"].update({k: getattr(solver, k) for k in (
        "t_end", "dt0", "dt_min", "dt_max", "newton_tol", "newton_max_iter",
        "output_stride", "snapshot_stride", "accept_policy", "growth",
        "blowup_threshold")})
    out["analysis"].update({"beta": beta, "mu": mu, "gamma": gamma})
    return out


def write_diag_csv(path, diagnostics):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DiagRecord.CSV_COLUMNS)
        for rec in diagnostics:
            writer.writerow([_FMT % v for v in rec.as_row()])


def write_snapshots(outdir: Path, traj: Trajectory):
    for i in range(traj.snapshots.shape[0]):
        with open(outdir / f"snap_{i:04d}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "u"])
            for x, u in zip(traj.grid.nodes, traj.snapshots[i]):
                writer.writerow([_FMT % x, _FMT % u])


def _validate_summary(summary: dict):
    import jsonschema

    jsonschema.validate(summary, SUMMARY_SCHEMA)


def _write_run_outputs(outdir: Path, cfg, traj: Trajectory, params, solver):
    outdir.mkdir(parents=True, exist_ok=True)
    write_diag_csv(outdir / "diag.csv", traj.diagnostics)
    if cfg["output"]["snapshots"]:
        write_snapshots(outdir, traj)

    decay = None
    if cfg["analysis"]["decay_fit"] and traj.status == "completed":
        t, e0 = traj.energy0_series()
        try:
            fit = fit_decay(t, e0)
            decay = {
                "A_fit": fit.A_fit, "B_fit": fit.B_fit, "rmse": fit.rmse,
                "window": list(fit.window), "n_skipped": fit.n_skipped,
                "B_discrete": functional_gap_constant(traj.grid.N,
                                                      params.delta),
            }
        except NumericalError:
            decay = None

    final = dict(zip(DiagRecord.CSV_COLUMNS, traj.diagnostics[-1].as_row()))
    summary = {
        "status": traj.status,
        "config": _resolved_config(cfg, params, solver, traj.beta, traj.mu,
                                   traj.gamma),
        "final": final,
        "audit": traj.audit.as_dict(),
        "n_steps": traj.audit.n_steps,
        "snapshot_times": [float(t) for t in traj.snapshot_times],
        "decay_fit": decay,
    }
    _validate_summary(summary)
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def cmd_run(config_path, out_override=None) -> int:
    cfg = load_config(config_path)
    if out_override:
        cfg["output"]["dir"] = str(out_override)
    grid, u0, params, solver = _build_problem(cfg)
    a = cfg["analysis"]
    beta = a["beta"] if a["beta"] is not None else min(1.0, 2.0 / params.n)
    traj = run(u0, params, solver, beta=float(beta), mu=float(a["mu"]),
               gamma=float(a["gamma"]))
    _write_run_outputs(Path(cfg["output"]["dir"]), cfg, traj, params, solver)
    return EXIT_OK if traj.status == "completed" else EXIT_NUMERICAL


def cmd_sweep(config_path, parameter, values, out_override=None,
              workers: int = 1) -> int:
    cfg = load_config(config_path)
    if out_override:
        cfg["output"]["dir"] = str(out_override)
    grid, u0, params, solver = _build_problem(cfg)
    report, trajectories = run_sequence(u0, params, solver, parameter,
                                        values, workers=workers)
    outdir = Path(cfg["output"]["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    for k, (value, traj) in enumerate(zip(report.values, trajectories)):
        subdir = outdir / f"val_{k:02d}_{value:g}"
        member_cfg = json.loads(json.dumps(cfg))
        member_cfg["model"][parameter] = value
        if parameter == "delta":
            member_cfg["model"]["eps"] = value ** 2
        _write_run_outputs(subdir, member_cfg, traj, traj.params, solver)
    with open(outdir / "report.json", "w") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK if report.complete else EXIT_NUMERICAL


def _analyze_hardy(args) -> dict:
    sizes = [int(s) for s in args.N.split(",")]
    quotients = [hardy_quotient_min(args.gamma, N) for N in sizes]
    gaps = [functional_gap_constant(N, 0.0) for N in sizes]
    return {"gamma": args.gamma, "N": sizes, "quotients": quotients,
            "gap_constants": gaps}


def _analyze_decay(args) -> dict:
    path = Path(args.diag)
    if not path.is_file():
        raise ConfigurationError(f"diagnostics file not found: {path}")
    data = np.genfromtxt(path, delimiter=",", names=True)
    try:
        t, e0 = np.atleast_1d(data["t"]), np.atleast_1d(data["energy_0"])
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(
            f"{path} needs columns t and energy_0") from exc
    fit = fit_decay(t, e0)
    return {"A_fit": fit.A_fit, "B_fit": fit.B_fit, "rmse": fit.rmse,
            "window": list(fit.window), "n_skipped": fit.n_skipped}


def _analyze_steady(args) -> dict:
    grid = build_grid(args.N)
    if args.c1 == 0.0 and args.c2 == 0.0:
        field = Field(grid, np.full(grid.N + 1, args.c3))
        margin = 0.0
    else:
        field = steady_state_log(args.c1, args.c2, args.c3, grid)
        margin = 4.0 * grid.h + 4.0 * grid.h
    params = ModelParams(n=args.n, eps=0.0, delta=0.0)
    resid = steady_residual(field, params, margin=margin)
    return {"c1": args.c1, "c2": args.c2, "c3": args.c3, "N": args.N,
            "n": args.n, "margin": margin, "residual": resid}


def _analyze_weak(args) -> dict:
    rundir = Path(args.run_dir)
    summary_path = rundir / "summary.json"
    if not summary_path.is_file():
        raise ConfigurationError(f"no summary.json in {rundir}")
    with open(summary_path) as fh:
        summary = json.load(fh)
    model = summary["config"]["model"]
    grid = build_grid(int(summary["config"]["grid"]["N"]))
    params = ModelParams(n=model["n"], eps=model["eps"], delta=model["delta"],
                         anchor=model["anchor"], theta=model["theta"],
                         mobility=model["mobility"])
    snap_files = sorted(rundir.glob("snap_*.csv"))
    if len(snap_files) < 3:
        raise ConfigurationError(
            f"{rundir} has {len(snap_files)} snapshots, need >= 3 "
            "(run with output.snapshots = true)")
    snaps = np.array([np.genfromtxt(f, delimiter=",", names=True)["u"]
                      for f in snap_files])
    times = np.array(summary["snapshot_times"])
    solver = SolverConfig(t_end=summary["config"]["solver"]["t_end"])
    traj = Trajectory(
        grid=grid, params=params, config=solver,
        times=times, diagnostics=[], snapshot_times=times, snapshots=snaps,
        status=summary["status"], audit=None, beta=1.0, mu=0.0, gamma=0.5,
    )
    resid = weak_residual(traj, params, test_basis_size=args.basis)
    return {"residual": resid, "basis_size": args.basis,
            "n_snapshots": len(snap_files)}


def cmd_analyze(args) -> int:
    if args.analysis_cmd == "hardy":
        result = _analyze_hardy(args)
        dest = Path(args.out) / "hardy.json"
    elif args.analysis_cmd == "decay":
        result = _analyze_decay(args)
        dest = Path(args.diag).parent / "decay_fit.json"
    elif args.analysis_cmd == "steady":
        result = _analyze_steady(args)
        dest = Path(args.out) / "steady.json"
    elif args.analysis_cmd == "weak":
        result = _analyze_weak(args)
        dest = Path(args.run_dir) / "weak.json"
    else:  # pragma: no cover - argparse enforces choices
        raise ConfigurationError(f"unknown analyze subcommand {args.analysis_cmd!r}")
    print(json.dumps(result, sort_keys=True))
    dest.parent.mkdir(parents=True, exist_ok=True)
    with open(dest, "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def _parse_values(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad --values list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spherefilm",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="run one configured simulation")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)

    p_sweep = sub.add_parser("sweep", help="run a regularization sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True, choices=["eps", "delta"])
    p_sweep.add_argument("--values", required=True)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--workers", type=int, default=1)

    p_an = sub.add_parser("analyze", help="standalone analysis utilities")
    an_sub = p_an.add_subparsers(dest="analysis_cmd", required=True)

    p_hardy = an_sub.add_parser("hardy")
    p_hardy.add_argument("--gamma", type=float, required=True)
    p_hardy.add_argument("--N", required=True,
                         help="comma-separated grid sizes")
    p_hardy.add_argument("--out", default=".")

    p_decay = an_sub.add_parser("decay")
    p_decay.add_argument("--diag", required=True,
                         help="path to a diag.csv file")

    p_steady = an_sub.add_parser("steady")
    p_steady.add_argument("--c1", type=float, required=True)
    p_steady.add_argument("--c2", type=float, required=True)
    p_steady.add_argument("--c3", type=float, required=True)
    p_steady.add_argument("--N", type=int, default=256)
    p_steady.add_argument("--n", type=float, default=1.0)
    p_steady.add_argument("--out", default=".")

    p_weak = an_sub.add_parser("weak")
    p_weak.add_argument("--run-dir", required=True)
    p_weak.add_argument("--basis", type=int, default=6)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if args.cmd == "run":
            return cmd_run(args.config, args.out)
        if args.cmd == "sweep":
            return cmd_sweep(args.config, args.param,
                             _parse_values(args.values), args.out,
                             workers=args.workers)
        return cmd_analyze(args)
    except (ConfigurationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
