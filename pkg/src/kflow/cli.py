"""Command line: ``kflow run | analyze | verify | report``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from contextlib import ExitStack
from pathlib import Path

from filelock import FileLock, Timeout
from threadpoolctl import threadpool_limits

from .config import ConfigError, RunConfig, format_config, load_config
from .flow import BLOW_UP, MESH_FAILURE, T_END, run
from .kahler import kahler_angle, lagrangian_angle, write_angle_csv, AngleUndefinedError
from .mesh import MeshError, read_mesh, validate_mesh
from .monotonicity import write_trace_csv
from .pipeline import analyze
from .scenarios import ScenarioError, scenario
from .singularity import verify_limit
from .trajio import read_trajectory, write_trajectory

EXIT_CODES = {T_END: 0, BLOW_UP: 3, MESH_FAILURE: 4}
EXIT_CONFIG = 2
EXIT_IO = 1

PLOT_STUB = '''"""Plot the summary series of a run (requires matplotlib)."""
import csv
import sys

import matplotlib.pyplot as plt

rows = list(csv.DictReader(open(sys.argv[1] if len(sys.argv) > 1 else "summary.csv")))
t = [float(r["t"]) for r in rows]
fig, axes = plt.subplots(2, 2, figsize=(9, 6))
for ax, key in zip(axes.flat, ["area", "max_A2", "min_cos_alpha", "max_H"]):
    ax.plot(t, [float(r[key]) for r in rows])
    ax.set_xlabel("t")
    ax.set_title(key)
fig.tight_layout()
fig.savefig("summary.png", dpi=120)
'''


def _lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    return FileLock(str(out / ".kflow.lock"), timeout=0)


def _threads():
    n = os.environ.get("KF_THREADS")
    return threadpool_limits(limits=int(n)) if n else None


def cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.resolution is not None:
        cfg.resolution = args.resolution
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out or cfg.out)
    sc = scenario(cfg.scenario, cfg.resolution, **cfg.scenario_params())
    cfg.flow.provenance = f"{cfg.scenario} n={cfg.resolution} params={sc.params}"
    with _lock(out):
        if args.resume_from is not None:
            prev = read_trajectory(out, upto=args.resume_from)
            last = prev.snapshots[-1]
            if cfg.flow.a2_stop is None:
                # keep the threshold of the original run rather than rescaling it to the restart mesh
                cfg.flow = dataclasses.replace(cfg.flow, a2_stop=prev.a2_stop)
            traj = run(last.mesh, cfg.flow, start_time=last.t, start_step=last.step)
            traj.snapshots = prev.snapshots + traj.snapshots[1:]
            traj.events = prev.events + traj.events
        else:
            traj = run(sc.mesh, cfg.flow)
        (out / "config.txt").write_text(format_config(cfg))
        write_trajectory(traj, out, extra={"scenario": cfg.scenario, "params": sc.params, "run": cfg.echo()})
    print(f"{traj.termination}: {len(traj.snapshots)} snapshots, t = {traj.snapshots[-1].t:.6g}")
    if traj.failure:
        print(traj.failure, file=sys.stderr)
    return EXIT_CODES[traj.termination]


def cmd_analyze(args) -> int:
    saved = Path(args.trajectory) / "config.txt"
    if args.config:
        cfg = load_config(args.config)
    else:
        # fall back to the settings the run was made with
        cfg = load_config(saved) if saved.exists() else RunConfig()
    traj = read_trajectory(args.trajectory)
    out = Path(args.out or Path(args.trajectory) / "analysis")
    with _lock(out):
        res = analyze(traj, cfg.analysis)
        doc = json.loads(res.report.to_json())
        doc["variant"] = res.variant
        if res.T_fit is not None:
            doc["T_hat"] = res.T_fit.T
            doc["T_fit_residual"] = res.T_fit.residual
            doc["T_fit_slope"] = res.T_fit.slope
        if res.extrema is not None:
            doc["min_cos_alpha_max_drop_rate"] = res.extrema.max_drop_rate
            doc["min_cos_alpha_monotone"] = res.extrema.monotone_min_cos
        doc["traces"] = []
        for k, w, tr in res.traces:
            name = f"trace_k{k}_{w}.csv"
            write_trace_csv(tr, out / name)
            doc["traces"].append({"k": k, "weight": w, "file": name, "monotone": tr.monotone,
                                  "mono_tol": tr.mono_tol, "worst_increase": tr.worst_increase,
                                  "accounting_ok": tr.accounting_ok, "dyadic": tr.dyadic})
        if args.write_stacks and res.sequence is not None:
            from .flow import FlowTrajectory, Snapshot
            for e in res.sequence.entries:
                snaps = [Snapshot(float(s), m, {"area": m.total_area(), "max_A2": float("nan"),
                                                "min_cos_alpha": float("nan"), "max_H": float("nan")}, 0)
                         for s, m in zip(e.s, e.meshes)]
                write_trajectory(FlowTrajectory(snaps, T_END, None), out / f"stack_k{e.params.k}", time_axis="s")
        (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str))
    print(f"{res.variant}: type {res.report.type_verdict}; report in {out / 'report.json'}")
    return 0


def cmd_verify(args) -> int:
    mesh = read_mesh(args.mesh)
    problems = validate_mesh(mesh)
    if problems:
        raise MeshError(f"invalid mesh: {problems}")
    rep = verify_limit(mesh, args.mode)
    text = rep.to_json()
    if args.out:
        out = Path(args.out)
        with _lock(out):
            (out / "verify.json").write_text(text)
    print(text)
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    traj = read_trajectory(run_dir)
    out = Path(args.out or run_dir / "plots")
    with _lock(out):
        with open(out / "extrema.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "area", "max_A2", "min_cos_alpha", "max_abs_cos_alpha", "max_H", "beta_min", "beta_max"])
            for s in traj.snapshots:
                w.writerow([repr(s.t)] + [repr(float(s.summary[k])) for k in
                                          ("area", "max_A2", "min_cos_alpha", "max_abs_cos_alpha", "max_H",
                                           "beta_min", "beta_max")])
        last = traj.snapshots[-1].mesh
        ang = kahler_angle(last)
        try:
            lagrangian_angle(last, angles=ang)
        except AngleUndefinedError:
            pass
        write_angle_csv(ang, out / "angles_last.csv")
        (out / "plot_summary.py").write_text(PLOT_STUB)
    print(f"wrote plot data to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kflow", description="Mean curvature flow laboratory for surfaces in R^4.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="evolve a scenario and write a KF-TRAJ v1 checkpoint")
    r.add_argument("--config")
    r.add_argument("--out")
    r.add_argument("--resolution", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--resume-from", type=int, help="restart from this snapshot index of an existing run in --out")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="blow-up analysis of a recorded trajectory")
    a.add_argument("trajectory")
    a.add_argument("--config", help="analysis settings (default: the run's own config.txt)")
    a.add_argument("--out")
    a.add_argument("--write-stacks", action="store_true")
    a.set_defaults(func=cmd_analyze)

    v = sub.add_parser("verify", help="check a standalone mesh as a blow-up limit")
    v.add_argument("mesh")
    v.add_argument("--mode", choices=("symplectic", "lagrangian"), default="symplectic")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    rp = sub.add_parser("report", help="write plot-ready CSVs and a plotting script")
    rp.add_argument("run")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with ExitStack() as stack:
        limiter = _threads()
        if limiter is not None:
            stack.enter_context(limiter)
        try:
            return args.func(args)
        except (ConfigError, ScenarioError) as err:
            print(f"config error: {err}", file=sys.stderr)
            return EXIT_CONFIG
        except Timeout:
            print("output directory is locked by another kflow process", file=sys.stderr)
            return EXIT_IO
        except (OSError, MeshError, ValueError) as err:
            print(f"error: {err}", file=sys.stderr)
            return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
