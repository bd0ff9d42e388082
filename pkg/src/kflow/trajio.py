"""KF-TRAJ v1 checkpoints: a JSON manifest plus one KF-MESH file per snapshot."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .flow import FlowConfig, FlowTrajectory, Snapshot
from .mesh import read_mesh, write_kfmesh

KF_TRAJ = "KF-TRAJ v1"
MANIFEST = "manifest.json"
SUMMARY_COLUMNS = ("t", "area", "max_A2", "min_cos_alpha", "max_H", "remesh_flag")


def _to_json(x):
    if isinstance(x, dict):
        return {str(k): _to_json(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_to_json(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        try:
            x = x.item()
        except (ValueError, AttributeError):
            x = x.tolist()
            return _to_json(x)
    if isinstance(x, float) and not math.isfinite(x):
        return {"__float__": repr(x)}
    return x


def _from_json(x):
    if isinstance(x, dict):
        if set(x) == {"__float__"}:
            return float(x["__float__"])
        return {k: _from_json(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_from_json(v) for v in x]
    return x


def write_trajectory(traj: FlowTrajectory, directory, time_axis: str = "t", extra: dict | None = None) -> Path:
    """Write the manifest, snapshot meshes and the summary CSV into ``directory``."""
    d = Path(directory)
    (d / "snapshots").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(traj.snapshots):
        name = f"snapshots/snap_{i:05d}.kfmesh"
        write_kfmesh(s.mesh, d / name)
        entries.append({"index": i, time_axis: s.t, "step": s.step, "file": name,
                        "remesh_flag": bool(s.remesh_flag), "summary": s.summary})
    manifest = {
        "format": KF_TRAJ,
        "time_axis": time_axis,
        "config": traj.config.echo() if traj.config is not None else None,
        "termination": traj.termination,
        "failure": traj.failure,
        "a2_stop": traj.a2_stop,
        "events": traj.events,
        "snapshots": entries,
        "extra": extra or {},
    }
    (d / MANIFEST).write_text(json.dumps(_to_json(manifest), indent=1, sort_keys=True))
    write_summary_csv(traj, d / "summary.csv", time_axis)
    return d


def write_summary_csv(traj: FlowTrajectory, path, time_axis: str = "t") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow((time_axis,) + SUMMARY_COLUMNS[1:])
        for s in traj.snapshots:
            row = [s.t] + [s.summary[c] for c in SUMMARY_COLUMNS[1:-1]] + [int(s.remesh_flag)]
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def read_manifest(directory) -> dict:
    d = Path(directory)
    man = _from_json(json.loads((d / MANIFEST).read_text()))
    if man.get("format") != KF_TRAJ:
        raise ValueError(f"{d}: not a {KF_TRAJ} directory")
    return man


def read_trajectory(directory, upto: int | None = None) -> FlowTrajectory:
    """Load a trajectory; ``upto`` keeps snapshots with index <= upto (for resuming)."""
    d = Path(directory)
    man = read_manifest(d)
    axis = man.get("time_axis", "t")
    snaps = []
    for e in man["snapshots"]:
        if upto is not None and e["index"] > upto:
            break
        snaps.append(Snapshot(float(e[axis]), read_mesh(d / e["file"]), dict(e["summary"]), int(e["step"]),
                              bool(e["remesh_flag"])))
    cfg = FlowConfig(**man["config"]) if man.get("config") else None
    return FlowTrajectory(snaps, man["termination"], cfg, list(man.get("events", [])), man.get("failure", ""),
                          float(man.get("a2_stop", math.inf)))
