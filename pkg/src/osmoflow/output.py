"""CSV and JSON writers shared by the command line modes."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .diagnostics import DiagnosticSeries
from .jko import Trajectory
from .profile import write_profile_csv

TRAJECTORY_COLUMNS = [
    "t",
    "r",
    "energy_total",
    "energy_perimeter",
    "energy_internal",
    "step_dist",
    "slope",
    "dissipation_residual",
]
DIAGNOSTIC_COLUMNS = ["t", "slope", "boundary_term", "interior_term", "energy_rate", "dissipation_residual"]


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def write_trajectory_csv(traj: Trajectory, diag: DiagnosticSeries, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# method={traj.method}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(TRAJECTORY_COLUMNS)
        for k, (t, s, rec) in enumerate(zip(traj.times, traj.states, traj.records)):
            e = rec.energy
            wr.writerow(
                [fmt(v) for v in (t, s.r, e.total, e.perimeter, e.internal, rec.step_dist, diag.slope[k], diag.dissipation_residual[k])]
            )


def write_diagnostics_csv(diag: DiagnosticSeries, path) -> None:
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(DIAGNOSTIC_COLUMNS)
        for k in range(diag.times.size):
            wr.writerow(
                [
                    fmt(v)
                    for v in (
                        diag.times[k],
                        diag.slope[k],
                        diag.boundary_term[k],
                        diag.interior_term[k],
                        diag.energy_rate[k],
                        diag.dissipation_residual[k],
                    )
                ]
            )


def write_snapshots(traj: Trajectory, out_dir, every: int) -> list[str]:
    n = len(traj)
    idx = sorted(set(range(0, n, max(1, every))) | {n - 1})
    names = []
    for k in idx:
        name = f"profile_{k}.csv"
        write_profile_csv(traj.states[k].u, Path(out_dir) / name)
        names.append(name)
    return names


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_summary(summary: dict, path) -> None:
    with Path(path).open("w") as fh:
        json.dump(_clean(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
