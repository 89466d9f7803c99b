"""On-disk layout of a run: diagnostics CSV, snapshot CSVs, manifest JSON.

Float columns are written with repr (shortest round-trip form), so identical
configurations produce byte-identical CSV files.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .grid import Field, read_field_csv, write_field_csv
from .model import SNAPSHOT_COLUMNS, ModelParams
from .steppers import SolverConfig, Trajectory

__all__ = [
    "write_trajectory",
    "read_trajectory",
    "manifest_sha256",
    "write_verification",
]

DIAGNOSTICS_FILE = "diagnostics.csv"
MANIFEST_FILE = "manifest.json"


def _snapshot_filename(k: int) -> str:
    return f"snapshot_{k:08d}.csv"


def write_trajectory(traj: Trajectory, outdir, config_echo: dict | None = None) -> dict:
    """Write diagnostics, strided snapshots and the manifest; returns the manifest."""
    os.makedirs(outdir, exist_ok=True)
    rows = [",".join(SNAPSHOT_COLUMNS)]
    for row in traj.diag:
        rows.append(",".join(repr(float(x)) for x in row))
    with open(os.path.join(outdir, DIAGNOSTICS_FILE), "w") as f:
        f.write("\n".join(rows) + "\n")

    snapshot_files = []
    for i, (t, field) in enumerate(zip(traj.snapshot_times, traj.snapshots)):
        name = _snapshot_filename(i)
        write_field_csv(os.path.join(outdir, name), field)
        snapshot_files.append({"file": name, "t": float(t)})

    g = traj.grid
    manifest = {
        "config": config_echo if config_echo is not None else _config_dict(traj.config),
        "solver": _config_dict(traj.config),
        "grid": {
            "dim": g.dim,
            "endpoints": [list(e) for e in g.endpoints],
            "n_interior": list(g.n_interior),
            "h": list(g.h),
        },
        "model": {"kappa": traj.params.kappa},
        "n_steps": traj.n_steps(),
        "t_end": float(traj.times[-1]),
        "wall_time_s": traj.wall_time,
        "snapshots": snapshot_files,
        "inner_iterations": [int(x) for x in traj.inner_iterations],
        "failure": traj.failure,
    }
    if traj.eta_hat_gap_l2 is not None and len(traj.eta_hat_gap_l2):
        manifest["eta_hat_gap_l2_max"] = float(np.max(traj.eta_hat_gap_l2))
    with open(os.path.join(outdir, MANIFEST_FILE), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def _config_dict(cfg: SolverConfig) -> dict:
    return {
        "scheme": cfg.scheme, "dt": cfg.dt, "t_end": cfg.t_end,
        "splitting": cfg.splitting, "yosida_lambda": cfg.yosida_lambda,
        "newton_tol": cfg.newton_tol, "newton_max_iter": cfg.newton_max_iter,
        "pgs_tol": cfg.pgs_tol, "pgs_max_iter": cfg.pgs_max_iter,
        "snapshot_stride": cfg.snapshot_stride,
    }


def read_trajectory(outdir) -> Trajectory:
    """Reload a written run for verification.

    Only what the file formats carry comes back: the diagnostics table and the
    snapshots.  The per-step auxiliary series exist only in memory, so checks
    that need them fall back to snapshot-level granularity.
    """
    from .grid import Grid  # local to keep the module import list honest

    with open(os.path.join(outdir, MANIFEST_FILE)) as f:
        manifest = json.load(f)
    gsec = manifest["grid"]
    grid = Grid(dim=gsec["dim"],
                endpoints=tuple(tuple(e) for e in gsec["endpoints"]),
                n_interior=tuple(gsec["n_interior"]),
                h=tuple(gsec["h"]))
    params = ModelParams(kappa=manifest["model"]["kappa"])
    cfg = SolverConfig(**manifest["solver"])

    diag_rows = []
    with open(os.path.join(outdir, DIAGNOSTICS_FILE)) as f:
        header = f.readline().strip().split(",")
        if tuple(header) != SNAPSHOT_COLUMNS:
            raise ValueError(f"unexpected diagnostics header {header}")
        for line in f:
            if line.strip():
                diag_rows.append([float(x) for x in line.split(",")])
    diag = np.array(diag_rows)

    snapshots, snap_times = [], []
    for entry in manifest["snapshots"]:
        snapshots.append(read_field_csv(os.path.join(outdir, entry["file"]), grid=grid))
        snap_times.append(entry["t"])
    if not snapshots:
        raise ValueError(f"{outdir}: no snapshots on disk")

    return Trajectory(
        grid=grid, params=params, config=cfg, u0=snapshots[0],
        times=diag[:, 0], diag=diag,
        res_l2sq=None, obstacle_gap_min=None, du_dt_l2=None,
        step_min_increment=None,
        inner_iterations=np.array(manifest.get("inner_iterations", []), dtype=int),
        snapshot_times=np.array(snap_times), snapshots=snapshots,
        failure=manifest.get("failure"),
    )


def manifest_sha256(outdir) -> str:
    with open(os.path.join(outdir, MANIFEST_FILE), "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def write_verification(outdir, reports, manifest_hash: str | None) -> dict:
    doc = {
        "checks": [r.to_dict() for r in reports],
        "all_passed": all(r.passed for r in reports),
        "manifest_sha256": manifest_hash,
    }
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "verification.json"), "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    return doc


def load_state_field(outdir, t: float | None = None) -> Field:
    """Snapshot at time t (default: final) from a written run."""
    traj = read_trajectory(outdir)
    if t is None:
        return traj.final_state()
    return traj.state_at_time(t)
