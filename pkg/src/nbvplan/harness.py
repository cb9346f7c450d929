"""End-to-end runs: execute the planning loop, compute metrics, emit artifacts.

Metrics follow the two-number protocol: point-cloud coverage (fraction of
10,000 area-uniform model samples with an acquired point within 5 mm) and
per-iteration compute time covering scene-representation update and
viewpoint selection, excluding synthetic rendering, which a real camera
would not incur.

records.csv schema (fixed):
  iteration,coverage,compute_time_s,pos_x,pos_y,pos_z,partition,
  n_empty,n_occupied,n_unknown,n_frontier,n_eo,n_ef
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .config import RunConfig
from .ellipsoid import dump_ellipsoids
from .mesh import load_mesh, sample_surface_points, save_ply_points
from .planner import PlannerState, initialize, run_iteration, should_terminate

log = logging.getLogger("nbvplan")

CSV_FIELDS = [
    "iteration", "coverage", "compute_time_s", "pos_x", "pos_y", "pos_z",
    "partition", "n_empty", "n_occupied", "n_unknown", "n_frontier", "n_eo", "n_ef",
]


@dataclass
class IterationRecord:
    iteration: int
    coverage: float
    compute_time_s: float
    pos: np.ndarray
    partition: int
    n_empty: int
    n_occupied: int
    n_unknown: int
    n_frontier: int
    n_eo: int
    n_ef: int

    def row(self) -> dict:
        return {
            "iteration": self.iteration,
            "coverage": f"{self.coverage:.9f}",
            "compute_time_s": f"{self.compute_time_s:.6f}",
            "pos_x": f"{self.pos[0]:.9g}",
            "pos_y": f"{self.pos[1]:.9g}",
            "pos_z": f"{self.pos[2]:.9g}",
            "partition": self.partition,
            "n_empty": self.n_empty,
            "n_occupied": self.n_occupied,
            "n_unknown": self.n_unknown,
            "n_frontier": self.n_frontier,
            "n_eo": self.n_eo,
            "n_ef": self.n_ef,
        }


def coverage(model_points: np.ndarray, acquired: np.ndarray, threshold: float = 0.005) -> float:
    """Fraction of model samples with an acquired point within `threshold` (m)."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    model_points = np.asarray(model_points, dtype=float).reshape(-1, 3)
    acquired = np.asarray(acquired, dtype=float).reshape(-1, 3)
    if len(acquired) == 0 or len(model_points) == 0:
        return 0.0
    tree = cKDTree(acquired)
    dist, _ = tree.query(model_points, k=1, distance_upper_bound=threshold * (1 + 1e-12))
    return float(np.count_nonzero(dist <= threshold) / len(model_points))


def _record_for(state: PlannerState, model_points: np.ndarray, iteration: int) -> IterationRecord:
    cfg = state.config
    counts = state.grid.state_counts(within_bbox=True)
    cov = coverage(model_points, state.acquired_points, cfg.coverage_threshold)
    chosen = state.history[-1]
    return IterationRecord(
        iteration=iteration,
        coverage=cov,
        compute_time_s=state.timings[-1].compute_s,
        pos=chosen.position,
        partition=chosen.partition_index,
        n_empty=counts["empty"],
        n_occupied=counts["occupied"],
        n_unknown=counts["unknown"],
        n_frontier=counts["frontier"],
        n_eo=len(state.e_o),
        n_ef=len(state.e_f),
    )


def run(config: RunConfig) -> tuple[list[IterationRecord], PlannerState]:
    """Execute the full loop; writes records.csv and final.ply under config.out."""
    verbose = os.environ.get("NBV_LOG", "").upper() in ("DEBUG", "INFO", "1")
    mesh = load_mesh(config.mesh)
    model_points = sample_surface_points(mesh, config.coverage_samples, seed=config.seed)

    os.makedirs(config.out, exist_ok=True)
    state = initialize(mesh, config)
    records: list[IterationRecord] = []
    while not should_terminate(state):
        run_iteration(state)
        rec = _record_for(state, model_points, state.iteration)
        records.append(rec)
        log.info(
            "iter %d  coverage=%.4f  compute=%.3fs  partition=%d  |Eo|=%d |Ef|=%d",
            rec.iteration, rec.coverage, rec.compute_time_s, rec.partition,
            rec.n_eo, rec.n_ef,
        )
        if verbose:
            state.grid.dump_ply(os.path.join(config.out, f"voxels_{state.iteration:02d}.ply"))
            dump_ellipsoids(
                os.path.join(config.out, "ellipsoids.txt"), state.iteration,
                state.e_o + state.e_f,
            )

    write_records(os.path.join(config.out, "records.csv"), records)
    save_ply_points(os.path.join(config.out, "final.ply"), state.acquired_points)
    return records, state


def write_records(path: str, records: list[IterationRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.row())


def read_records(path: str) -> list[dict]:
    with open(path, "r", newline="") as fh:
        return list(csv.DictReader(fh))


def summarize(run_dirs: list[str], target_iterations: int = 10) -> list[dict]:
    """Per-iteration mean/std of coverage and compute time across runs.

    Shorter runs are padded by duplicating their last record, so every run
    contributes to all `target_iterations` rows.
    """
    if not run_dirs:
        raise ValueError("summarize requires at least one run directory")
    per_run = []
    for d in run_dirs:
        rows = read_records(os.path.join(d, "records.csv"))
        if not rows:
            raise ValueError(f"{d}: empty records.csv")
        cov = [float(r["coverage"]) for r in rows]
        ct = [float(r["compute_time_s"]) for r in rows]
        n = max(target_iterations, len(cov))
        cov = cov + [cov[-1]] * (n - len(cov))
        ct = ct + [ct[-1]] * (n - len(ct))
        per_run.append((cov, ct))

    n_iters = max(len(c) for c, _ in per_run)
    out = []
    for i in range(n_iters):
        covs = np.array([c[i] if i < len(c) else c[-1] for c, _ in per_run])
        cts = np.array([t[i] if i < len(t) else t[-1] for _, t in per_run])
        out.append(
            {
                "iteration": i + 1,
                "mean_coverage": float(covs.mean()),
                "std_coverage": float(covs.std()),
                "mean_compute_time_s": float(cts.mean()),
                "std_compute_time_s": float(cts.std()),
                "n_runs": len(per_run),
            }
        )
    return out


def write_summary(path: str, summary: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(summary[0].keys()))
        writer.writeheader()
        for row in summary:
            writer.writerow(row)
