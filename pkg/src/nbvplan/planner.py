"""The NBV iteration loop with the global partitioning strategy.

The candidate sphere is divided into `beta` longitude sectors.  Until every
sector has been visited, the next view may only come from an unscanned
sector adjacent (mod beta) to an already-scanned one; afterwards selection
is a plain argmax of the view quality F.  A sector counts as scanned once a
view from it is selected.

Simulation uses ground-truth camera poses, so the pose-registration step a
real rig would need (and the registration rationale behind partitioning) is
exercised only through the adjacency constraint itself.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .ellipsoid import Ellipsoid, refit_all
from .geometry import Pose, look_at
from .mesh import TriangleMesh
from .oracle import oracle_evaluate
from .projection import evaluate_all
from .render import frame_to_points, render_depth
from .views import CandidateView, SamplingConfig, assign_partitions, sample_candidates, sampling_radius
from .voxel import Observation, VoxelGrid, integrate_observation, preprocess_points, update_bbox, update_frontier

log = logging.getLogger("nbvplan")


class InfeasiblePartitionError(RuntimeError):
    """No scored candidate lies in an admissible partition."""


@dataclass
class PartitionLedger:
    beta: int
    scanned: set[int] = field(default_factory=set)
    visit_order: list[tuple[int, int]] = field(default_factory=list)  # (iteration, partition)

    def mark(self, partition: int, iteration: int) -> None:
        if not (0 <= partition < self.beta):
            raise ValueError("partition out of range")
        self.scanned.add(partition)
        self.visit_order.append((iteration, partition))


@dataclass
class IterationTiming:
    selection_s: float = 0.0   # candidate sampling + scoring + argmax
    update_s: float = 0.0      # integration + bbox + frontier + refit
    render_s: float = 0.0      # simulator overhead, excluded from compute time

    @property
    def compute_s(self) -> float:
        return self.selection_s + self.update_s


@dataclass
class PlannerState:
    config: RunConfig
    grid: VoxelGrid
    mesh: TriangleMesh
    iteration: int = 0
    e_o: list[Ellipsoid] = field(default_factory=list)
    e_f: list[Ellipsoid] = field(default_factory=list)
    point_chunks: list[np.ndarray] = field(default_factory=list)  # accumulated P_f
    ledger: PartitionLedger | None = None
    history: list[CandidateView] = field(default_factory=list)
    timings: list[IterationTiming] = field(default_factory=list)
    empty_frontier_streak: int = 0

    def __post_init__(self):
        if self.ledger is None:
            self.ledger = PartitionLedger(beta=self.config.beta)

    @property
    def acquired_points(self) -> np.ndarray:
        if not self.point_chunks:
            return np.empty((0, 3))
        return np.vstack(self.point_chunks)


def admissible_partitions(ledger: PartitionLedger) -> set[int]:
    """Sectors a new view may come from under the partitioning strategy."""
    every = set(range(ledger.beta))
    if not ledger.scanned or ledger.scanned == every:
        return every
    adjacent = set()
    for p in ledger.scanned:
        adjacent.add((p - 1) % ledger.beta)
        adjacent.add((p + 1) % ledger.beta)
    return adjacent - ledger.scanned


def select_next_view(
    scored: list[CandidateView], ledger: PartitionLedger, iteration: int = 0
) -> CandidateView:
    """Argmax of F over the admissible partitions; marks the winner's sector.

    Ties break toward the lower candidate index.  Raises
    InfeasiblePartitionError when no candidate sits in an admissible sector.
    """
    if not scored:
        raise ValueError("select_next_view requires scored candidates")
    allowed = admissible_partitions(ledger)
    best = None
    for idx, view in enumerate(scored):
        if view.partition_index not in allowed:
            continue
        if view.score is None:
            raise ValueError("candidate lacks a score")
        if best is None or view.score > scored[best].score:
            best = idx
    if best is None:
        raise InfeasiblePartitionError(
            f"no candidate in admissible partitions {sorted(allowed)}"
        )
    winner = scored[best]
    ledger.mark(winner.partition_index, iteration)
    return winner


def should_terminate(state: PlannerState) -> bool:
    """Budget exhausted, or the frontier has been empty twice in a row."""
    if state.iteration >= state.config.iterations:
        return True
    return state.empty_frontier_streak >= 2


# ---- observation plumbing ---------------------------------------------------


def _observe(state: PlannerState, pose: Pose, frame_seed: int) -> Observation | None:
    """Render from `pose`, accumulate P_f, and build the ray observation."""
    cfg = state.config
    t0 = time.perf_counter()
    frame = render_depth(
        state.mesh, pose, cfg.intrinsics(), noise_sigma=cfg.noise_sigma, noise_seed=frame_seed
    )
    points = frame_to_points(frame)
    if state.timings:
        state.timings[-1].render_s += time.perf_counter() - t0

    lo, hi = state.grid.span
    if len(points):
        in_box = np.all((points >= lo) & (points <= hi), axis=1)
        cropped = points[in_box]
    else:
        cropped = points
    if len(cropped) == 0:
        log.warning("all-miss observation at iteration %d", state.iteration)
        return None
    state.point_chunks.append(cropped)

    deduped = preprocess_points(
        cropped, lo, hi, spacing=cfg.resolution / 2.0, align_origin=state.grid.origin
    )
    return Observation(points=deduped, sensor_origin=pose.translation)


def _integrate_and_refit(state: PlannerState, obs: Observation | None, view_dir: np.ndarray, first: bool) -> None:
    cfg = state.config
    if obs is not None:
        integrate_observation(state.grid, obs)
        if first:
            # Rule 2 is inert until the box exists: initialize it from the
            # occupied cells, then rerun the (idempotent) integration so the
            # occlusion shadow gets marked inside the new box.
            update_bbox(state.grid, view_dir, first_frame=True, gamma=cfg.gamma_value)
            integrate_observation(state.grid, obs)
        else:
            update_bbox(state.grid, view_dir, first_frame=False, gamma=cfg.gamma_value)
        update_frontier(state.grid)
    if state.grid.bbox is not None:
        seed = cfg.seed + 7919 * (state.iteration + 1)
        state.e_o, state.e_f = refit_all(
            state.grid, t_max=cfg.t_max, seed=seed, mvee_tol=cfg.mvee_tol
        )
    state.empty_frontier_streak = 0 if state.e_f else state.empty_frontier_streak + 1


def initialize(mesh: TriangleMesh, config: RunConfig) -> PlannerState:
    """Build the grid and integrate the preset initial observation."""
    half = config.workspace_half
    grid = VoxelGrid.from_box(
        np.array([-half, -half, -half]), np.array([half, half, half]), config.resolution
    )
    state = PlannerState(config=config, grid=grid, mesh=mesh)

    polar = np.deg2rad(config.initial_polar_deg)
    azimuth = np.deg2rad(config.initial_azimuth_deg)
    r0 = config.initial_radius_value
    position = r0 * np.array(
        [np.sin(polar) * np.cos(azimuth), np.sin(polar) * np.sin(azimuth), np.cos(polar)]
    )
    pose = look_at(position, np.zeros(3), np.array([0.0, 0.0, 1.0]))

    obs = _observe(state, pose, frame_seed=config.seed)
    if obs is None:
        raise RuntimeError("initial observation saw nothing: empty first observation")
    _integrate_and_refit(state, obs, pose.optical_axis, first=True)
    return state


def _score_candidates(state: PlannerState, candidates: list[CandidateView]) -> None:
    cfg = state.config
    if cfg.evaluator == "projection":
        evaluate_all(candidates, state.e_o, state.e_f, cfg.intrinsics())
    elif cfg.evaluator == "oracle":
        for v in candidates:
            v.score = float(
                oracle_evaluate(v, state.grid, cfg.intrinsics(), cfg.stride).visible_frontier
            )
    else:  # random baseline
        rng = np.random.default_rng((cfg.seed, state.iteration))
        scores = rng.random(len(candidates))
        for v, s in zip(candidates, scores):
            v.score = float(s)


def run_iteration(state: PlannerState) -> CandidateView:
    """One NBV step: sample, score, select, observe, update, refit."""
    cfg = state.config
    timing = IterationTiming()
    state.timings.append(timing)

    t0 = time.perf_counter()
    if state.grid.bbox is None:
        raise RuntimeError("planner state not initialized")
    radius = sampling_radius(state.grid.bbox, cfg.d_c)
    center = 0.5 * (state.grid.bbox[0] + state.grid.bbox[1])
    sampling = SamplingConfig(
        mode=cfg.mode, alpha=cfg.alpha, n_views=cfg.candidates, working_distance=cfg.d_c
    )
    candidates = sample_candidates(sampling, center, radius)
    assign_partitions(candidates, cfg.beta)
    _score_candidates(state, candidates)
    try:
        chosen = select_next_view(candidates, state.ledger, iteration=state.iteration)
    except InfeasiblePartitionError:
        log.warning("partition constraint infeasible; widening to all sectors")
        state.ledger.scanned = set(range(cfg.beta))
        chosen = select_next_view(candidates, state.ledger, iteration=state.iteration)
    timing.selection_s = time.perf_counter() - t0

    obs = _observe(state, chosen.pose, frame_seed=cfg.seed + state.iteration + 1)

    t0 = time.perf_counter()
    _integrate_and_refit(state, obs, chosen.pose.optical_axis, first=False)
    timing.update_s = time.perf_counter() - t0

    state.history.append(chosen)
    state.iteration += 1
    return chosen
