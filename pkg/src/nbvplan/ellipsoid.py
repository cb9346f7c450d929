"""Voxel-cluster ellipsoid fitting.

Occupied and frontier voxel centers are clustered with a full-covariance
Gaussian mixture trained by EM, the component count is picked by BIC, and
each hard-assigned cluster is wrapped in a minimum-volume enclosing
ellipsoid (Khachiyan iterative reweighting) expressed both as a
center/shape-matrix pair and as a homogeneous 4x4 quadric.

EM keeps every covariance's eigenvalues at or above a floor by clipping the
M-step scatter eigenvalues.  Clipping is the constrained M-step maximizer,
so the log-likelihood stays non-decreasing, which plain diagonal loading
does not guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EM_TOL = 1e-6       # |delta ln L| convergence threshold
EM_MAX_ITER = 200
MVEE_MAX_ITER = 1000
_LOG_2PI = np.log(2.0 * np.pi)


class InfeasibleModelError(ValueError):
    """Requested more mixture components than there are points."""


@dataclass
class GmmModel:
    weights: np.ndarray        # (T,) mixing weights, sum to 1
    means: np.ndarray          # (T, 3)
    covariances: np.ndarray    # (T, 3, 3) symmetric, eigenvalues >= reg floor
    log_likelihood: float
    ll_trace: np.ndarray       # per-iteration ln L, non-decreasing
    reg_floor: float

    @property
    def n_components(self) -> int:
        return len(self.weights)


@dataclass
class ClusterAssignment:
    labels: np.ndarray                 # (N,) hard component index per point
    clusters: list[np.ndarray]         # per-component point arrays (may be empty)


@dataclass
class Ellipsoid:
    """Surface {x : (x-c)^T A (x-c) = 1} with its homogeneous quadric."""

    center: np.ndarray      # (3,)
    shape: np.ndarray       # (3, 3) symmetric positive definite (1/m^2)
    kind: str               # "occupied" | "frontier"
    member_count: int
    cluster_index: int = 0
    quadric: np.ndarray = field(init=False)       # 4x4, X^T Q X = 0 on surface
    quadric_inv: np.ndarray = field(init=False)   # dual quadric Q* = Q^-1

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(3)
        a = np.asarray(self.shape, dtype=float).reshape(3, 3)
        a = 0.5 * (a + a.T)
        self.center = c
        self.shape = a
        q = np.empty((4, 4))
        q[:3, :3] = a
        q[:3, 3] = -a @ c
        q[3, :3] = -a @ c
        q[3, 3] = c @ a @ c - 1.0
        self.quadric = q
        self.quadric_inv = np.linalg.inv(q)

    def form(self, points: np.ndarray) -> np.ndarray:
        """(x-c)^T A (x-c) per point; <= 1 means inside."""
        d = np.atleast_2d(points) - self.center
        return np.einsum("ij,jk,ik->i", d, self.shape, d)

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * np.pi / np.sqrt(np.linalg.det(self.shape))

    @property
    def semi_axes(self) -> np.ndarray:
        """Semi-axis lengths, major first."""
        return 1.0 / np.sqrt(np.linalg.eigvalsh(self.shape))


# ---- Gaussian mixture via EM ------------------------------------------------


def _farthest_point_means(points: np.ndarray, t: int, rng: np.random.Generator) -> np.ndarray:
    """Deterministic-for-seed farthest-point seeding of component means."""
    first = int(rng.integers(len(points)))
    chosen = [first]
    d2 = np.einsum("ij,ij->i", points - points[first], points - points[first])
    for _ in range(1, t):
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        cand = np.einsum("ij,ij->i", points - points[nxt], points - points[nxt])
        d2 = np.minimum(d2, cand)
    return points[chosen].copy()


def _floor_covariance(cov: np.ndarray, floor: float) -> np.ndarray:
    """Clip eigenvalues from below; the constrained M-step optimum."""
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def _log_gaussian(points: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    chol = np.linalg.cholesky(cov)
    d = points - mean
    sol = np.linalg.solve(chol, d.T)
    maha = np.einsum("ji,ji->i", sol, sol)
    log_det = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (3.0 * _LOG_2PI + log_det + maha)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def fit_gmm(
    points: np.ndarray,
    t: int,
    seed: int,
    reg_floor: float = 1e-6,
) -> tuple[GmmModel, ClusterAssignment]:
    """EM fit of a `t`-component full-covariance mixture in 3D.

    Initialization: farthest-point means, shared sample covariance scaled by
    1/t, uniform weights.  Raises InfeasibleModelError when t > len(points).
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(points)
    if t < 1:
        raise ValueError("component count must be >= 1")
    if n < t:
        raise InfeasibleModelError(f"{t} components but only {n} points")

    rng = np.random.default_rng(seed)
    means = _farthest_point_means(points, t, rng)
    base_cov = np.cov(points.T, bias=True) if n > 1 else np.zeros((3, 3))
    base_cov = _floor_covariance(np.atleast_2d(base_cov) / t, reg_floor)
    covs = np.repeat(base_cov[None, :, :], t, axis=0)
    weights = np.full(t, 1.0 / t)

    trace = []
    log_resp = None
    for _ in range(EM_MAX_ITER):
        # E-step
        log_prob = np.stack(
            [_log_gaussian(points, means[k], covs[k]) for k in range(t)], axis=1
        )
        weighted = log_prob + np.log(weights)
        ll = float(_logsumexp(weighted, axis=1).sum())
        log_resp = weighted - _logsumexp(weighted, axis=1)[:, None]
        resp = np.exp(log_resp)

        if trace and abs(ll - trace[-1]) < EM_TOL:
            trace.append(ll)
            break
        trace.append(ll)

        # M-step
        nk = resp.sum(axis=0) + 10.0 * np.finfo(float).eps
        weights = nk / nk.sum()
        means = (resp.T @ points) / nk[:, None]
        for k in range(t):
            d = points - means[k]
            scatter = (resp[:, k][:, None] * d).T @ d / nk[k]
            covs[k] = _floor_covariance(scatter, reg_floor)

    labels = np.argmax(log_resp, axis=1)
    clusters = [points[labels == k] for k in range(t)]
    model = GmmModel(
        weights=weights,
        means=means,
        covariances=covs,
        log_likelihood=trace[-1],
        ll_trace=np.array(trace),
        reg_floor=reg_floor,
    )
    return model, ClusterAssignment(labels=labels, clusters=clusters)


def responsibilities(model: GmmModel, points: np.ndarray) -> np.ndarray:
    """Posterior component probabilities per point, rows summing to 1."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    log_prob = np.stack(
        [
            _log_gaussian(points, model.means[k], model.covariances[k])
            for k in range(model.n_components)
        ],
        axis=1,
    )
    weighted = log_prob + np.log(model.weights)
    return np.exp(weighted - _logsumexp(weighted, axis=1)[:, None])


def bic(model: GmmModel, n: int) -> float:
    """k*ln(n) - 2*ln(L) with k = 10*T - 1 (3 mean + 6 covariance + 1 weight
    per component, minus the sum-to-one weight constraint)."""
    if n < 1:
        raise ValueError("sample count must be >= 1")
    k = 10 * model.n_components - 1
    return k * np.log(n) - 2.0 * model.log_likelihood


def select_components(
    points: np.ndarray,
    t_max: int,
    seed: int,
    reg_floor: float = 1e-6,
) -> tuple[int, GmmModel, ClusterAssignment]:
    """Fit T = 1..min(t_max, N) and keep the smallest-BIC model.

    Ties break toward fewer components; per-T fits use seeds derived from
    `seed` so the whole search is reproducible.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        raise ValueError("select_components requires points")
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    n = len(points)
    best = None
    for t in range(1, min(t_max, n) + 1):
        model, assign = fit_gmm(points, t, seed=seed + t, reg_floor=reg_floor)
        score = bic(model, n)
        if best is None or score < best[0] - 1e-12:
            best = (score, t, model, assign)
    _, t_star, model, assign = best
    return t_star, model, assign


# ---- minimum-volume enclosing ellipsoid -------------------------------------


def _inflate_degenerate(points: np.ndarray, radius: float) -> np.ndarray:
    """Add +-radius offsets along each axis per point (rank repair)."""
    offsets = np.vstack([np.eye(3), -np.eye(3)]) * radius
    return (points[:, None, :] + offsets[None, :, :]).reshape(-1, 3)


def _points_rank(points: np.ndarray) -> int:
    if len(points) < 2:
        return 0
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    scale = sv[0] if sv[0] > 0 else 1.0
    return int(np.count_nonzero(sv > 1e-9 * max(scale, 1.0)))


def _khachiyan(points: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Core iterative reweighting on homogenized points; returns (center, A)."""
    n, d = points.shape
    q = np.column_stack([points, np.ones(n)])  # lifted to R^{d+1}
    u = np.full(n, 1.0 / n)
    center = points.T @ u
    a_mat = None
    for _ in range(MVEE_MAX_ITER):
        x = q.T * u @ q
        m = np.einsum("ij,jk,ik->i", q, np.linalg.inv(x), q)
        j = int(np.argmax(m))
        kappa = m[j]

        center = points.T @ u
        scatter = (points.T * u) @ points - np.outer(center, center)
        a_mat = np.linalg.inv(scatter) / d
        forms = np.einsum("ij,jk,ik->i", points - center, a_mat, points - center)
        if forms.max() <= 1.0 + tol:
            break

        step = (kappa - d - 1.0) / ((d + 1.0) * (kappa - 1.0))
        u = (1.0 - step) * u
        u[j] += step

    forms = np.einsum("ij,jk,ik->i", points - center, a_mat, points - center)
    worst = forms.max()
    if worst > 1.0 + tol:
        a_mat = a_mat / worst  # containment guarantee when the cap was hit
    return center, a_mat


def fit_mvee(
    points: np.ndarray,
    tol: float = 1e-3,
    inflation_radius: float | None = None,
    kind: str = "occupied",
    cluster_index: int = 0,
) -> Ellipsoid:
    """Minimum-volume enclosing ellipsoid of a point set.

    Degenerate inputs (fewer than 4 points or affine rank < 3) are inflated by
    +-inflation_radius offsets along each axis before fitting; without a
    radius such inputs raise.  All original points satisfy
    (x-c)^T A (x-c) <= 1 + tol in the result.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("fit_mvee requires at least one point")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    member_count = len(pts)

    work = pts
    if len(work) < 4 or _points_rank(work) < 3:
        if inflation_radius is None or inflation_radius <= 0:
            raise ValueError(
                "degenerate point set: supply inflation_radius to repair rank"
            )
        work = _inflate_degenerate(work, inflation_radius)

    # Only convex-hull vertices can carry weight; pre-reducing keeps the
    # iteration cheap on big voxel clusters.
    if len(work) > 32:
        try:
            from scipy.spatial import ConvexHull

            hull = ConvexHull(work)
            work = work[np.sort(hull.vertices)]
        except Exception:
            pass  # QhullError on near-degenerate input: fit the full set

    center, a_mat = _khachiyan(work, tol)
    ell = Ellipsoid(
        center=center,
        shape=a_mat,
        kind=kind,
        member_count=member_count,
        cluster_index=cluster_index,
    )
    worst = ell.form(pts).max()
    if worst > 1.0 + tol:
        ell = Ellipsoid(
            center=center,
            shape=a_mat / worst,
            kind=kind,
            member_count=member_count,
            cluster_index=cluster_index,
        )
    return ell


# ---- full refit over the voxel grid ----------------------------------------


def refit_all(
    grid,
    t_max: int,
    seed: int,
    mvee_tol: float = 1e-3,
) -> tuple[list[Ellipsoid], list[Ellipsoid]]:
    """Cluster Occupied and Frontier voxel centers and fit each cluster.

    Returns (occupied ellipsoids, frontier ellipsoids); the frontier list is
    empty when the grid has no Frontier voxels.  The covariance floor and the
    degeneracy inflation radius derive from the grid resolution.
    """
    from .voxel import VoxelState

    reg_floor = (grid.resolution / 4.0) ** 2
    inflation = grid.resolution / 2.0

    out: dict[str, list[Ellipsoid]] = {"occupied": [], "frontier": []}
    for kind, state, sub in (
        ("occupied", VoxelState.OCCUPIED, 0),
        ("frontier", VoxelState.FRONTIER, 1),
    ):
        flat = grid.indices_in_state(state)
        if kind == "occupied" and len(flat) == 0:
            raise ValueError("refit_all requires at least one Occupied voxel")
        if len(flat) == 0:
            continue
        centers = grid.voxel_centers(grid.unflat(flat))
        _, _, assign = select_components(
            centers, t_max=t_max, seed=seed * 2 + sub, reg_floor=reg_floor
        )
        idx = 0
        for cluster in assign.clusters:
            if len(cluster) == 0:
                continue
            out[kind].append(
                fit_mvee(
                    cluster,
                    tol=mvee_tol,
                    inflation_radius=inflation,
                    kind=kind,
                    cluster_index=idx,
                )
            )
            idx += 1
    return out["occupied"], out["frontier"]


def dump_ellipsoids(path: str, iteration: int, ellipsoids: list[Ellipsoid]) -> None:
    """Append a per-iteration text record of each ellipsoid."""
    with open(path, "a") as fh:
        for e in ellipsoids:
            a = " ".join(f"{v:.9g}" for v in e.shape.reshape(-1))
            c = " ".join(f"{v:.9g}" for v in e.center)
            fh.write(
                f"iter={iteration} kind={e.kind} index={e.cluster_index} "
                f"members={e.member_count} center={c} shape={a}\n"
            )
