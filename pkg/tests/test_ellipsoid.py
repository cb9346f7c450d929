import numpy as np
import pytest

from nbvplan.ellipsoid import (
    Ellipsoid,
    InfeasibleModelError,
    bic,
    fit_gmm,
    fit_mvee,
    refit_all,
    responsibilities,
    select_components,
)
from nbvplan.voxel import VoxelGrid, VoxelState


def mixture_sample(rng, means, sigma, n_per):
    parts = [m + sigma * rng.normal(size=(n_per, 3)) for m in means]
    return np.vstack(parts)


# ---- fit_gmm ----------------------------------------------------------------


def test_gmm_degenerate_single_point():
    pts = np.tile([1.0, 2.0, 3.0], (100, 1))
    model, assign = fit_gmm(pts, t=1, seed=0, reg_floor=0.01)
    np.testing.assert_allclose(model.means[0], [1.0, 2.0, 3.0], atol=1e-12)
    np.testing.assert_allclose(model.covariances[0], 0.01 * np.eye(3), atol=1e-12)
    assert np.all(assign.labels == 0)


def test_gmm_separated_clusters_recovered():
    rng = np.random.default_rng(1)
    sigma = 0.05
    n_per = 1000
    means = [np.zeros(3), np.array([10 * sigma, 0, 0])]
    pts = mixture_sample(rng, means, sigma, n_per)
    model, assign = fit_gmm(pts, t=2, seed=4, reg_floor=1e-8)
    order = np.argsort(model.means[:, 0])
    got = model.means[order]
    np.testing.assert_allclose(got[0], means[0], atol=0.1 * sigma)
    np.testing.assert_allclose(got[1], means[1], atol=0.1 * sigma)
    # with 10-sigma separation EM means coincide with per-cluster sample means
    np.testing.assert_allclose(got[0], pts[:n_per].mean(axis=0), atol=1e-6)
    np.testing.assert_allclose(got[1], pts[n_per:].mean(axis=0), atol=1e-6)
    # labels pure per true cluster
    first, second = assign.labels[:n_per], assign.labels[n_per:]
    assert len(set(first.tolist())) == 1
    assert len(set(second.tolist())) == 1
    assert first[0] != second[0]


def test_gmm_infeasible_raises():
    with pytest.raises(InfeasibleModelError):
        fit_gmm(np.zeros((2, 3)), t=3, seed=0)


@pytest.mark.parametrize("seed", range(20))
def test_gmm_loglik_monotone(seed):
    rng = np.random.default_rng(seed)
    t = int(rng.integers(1, 5))
    pts = mixture_sample(rng, rng.uniform(-1, 1, (t, 3)), 0.2, 60)
    model, _ = fit_gmm(pts, t=t, seed=seed, reg_floor=1e-6)
    diffs = np.diff(model.ll_trace)
    assert np.all(diffs >= -1e-9)


def test_gmm_responsibilities_normalized():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(150, 3))
    model, _ = fit_gmm(pts, t=3, seed=5)
    resp = responsibilities(model, pts)
    np.testing.assert_allclose(resp.sum(axis=1), 1.0, atol=1e-9)
    assert abs(model.weights.sum() - 1.0) < 1e-9


def test_gmm_covariance_floor_holds():
    rng = np.random.default_rng(9)
    pts = rng.normal(size=(80, 3)) * np.array([1.0, 1e-6, 1e-6])  # nearly collinear
    floor = 1e-4
    model, _ = fit_gmm(pts, t=2, seed=1, reg_floor=floor)
    for cov in model.covariances:
        assert np.linalg.eigvalsh(cov).min() >= floor - 1e-12


# ---- bic / select_components -------------------------------------------------


def test_bic_direct_substitution():
    # k ln(n) - 2 ln L; with T=1 components k = 9
    model, _ = fit_gmm(np.random.default_rng(0).normal(size=(50, 3)), t=1, seed=0)
    model.log_likelihood = -200.0
    assert bic(model, 100) == pytest.approx(9 * np.log(100) + 400.0, abs=1e-9)
    # ln(1) = 0 -> BIC = -2 ln L regardless of k
    assert bic(model, 1) == pytest.approx(400.0, abs=1e-12)


def test_bic_k_linearity():
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(60, 3))
    m1, _ = fit_gmm(pts, t=1, seed=0)
    m2, _ = fit_gmm(pts, t=2, seed=0)
    m2.log_likelihood = m1.log_likelihood  # same likelihood, k grows by 10
    assert bic(m2, 60) - bic(m1, 60) == pytest.approx(10 * np.log(60), abs=1e-9)


def test_select_single_blob():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(300, 3)) * 0.05
    t_star, model, _ = select_components(pts, t_max=10, seed=0, reg_floor=1e-8)
    assert t_star == 1


def test_select_three_blobs():
    rng = np.random.default_rng(5)
    sigma = 0.05
    means = [np.zeros(3), np.array([10 * sigma, 0, 0]), np.array([0, 10 * sigma, 0])]
    pts = mixture_sample(rng, means, sigma, 150)
    t_star, _, _ = select_components(pts, t_max=10, seed=0, reg_floor=1e-8)
    assert t_star == 3


def test_select_clamps_to_point_count():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    t_star, _, _ = select_components(pts, t_max=10, seed=0, reg_floor=1e-6)
    assert t_star in (1, 2)


def test_select_deterministic():
    rng = np.random.default_rng(6)
    pts = rng.normal(size=(200, 3))
    a = select_components(pts, t_max=6, seed=11)
    b = select_components(pts, t_max=6, seed=11)
    assert a[0] == b[0]
    np.testing.assert_array_equal(a[1].means, b[1].means)
    np.testing.assert_array_equal(a[2].labels, b[2].labels)


# ---- fit_mvee ---------------------------------------------------------------


def test_mvee_cube_corners_gives_sphere():
    corners = np.array(
        [[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float
    )
    ell = fit_mvee(corners, tol=1e-6)
    np.testing.assert_allclose(ell.center, 0.0, atol=1e-6)
    np.testing.assert_allclose(ell.shape, np.eye(3) / 3.0, atol=1e-4)


def test_mvee_identical_points_inflated_ball():
    pts = np.tile([0.5, -0.2, 0.1], (7, 1))
    r = 0.015
    ell = fit_mvee(pts, tol=1e-6, inflation_radius=r)
    np.testing.assert_allclose(ell.center, [0.5, -0.2, 0.1], atol=1e-9)
    np.testing.assert_allclose(ell.shape, np.eye(3) / r**2, rtol=1e-3, atol=1e-3 / r**2)


def test_mvee_degenerate_without_radius_raises():
    pts = np.tile([0.0, 0.0, 0.0], (5, 1))
    with pytest.raises(ValueError):
        fit_mvee(pts, tol=1e-3)


def test_mvee_empty_raises():
    with pytest.raises(ValueError):
        fit_mvee(np.empty((0, 3)))


def random_containing_ellipsoid_volume(points, rng):
    """One random candidate ellipsoid guaranteed to contain the points."""
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    scales = rng.uniform(0.3, 3.0, 3)
    a = (q * (1.0 / scales**2)) @ q.T
    center = points.mean(axis=0) + rng.normal(scale=0.05, size=3)
    d = points - center
    worst = np.einsum("ij,jk,ik->i", d, a, d).max()
    a = a / worst
    return 4.0 / 3.0 * np.pi / np.sqrt(np.linalg.det(a))


@pytest.mark.parametrize("n_points,seed", [(50, 0), (8, 1), (5, 2), (8, 3)])
def test_mvee_containment_and_volume_vs_randomized_oracle(n_points, seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n_points, 3))
    ell = fit_mvee(pts, tol=1e-4)
    assert ell.form(pts).max() <= 1.0 + 1e-4

    best = np.inf
    for _ in range(100_000):
        best = min(best, random_containing_ellipsoid_volume(pts, rng))
    assert ell.volume <= best * 1.01


def test_mvee_quadric_consistency():
    rng = np.random.default_rng(8)
    pts = rng.normal(size=(30, 3))
    ell = fit_mvee(pts, tol=1e-6)
    # random surface points: x = c + A^(-1/2) u with |u| = 1
    vals, vecs = np.linalg.eigh(ell.shape)
    inv_sqrt = (vecs / np.sqrt(vals)) @ vecs.T
    u = rng.normal(size=(100, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    surface = ell.center + u @ inv_sqrt
    x_h = np.column_stack([surface, np.ones(100)])
    residual = np.einsum("ij,jk,ik->i", x_h, ell.quadric, x_h)
    assert np.abs(residual).max() <= 1e-8 * np.linalg.norm(ell.quadric)


def test_ellipsoid_quadric_block_structure():
    a = np.diag([4.0, 1.0, 0.25])
    c = np.array([0.5, -1.0, 2.0])
    ell = Ellipsoid(center=c, shape=a, kind="occupied", member_count=3)
    np.testing.assert_allclose(ell.quadric[:3, :3], a)
    np.testing.assert_allclose(ell.quadric[:3, 3], -a @ c)
    np.testing.assert_allclose(ell.quadric[3, 3], c @ a @ c - 1.0)
    np.testing.assert_allclose(ell.quadric @ ell.quadric_inv, np.eye(4), atol=1e-9)


# ---- refit_all ---------------------------------------------------------------


def blob_grid(with_frontier=False):
    grid = VoxelGrid(origin=np.zeros(3), resolution=0.03, dims=(20, 20, 20))
    g3 = grid.grid3d()
    g3[4:9, 4:9, 4:9] = VoxelState.OCCUPIED
    if with_frontier:
        g3[4:9, 4:9, 12:16] = VoxelState.FRONTIER
    grid.set_bbox(*grid.span)
    return grid


def test_refit_blob_no_frontier():
    e_o, e_f = refit_all(blob_grid(), t_max=5, seed=0)
    assert len(e_o) >= 1
    assert e_f == []
    assert all(e.kind == "occupied" for e in e_o)


def test_refit_requires_occupied():
    grid = VoxelGrid(origin=np.zeros(3), resolution=0.03, dims=(8, 8, 8))
    with pytest.raises(ValueError):
        refit_all(grid, t_max=5, seed=0)


def test_refit_containment_sweep():
    grid = blob_grid(with_frontier=True)
    e_o, e_f = refit_all(grid, t_max=6, seed=3)
    assert len(e_f) >= 1
    for kind, state, ells in (
        ("occupied", VoxelState.OCCUPIED, e_o),
        ("frontier", VoxelState.FRONTIER, e_f),
    ):
        centers = grid.voxel_centers(grid.unflat(grid.indices_in_state(state)))
        forms = np.min([e.form(centers) for e in ells], axis=0)
        assert forms.max() <= 1.0 + 1e-3 + 1e-9, kind
    assert sum(e.member_count for e in e_o) == len(
        grid.indices_in_state(VoxelState.OCCUPIED)
    )
