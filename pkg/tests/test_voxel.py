import numpy as np
import pytest

from nbvplan.geometry import CameraIntrinsics, look_at
from nbvplan.render import frame_to_points, render_depth
from nbvplan.shapes import make_sphere
from nbvplan.voxel import (
    Observation,
    VoxelGrid,
    VoxelState,
    _BatchWalk,
    integrate_observation,
    preprocess_points,
    traverse_ray,
    update_bbox,
    update_frontier,
)


def unit_grid(n=8, resolution=1.0):
    return VoxelGrid(origin=np.zeros(3), resolution=resolution, dims=(n, n, n))


def dense_sampling_voxels(grid, start, end, substeps=100):
    """Oracle: sample the segment at resolution/substeps and collect voxels."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    length = np.linalg.norm(end - start)
    n = max(int(length / (grid.resolution / substeps)), 2)
    t = np.linspace(0.0, 1.0, n)
    pts = start + t[:, None] * (end - start)
    ijk = grid.voxel_of(pts)
    ok = grid.in_bounds(ijk)
    seen = set(map(tuple, ijk[ok]))
    return seen, length / n


def segment_chord_in_voxel(grid, start, end, voxel):
    """Exact chord length of the segment inside one voxel (slab clipping)."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    lo = grid.origin + np.asarray(voxel) * grid.resolution
    hi = lo + grid.resolution
    d = end - start
    t0, t1 = 0.0, 1.0
    for ax in range(3):
        if d[ax] == 0.0:
            if not (lo[ax] <= start[ax] <= hi[ax]):
                return 0.0
        else:
            ta = (lo[ax] - start[ax]) / d[ax]
            tb = (hi[ax] - start[ax]) / d[ax]
            if ta > tb:
                ta, tb = tb, ta
            t0, t1 = max(t0, ta), min(t1, tb)
    return max(0.0, t1 - t0) * np.linalg.norm(d)


# ---- traverse_ray -----------------------------------------------------------


def test_traverse_axis_aligned():
    grid = unit_grid()
    out = traverse_ray(grid, [0.5, 0.5, 0.5], [3.5, 0.5, 0.5])
    np.testing.assert_array_equal(out, [[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]])


def test_traverse_single_voxel():
    grid = unit_grid()
    out = traverse_ray(grid, [2.5, 2.5, 2.5], [2.5 + 1e-9, 2.5, 2.5])
    np.testing.assert_array_equal(out, [[2, 2, 2]])


def test_traverse_requires_distinct_endpoints():
    grid = unit_grid()
    with pytest.raises(ValueError):
        traverse_ray(grid, [1, 1, 1], [1, 1, 1])


def test_traverse_outside_grid_empty():
    grid = unit_grid()
    out = traverse_ray(grid, [20, 20, 20], [30, 20, 20])
    assert out.shape == (0, 3)


def test_traverse_matches_dense_sampling_oracle():
    """Sampled voxels must all be walked; any walked voxel the sampler missed
    must be a genuine sub-step corner sliver (exact chord shorter than the
    sampling step, but still positive: the segment really pierces it)."""
    grid = unit_grid(10, resolution=0.37)
    rng = np.random.default_rng(42)
    for _ in range(300):
        start = rng.uniform(-1.0, 4.7, 3)
        end = rng.uniform(-1.0, 4.7, 3)
        if np.allclose(start, end):
            continue
        walked = set(map(tuple, traverse_ray(grid, start, end)))
        sampled, step = dense_sampling_voxels(grid, start, end)
        assert sampled <= walked
        for voxel in walked - sampled:
            chord = segment_chord_in_voxel(grid, start, end, voxel)
            assert 0.0 < chord < step


def test_traverse_ordered_no_duplicates():
    grid = unit_grid(12, resolution=0.5)
    rng = np.random.default_rng(7)
    for _ in range(200):
        start = rng.uniform(-2, 8, 3)
        end = rng.uniform(-2, 8, 3)
        if np.allclose(start, end):
            continue
        walked = traverse_ray(grid, start, end)
        if len(walked) == 0:
            continue
        keys = set(map(tuple, walked))
        assert len(keys) == len(walked)
        # entry distance strictly increases along the ray
        centers = grid.voxel_centers(walked)
        d = end - start
        proj = (centers - start) @ d / np.linalg.norm(d)
        assert np.all(np.diff(proj) > 0)


def test_batch_walk_matches_scalar():
    grid = unit_grid(9, resolution=0.61)
    rng = np.random.default_rng(3)
    starts = rng.uniform(-2, 8, (50, 3))
    ends = rng.uniform(-2, 8, (50, 3))
    walk = _BatchWalk(grid, starts, ends - starts, t_end=np.ones(50))
    batch_paths = [[] for _ in range(50)]
    while walk.alive.any():
        flats = walk.flat()
        for i in np.nonzero(walk.alive)[0]:
            batch_paths[i].append(tuple(grid.unflat([flats[i]])[0]))
        walk.advance()
    for i in range(50):
        scalar = [tuple(v) for v in traverse_ray(grid, starts[i], ends[i])]
        assert batch_paths[i] == scalar


# ---- integrate_observation --------------------------------------------------


def test_integrate_single_ray_semantics():
    grid = VoxelGrid(origin=np.array([-1.0, -1.0, -1.0]), resolution=0.1, dims=(40, 40, 40))
    grid.set_bbox(np.array([-1.0, -1.0, -1.0]), np.array([3.0, 3.0, 3.0]))
    sensor = np.array([-0.95, 0.05, 0.05])
    point = np.array([0.05, 0.05, 0.05])  # 1 m ahead
    counts = integrate_observation(grid, Observation(points=[point], sensor_origin=sensor))

    assert counts["to_occupied"] == 1
    occ = grid.indices_in_state(VoxelState.OCCUPIED)
    assert len(occ) == 1
    np.testing.assert_array_equal(grid.unflat(occ)[0], grid.voxel_of(point)[0])

    path = traverse_ray(grid, sensor, point)
    occ_ijk = grid.voxel_of(point)[0]
    for ijk in path:
        state = grid.states[grid.flat_index([ijk])[0]]
        if tuple(ijk) == tuple(occ_ijk):
            assert state == VoxelState.OCCUPIED
        else:
            assert state == VoxelState.EMPTY

    # behind the hit (within B): unknown
    behind = grid.voxel_of(point + np.array([0.35, 0.0, 0.0]))[0]
    assert grid.states[grid.flat_index([behind])[0]] == VoxelState.UNKNOWN


def test_integrate_idempotent():
    grid = VoxelGrid(origin=np.zeros(3), resolution=0.1, dims=(30, 30, 30))
    grid.set_bbox(np.zeros(3), np.full(3, 3.0))
    rng = np.random.default_rng(0)
    pts = rng.uniform(1.0, 2.0, (50, 3))
    obs = Observation(points=pts, sensor_origin=np.array([0.05, 0.05, 0.05]))
    integrate_observation(grid, obs)
    snapshot = grid.states.copy()
    counts = integrate_observation(grid, obs)
    np.testing.assert_array_equal(grid.states, snapshot)
    assert counts["to_occupied"] == 0
    assert counts["to_empty"] == 0
    assert counts["to_unknown"] == 0


def test_integrate_requires_points():
    grid = unit_grid()
    with pytest.raises(ValueError):
        integrate_observation(grid, Observation(points=np.empty((0, 3)), sensor_origin=np.zeros(3)))


def test_occupied_never_demoted():
    grid = VoxelGrid(origin=np.zeros(3), resolution=0.5, dims=(10, 10, 10))
    grid.set_bbox(np.zeros(3), np.full(3, 5.0))
    p = np.array([2.25, 2.25, 2.25])
    integrate_observation(grid, Observation(points=[p], sensor_origin=np.array([0.1, 2.25, 2.25])))
    n_occ = len(grid.indices_in_state(VoxelState.OCCUPIED))
    # a ray passing straight through the occupied voxel from the other side
    integrate_observation(
        grid,
        Observation(points=[np.array([0.75, 2.25, 2.25])], sensor_origin=np.array([4.9, 2.25, 2.25])),
    )
    assert len(grid.indices_in_state(VoxelState.OCCUPIED)) >= n_occ
    assert grid.states[grid.flat_index(grid.voxel_of(p))[0]] == VoxelState.OCCUPIED


def _observe_sphere(grid, mesh, cam_pos):
    intr = CameraIntrinsics(fx=300, fy=300, cx=160, cy=120, width=320, height=240, max_range=5.0)
    pose = look_at(cam_pos, [0, 0, 0], [0, 0, 1])
    frame = render_depth(mesh, pose, intr)
    pts = frame_to_points(frame)
    lo, hi = grid.span
    pts = preprocess_points(pts, lo, hi, spacing=grid.resolution / 2, align_origin=grid.origin)
    return Observation(points=pts, sensor_origin=pose.translation)


def test_opposing_observations_reduce_unknown():
    """Within a fixed box snug around the object (one voxel of margin, as the
    adaptive box produces), a second opposing view resolves more occlusion
    Unknowns than its own new shadow introduces."""
    mesh = make_sphere(radius=0.15)
    grid = VoxelGrid(origin=np.full(3, -0.4), resolution=0.03, dims=(27, 27, 27))
    fixed_b = (np.full(3, -0.18), np.full(3, 0.18))
    grid.set_bbox(*fixed_b)

    obs1 = _observe_sphere(grid, mesh, [0.6, 0.0, 0.0])
    integrate_observation(grid, obs1)
    unknown_after_first = grid.state_counts()["unknown"]

    obs2 = _observe_sphere(grid, mesh, [-0.6, 0.0, 0.0])
    integrate_observation(grid, obs2)
    unknown_after_both = grid.state_counts()["unknown"]

    assert unknown_after_first > 0
    assert unknown_after_both < unknown_after_first


def test_state_transition_system():
    """Only the documented transitions may ever occur."""
    allowed = {
        (VoxelState.NONE, VoxelState.EMPTY),
        (VoxelState.NONE, VoxelState.OCCUPIED),
        (VoxelState.NONE, VoxelState.UNKNOWN),
        (VoxelState.UNKNOWN, VoxelState.FRONTIER),
        (VoxelState.UNKNOWN, VoxelState.EMPTY),
        (VoxelState.UNKNOWN, VoxelState.OCCUPIED),
        (VoxelState.FRONTIER, VoxelState.EMPTY),
        (VoxelState.FRONTIER, VoxelState.OCCUPIED),
        (VoxelState.FRONTIER, VoxelState.UNKNOWN),
        (VoxelState.EMPTY, VoxelState.OCCUPIED),
    }
    mesh = make_sphere(radius=0.15)
    grid = VoxelGrid(origin=np.full(3, -0.4), resolution=0.04, dims=(20, 20, 20))
    grid.set_bbox(np.full(3, -0.3), np.full(3, 0.3))
    rng = np.random.default_rng(1)

    def check_step(prev):
        changed = np.nonzero(prev != grid.states)[0]
        for idx in changed:
            t = (VoxelState(prev[idx]), VoxelState(grid.states[idx]))
            assert t in allowed, f"illegal transition {t}"
        return grid.states.copy()

    prev = grid.states.copy()
    for k in range(5):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        obs = _observe_sphere(grid, mesh, 0.6 * direction)
        if len(obs.points) == 0:
            continue
        integrate_observation(grid, obs)
        prev = check_step(prev)
        update_frontier(grid)
        prev = check_step(prev)


# ---- update_frontier --------------------------------------------------------


def brute_force_frontier(grid):
    """Direct evaluation of the frontier predicate over every voxel."""
    g3 = grid.grid3d()
    nz, ny, nx = g3.shape
    out = set()
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if g3[z, y, x] not in (VoxelState.UNKNOWN, VoxelState.FRONTIER):
                    continue
                has_e = has_o = False
                for dz in (-1, 0, 1):
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            if dx == dy == dz == 0:
                                continue
                            zz, yy, xx = z + dz, y + dy, x + dx
                            if 0 <= zz < nz and 0 <= yy < ny and 0 <= xx < nx:
                                if g3[zz, yy, xx] == VoxelState.EMPTY:
                                    has_e = True
                                elif g3[zz, yy, xx] == VoxelState.OCCUPIED:
                                    has_o = True
                if has_e and has_o:
                    out.add(x + nx * (y + ny * z))
    return out


def test_frontier_basic_neighborhood():
    grid = unit_grid(5)
    g3 = grid.grid3d()
    g3[2, 2, 2] = VoxelState.UNKNOWN
    g3[2, 2, 1] = VoxelState.EMPTY
    g3[2, 2, 3] = VoxelState.OCCUPIED
    frontier = update_frontier(grid)
    assert list(frontier) == [2 + 5 * (2 + 5 * 2)]


def test_unknown_surrounded_by_unknown_not_frontier():
    grid = unit_grid(5)
    grid.states[:] = VoxelState.UNKNOWN
    frontier = update_frontier(grid)
    assert len(frontier) == 0
    assert np.all(grid.states == VoxelState.UNKNOWN)


def test_frontier_reverts_to_unknown():
    grid = unit_grid(5)
    g3 = grid.grid3d()
    g3[2, 2, 2] = VoxelState.UNKNOWN
    g3[2, 2, 1] = VoxelState.EMPTY
    g3[2, 2, 3] = VoxelState.OCCUPIED
    update_frontier(grid)
    assert grid.grid3d()[2, 2, 2] == VoxelState.FRONTIER
    g3 = grid.grid3d()
    g3[2, 2, 1] = VoxelState.OCCUPIED  # empty neighbor vanishes
    update_frontier(grid)
    assert grid.grid3d()[2, 2, 2] == VoxelState.UNKNOWN


@pytest.mark.parametrize("seed", range(10))
def test_frontier_matches_brute_force(seed):
    grid = unit_grid(5)
    rng = np.random.default_rng(seed)
    grid.states[:] = rng.choice(
        [int(s) for s in VoxelState], size=grid.n_voxels, p=[0.3, 0.25, 0.15, 0.25, 0.05]
    ).astype(np.uint8)
    expected = brute_force_frontier(grid)
    got = set(update_frontier(grid).tolist())
    assert got == expected
    # every frontier satisfies the predicate, every unknown violates it
    assert set(grid.indices_in_state(VoxelState.FRONTIER).tolist()) == expected


# ---- update_bbox ------------------------------------------------------------


def test_bbox_requires_occupied():
    grid = unit_grid()
    with pytest.raises(ValueError):
        update_bbox(grid, [1, 0, 0], first_frame=True)


def test_bbox_first_frame_doubles_diagonal_along_view():
    grid = VoxelGrid(origin=np.zeros(3), resolution=1.0, dims=(20, 20, 20))
    g3 = grid.grid3d()
    g3[5:8, 5:8, 5:8] = VoxelState.OCCUPIED  # cube of cells, bbox [5,8]^3
    bmin, bmax = update_bbox(grid, [1.0, 0.0, 0.0], first_frame=True)
    base_diag = np.sqrt(27.0)
    new_diag = np.linalg.norm(bmax - bmin)
    assert new_diag == pytest.approx(2.0 * base_diag, rel=1e-9)
    # growth entirely on the far side along +x
    np.testing.assert_allclose(bmin, [5.0, 5.0, 5.0])
    np.testing.assert_allclose(bmax[1:], [8.0, 8.0])
    assert bmax[0] > 8.0


def test_bbox_later_no_unknown_no_frontier():
    grid = VoxelGrid(origin=np.zeros(3), resolution=1.0, dims=(10, 10, 10))
    g3 = grid.grid3d()
    g3[2:4, 3:5, 4:6] = VoxelState.OCCUPIED
    bmin, bmax = update_bbox(grid, [0, 0, 1.0], first_frame=False)
    np.testing.assert_allclose(bmin, [4.0, 3.0, 2.0])  # x,y,z from (z,y,x) slices
    np.testing.assert_allclose(bmax, [6.0, 5.0, 4.0])


def test_bbox_frontier_sphere_inflation():
    grid = VoxelGrid(origin=np.zeros(3), resolution=1.0, dims=(12, 12, 12))
    g3 = grid.grid3d()
    g3[5, 5, 5] = VoxelState.OCCUPIED
    g3[8, 8, 8] = VoxelState.FRONTIER
    gamma = 2.0  # 2 * resolution
    bmin, bmax = update_bbox(grid, [0, 0, 1.0], first_frame=False, gamma=gamma)
    center = np.array([8.5, 8.5, 8.5])
    np.testing.assert_allclose(bmax, center + gamma)
    np.testing.assert_allclose(bmin, [5.0, 5.0, 5.0])


def test_bbox_contains_occupied_every_frame():
    mesh = make_sphere(radius=0.15)
    grid = VoxelGrid(origin=np.full(3, -0.4), resolution=0.03, dims=(27, 27, 27))
    rng = np.random.default_rng(2)
    first = True
    for _ in range(4):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        obs = _observe_sphere(grid, mesh, 0.6 * direction)
        integrate_observation(grid, obs)
        bmin, bmax = update_bbox(grid, -direction, first_frame=first)
        if first:
            integrate_observation(grid, obs)
            first = False
        update_frontier(grid)
        occ = grid.voxel_centers(grid.unflat(grid.indices_in_state(VoxelState.OCCUPIED)))
        assert np.all(occ >= bmin) and np.all(occ <= bmax)


# ---- grid plumbing ----------------------------------------------------------


def test_preprocess_crop_and_dedup():
    pts = np.array([
        [0.5, 0.5, 0.5],
        [0.51, 0.5, 0.5],    # same dedup cell at spacing 0.05
        [0.58, 0.5, 0.5],    # different cell
        [5.0, 5.0, 5.0],     # outside box
    ])
    out = preprocess_points(pts, np.zeros(3), np.ones(3), spacing=0.05, align_origin=np.zeros(3))
    assert len(out) == 2
    np.testing.assert_allclose(out[0], [0.5, 0.5, 0.5])


def test_grid_growth_preserves_states():
    grid = VoxelGrid(origin=np.zeros(3), resolution=1.0, dims=(4, 4, 4))
    grid.grid3d()[1, 2, 3] = VoxelState.OCCUPIED
    center_before = grid.voxel_centers(grid.unflat(grid.indices_in_state(VoxelState.OCCUPIED)))
    grid.ensure_contains(np.array([-3.0, -1.0, 0.0]), np.array([6.0, 4.0, 4.0]))
    center_after = grid.voxel_centers(grid.unflat(grid.indices_in_state(VoxelState.OCCUPIED)))
    np.testing.assert_allclose(center_after, center_before)
    assert np.all(grid.dims >= 4)


def test_dump_ply(tmp_path):
    grid = unit_grid(4)
    grid.grid3d()[0, 0, 0] = VoxelState.OCCUPIED
    grid.grid3d()[1, 1, 1] = VoxelState.FRONTIER
    path = tmp_path / "voxels.ply"
    grid.dump_ply(str(path))
    text = path.read_text()
    assert "element vertex 2" in text
    assert "property int state" in text
