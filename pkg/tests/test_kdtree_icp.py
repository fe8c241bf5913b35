import math

import numpy as np
import pytest

from adcloud.errors import DegenerateGeometry, NoCorrespondences
from adcloud.mapgen import (
    IcpParams,
    KdTree,
    RigidTransform,
    brute_force_nearest,
    icp_align,
    kabsch,
    rot_z,
    stitch,
)
from adcloud.mapgen.geometry import planar_transform
from adcloud.mapgen.pose import PoseEstimate


def random_cloud(rng, n=500, scale=10.0):
    pts = rng.uniform(-scale, scale, (n, 3))
    pts[:, 2] = rng.uniform(0.0, 3.0, n)
    return pts


def random_transform(rng, max_angle=math.radians(10), max_translation=0.5):
    angle = rng.uniform(-max_angle, max_angle)
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    k = np.array([
        [0, -axis[2], axis[1]],
        [axis[2], 0, -axis[0]],
        [-axis[1], axis[0], 0],
    ])
    rotation = np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)
    translation = rng.uniform(-max_translation, max_translation, 3)
    return RigidTransform(rotation, translation)


# --- kdtree -----------------------------------------------------------------------

def test_kdtree_matches_brute_force_on_small_clouds():
    rng = np.random.default_rng(0)
    for case in range(50):
        n = int(rng.integers(2, 200))
        targets = random_cloud(rng, n)
        queries = random_cloud(rng, int(rng.integers(1, 100)))
        tree = KdTree(targets)
        tree_idx, tree_dist = tree.query_batch(queries)
        brute_idx, brute_dist = brute_force_nearest(targets, queries)
        assert np.array_equal(tree_idx, brute_idx), f"case {case}"
        assert np.allclose(tree_dist, brute_dist, atol=0, rtol=0)


def test_kdtree_exact_hit():
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [2.0, 0.0, 1.0]])
    tree = KdTree(pts)
    idx, dist = tree.query(np.array([1.0, 1.0, 1.0]))
    assert idx == 1
    assert dist == 0.0


# --- kabsch ------------------------------------------------------------------------

def test_kabsch_recovers_planted_transform_exactly():
    rng = np.random.default_rng(4)
    src = random_cloud(rng, 100)
    planted = random_transform(rng)
    dst = planted.apply(src)
    recovered = kabsch(src, dst)
    assert np.allclose(recovered.rotation, planted.rotation, atol=1e-9)
    assert np.allclose(recovered.translation, planted.translation, atol=1e-9)


def test_kabsch_collinear_points_degenerate():
    src = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    with pytest.raises(DegenerateGeometry):
        kabsch(src, src)


def test_kabsch_coplanar_points_degenerate():
    rng = np.random.default_rng(5)
    src = random_cloud(rng, 50)
    src[:, 2] = 0.0
    with pytest.raises(DegenerateGeometry):
        kabsch(src, src)


# --- icp ----------------------------------------------------------------------------

def test_icp_identity_when_target_equals_source():
    rng = np.random.default_rng(1)
    cloud = random_cloud(rng)
    transform, residual, history = icp_align(cloud, cloud)
    assert residual < 1e-12
    assert transform.rotation_angle() < 1e-9
    assert np.linalg.norm(transform.translation) < 1e-9


def test_icp_recovers_5deg_rotation_and_translation():
    rng = np.random.default_rng(2)
    source = random_cloud(rng, 500)
    planted = RigidTransform(rot_z(math.radians(5)), np.array([0.3, -0.2, 0.0]))
    target = planted.apply(source)
    transform, residual, _ = icp_align(source, target)
    delta = transform.compose(planted.inverse())
    assert delta.rotation_angle() <= 1e-3
    assert np.linalg.norm(transform.translation - planted.translation) <= 1e-3
    assert residual < 1e-6


def test_icp_transform_recovery_100_random_cases():
    rng = np.random.default_rng(3)
    for case in range(100):
        source = random_cloud(rng, 500)
        planted = random_transform(rng)
        target = planted.apply(source)
        transform, _residual, history = icp_align(source, target)
        delta = transform.compose(planted.inverse())
        assert delta.rotation_angle() <= 1e-3, f"case {case}"
        assert np.linalg.norm(delta.translation) <= 1e-3, f"case {case}"
        for prev, cur in zip(history, history[1:]):
            assert cur <= prev + 1e-12, f"case {case}: residual increased"
        transform.check_valid()


def test_icp_noisy_recovery_within_noise_model_tolerance():
    # Tolerances derived from the noise model: centroid translation error has
    # rms sigma*sqrt(3/N); the weakest rotation axis is set by the smallest
    # per-axis point spread. Both get a 3x (three-sigma) margin.
    rng = np.random.default_rng(6)
    sigma = 0.01
    n = 500
    for case in range(20):
        source = random_cloud(rng, n)
        planted = random_transform(rng)
        target = planted.apply(source) + sigma * rng.standard_normal((n, 3))
        transform, _residual, _ = icp_align(source, target)
        delta = transform.compose(planted.inverse())

        trans_tol = 3 * sigma * math.sqrt(3 / n)
        centered = source - source.mean(axis=0)
        min_spread = math.sqrt(float((centered**2).mean(axis=0).min()))
        rot_tol = 3 * sigma / (min_spread * math.sqrt(n))
        assert np.linalg.norm(delta.translation) <= trans_tol, f"case {case}"
        assert delta.rotation_angle() <= rot_tol, f"case {case}"


def test_icp_empty_scan_rejected():
    with pytest.raises(NoCorrespondences):
        icp_align(np.zeros((0, 3)), np.ones((3, 3)))


def test_icp_gate_excluding_everything():
    rng = np.random.default_rng(7)
    cloud = random_cloud(rng, 50)
    far = cloud + 100.0
    with pytest.raises(NoCorrespondences):
        icp_align(cloud, far, params=IcpParams(max_correspondence_distance=0.5))


# --- stitch -------------------------------------------------------------------------

def make_pose(t, x, y, theta):
    return PoseEstimate(t=t, x=x, y=y, theta=theta, source="PROPAGATED")


def test_stitch_single_scan_is_anchored_unchanged():
    rng = np.random.default_rng(8)
    scan = random_cloud(rng, 50)
    pose = make_pose(0, 1.0, 2.0, 0.5)
    world, refined = stitch([scan], [pose])
    assert len(world) == 1
    expected = planar_transform(1.0, 2.0, 0.5).apply(scan)
    assert np.allclose(world[0], expected)
    assert refined[0].source == "ICP_REFINED"
    assert (refined[0].x, refined[0].y) == (1.0, 2.0)


def test_stitch_refines_toward_truth_against_drifted_seed():
    rng = np.random.default_rng(9)
    landmarks = random_cloud(rng, 400, scale=15.0)
    true_a = planar_transform(0.0, 0.0, 0.0)
    true_b = planar_transform(1.0, 0.2, 0.05)
    scan_a = true_a.inverse().apply(landmarks)
    scan_b = true_b.inverse().apply(landmarks)

    drifted = make_pose(1, 1.08, 0.13, 0.06)  # odometry-only guess for pose b
    world, refined = stitch([scan_a, scan_b], [make_pose(0, 0, 0, 0.0), drifted])

    err_refined = math.hypot(refined[1].x - 1.0, refined[1].y - 0.2)
    err_odom = math.hypot(drifted.x - 1.0, drifted.y - 0.2)
    assert err_refined < err_odom
    assert err_refined < 1e-3


def test_stitch_shuffled_order_rejected():
    rng = np.random.default_rng(10)
    scans = [random_cloud(rng, 30) for _ in range(2)]
    poses = [make_pose(5, 0, 0, 0), make_pose(3, 1, 0, 0)]
    from adcloud.errors import TimeAlignmentError

    with pytest.raises(TimeAlignmentError):
        stitch(scans, poses)
