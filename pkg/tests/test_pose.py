import math

import pytest

from adcloud.errors import NonPositiveDt, StaleGps, TimeAlignmentError
from adcloud.mapgen.pose import (
    FuseConfig,
    GpsSample,
    ImuSample,
    OdomSample,
    PoseEstimate,
    fuse_trajectory,
    gps_correct,
    propagate,
)
from adcloud.mapgen import simulate


def pose0():
    return PoseEstimate(t=0, x=0.0, y=0.0, theta=0.0)


def test_zero_motion_changes_only_time():
    out = propagate(pose0(), OdomSample(0, 0.0), ImuSample(0, 0.0), dt=0.5)
    assert (out.x, out.y, out.theta) == (0.0, 0.0, 0.0)
    assert out.t == 500_000_000


def test_straight_line_step():
    out = propagate(pose0(), OdomSample(0, 1.0), ImuSample(0, 0.0), dt=1.0)
    assert out.x == pytest.approx(1.0)
    assert out.y == 0.0
    assert out.theta == 0.0


def test_nonpositive_dt():
    with pytest.raises(NonPositiveDt):
        propagate(pose0(), OdomSample(0, 1.0), ImuSample(0, 0.0), dt=0.0)


def test_small_steps_converge_to_exact_arc():
    # constant twist: v = 2 m/s, w = 0.5 rad/s over 2 s
    v, w, total = 2.0, 0.5, 2.0
    exact_x, exact_y, _ = simulate.exact_step(0.0, 0.0, 0.0, v, w, total)

    errors = []
    for n_steps in (10, 100, 1000):
        pose = pose0()
        dt = total / n_steps
        for _ in range(n_steps):
            pose = propagate(pose, OdomSample(0, v), ImuSample(0, w), dt)
        errors.append(math.hypot(pose.x - exact_x, pose.y - exact_y))
    assert errors[2] < errors[1] < errors[0]
    assert errors[2] < 1e-4
    # midpoint integration is second order: error drops ~100x per 10x steps
    assert errors[1] / errors[2] > 50


def test_gps_with_huge_sigma_changes_nothing():
    pose = PoseEstimate(t=0, x=3.0, y=4.0, theta=0.2)
    corrected, sigma = gps_correct(pose, GpsSample(0, 100.0, 100.0, 1e9), sigma_prop=1.0)
    assert corrected.x == pytest.approx(3.0, abs=1e-12)
    assert corrected.y == pytest.approx(4.0, abs=1e-12)
    assert corrected.source == "CORRECTED"


def test_gps_snaps_when_propagation_is_uncertain():
    pose = PoseEstimate(t=0, x=3.0, y=4.0, theta=0.2)
    corrected, sigma = gps_correct(pose, GpsSample(0, 10.0, -2.0, 0.001), sigma_prop=1e6)
    assert corrected.x == pytest.approx(10.0, abs=1e-6)
    assert corrected.y == pytest.approx(-2.0, abs=1e-6)
    assert sigma < 1e6


def test_stale_gps_rejected():
    pose = PoseEstimate(t=0, x=0.0, y=0.0, theta=0.0)
    with pytest.raises(StaleGps):
        gps_correct(pose, GpsSample(10_000_000_000, 0, 0, 1.0), sigma_prop=1.0)


def test_fuse_requires_aligned_streams():
    odom = [OdomSample(0, 1.0), OdomSample(100, 1.0)]
    imu = [ImuSample(0, 0.0), ImuSample(101, 0.0)]
    with pytest.raises(TimeAlignmentError):
        fuse_trajectory(pose0(), odom, imu, [])


def test_corrected_trajectory_beats_dead_reckoning():
    drive = simulate.generate_drive(simulate.DriveConfig(duration_s=30, seed=3))
    start = drive.truth[0]
    config = FuseConfig()
    propagated = fuse_trajectory(start, drive.odom, drive.imu, [], config, use_gps=False)
    corrected = fuse_trajectory(start, drive.odom, drive.imu, drive.gps, config)

    rms_prop = simulate.rms_position_error(propagated, drive.truth)
    rms_corr = simulate.rms_position_error(corrected, drive.truth)
    assert rms_corr < rms_prop
    assert any(p.source == "CORRECTED" for p in corrected)


def test_simulator_scan_geometry_is_full_rank():
    import numpy as np

    drive = simulate.generate_drive(simulate.DriveConfig(duration_s=10, seed=1))
    for _t, scan in drive.scans:
        assert len(scan) >= 9
        centered = scan[:, :3] - scan[:, :3].mean(axis=0)
        s = np.linalg.svd(centered, compute_uv=False)
        assert s[2] > 1e-6 * s[0]
