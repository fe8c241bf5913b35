"""Synthetic drive generator: ground-truth trajectory plus noisy sensor bags.

The vehicle follows a piecewise constant-twist path integrated in closed
form (exact arcs), so ground truth is not itself a numeric approximation.
Sensors: wheel odometry with a scale error, IMU yaw rate with a bias, GPS
fixes with Gaussian noise at low rate, and LiDAR scans of a fixed landmark
field (vertical three-point poles, so every scan has full-rank geometry)
expressed in the sensor frame.

Payloads: odom = f8 speed; imu = f8 yaw rate; gps = 3*f8 (x, y, sigma);
lidar = u32 point count + per point 4*f8 (x, y, z, reflectance).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .. import simharness
from . import sensors
from .geometry import normalize_angle, rot_z
from .pose import GpsSample, ImuSample, OdomSample, PoseEstimate

TOPICS = ("odom", "imu", "gps", "lidar")


@dataclass
class DriveConfig:
    duration_s: float = 30.0
    imu_rate_hz: float = 20.0
    gps_rate_hz: float = 1.0
    lidar_rate_hz: float = 2.0
    speed_mps: float = 5.0
    seed: int = 7
    odom_scale_error: float = 1.03
    odom_noise: float = 0.02
    yaw_bias: float = 0.01
    yaw_noise: float = 0.002
    gps_sigma: float = 0.5
    lidar_range_m: float = 25.0
    lidar_noise: float = 0.005
    n_poles: int = 60


def _yaw_profile(t: float, duration: float) -> float:
    """Piecewise constant turn rate: straight, left arc, gentle right."""
    if t < duration / 3:
        return 0.0
    if t < 2 * duration / 3:
        return 0.18
    return -0.08


def exact_step(x: float, y: float, theta: float, v: float, w: float, dt: float):
    """Closed-form constant-twist motion (the ground-truth integrator)."""
    if abs(w) < 1e-12:
        return x + v * dt * math.cos(theta), y + v * dt * math.sin(theta), theta
    theta2 = theta + w * dt
    return (
        x + v / w * (math.sin(theta2) - math.sin(theta)),
        y - v / w * (math.cos(theta2) - math.cos(theta)),
        normalize_angle(theta2),
    )


def ground_truth_trajectory(config: DriveConfig) -> list[PoseEstimate]:
    steps = int(config.duration_s * config.imu_rate_hz)
    dt = 1.0 / config.imu_rate_hz
    poses = [PoseEstimate(t=0, x=0.0, y=0.0, theta=0.0, source="PROPAGATED")]
    x = y = theta = 0.0
    for k in range(1, steps + 1):
        w = _yaw_profile((k - 1) * dt, config.duration_s)
        x, y, theta = exact_step(x, y, theta, config.speed_mps, w, dt)
        poses.append(PoseEstimate(t=round(k * dt * 1e9), x=x, y=y, theta=theta,
                                  source="PROPAGATED"))
    return poses


def _landmarks(config: DriveConfig, truth: list[PoseEstimate], rng) -> np.ndarray:
    """Three-point vertical poles scattered alongside the trajectory."""
    points = []
    picks = rng.integers(0, len(truth), config.n_poles)
    for idx in picks:
        pose = truth[idx]
        lateral = rng.uniform(-12.0, 12.0)
        along = rng.uniform(-3.0, 3.0)
        px = pose.x + along * math.cos(pose.theta) - lateral * math.sin(pose.theta)
        py = pose.y + along * math.sin(pose.theta) + lateral * math.cos(pose.theta)
        reflectance = rng.uniform(0.05, 0.95)
        for z in (0.3, 1.5, 2.8):
            points.append((px, py, z, reflectance))
    return np.array(points)


def scan_at(pose: PoseEstimate, landmarks: np.ndarray, range_m: float,
            noise: float, rng) -> np.ndarray:
    """Landmarks within range, expressed in the sensor frame (n, 4)."""
    dx = landmarks[:, 0] - pose.x
    dy = landmarks[:, 1] - pose.y
    visible = np.hypot(dx, dy) <= range_m
    pts = landmarks[visible]
    rel = np.stack([dx[visible], dy[visible], pts[:, 2]], axis=1)
    sensor = rel @ rot_z(pose.theta)  # world->sensor: R(-theta) applied to rows
    if noise:
        sensor = sensor + noise * rng.standard_normal(sensor.shape)
    return np.concatenate([sensor, pts[:, 3:4]], axis=1)


@dataclass
class Drive:
    config: DriveConfig
    truth: list[PoseEstimate]
    odom: list[OdomSample]
    imu: list[ImuSample]
    gps: list[GpsSample]
    scans: list[tuple[int, np.ndarray]]          # (t, sensor-frame points)
    scan_truth: list[PoseEstimate]               # ground-truth pose per scan


def generate_drive(config: DriveConfig | None = None) -> Drive:
    config = config or DriveConfig()
    rng = np.random.default_rng(config.seed)
    truth = ground_truth_trajectory(config)
    landmarks = _landmarks(config, truth, rng)
    dt = 1.0 / config.imu_rate_hz

    odom, imu = [], []
    for k, pose in enumerate(truth):
        w = _yaw_profile((k - 1) * dt, config.duration_s) if k else 0.0
        odom.append(OdomSample(
            t=pose.t,
            speed=config.speed_mps * config.odom_scale_error
            + config.odom_noise * rng.standard_normal(),
        ))
        imu.append(ImuSample(
            t=pose.t,
            yaw_rate=w + config.yaw_bias + config.yaw_noise * rng.standard_normal(),
        ))

    gps = []
    gps_every = max(1, round(config.imu_rate_hz / config.gps_rate_hz))
    for k in range(0, len(truth), gps_every):
        pose = truth[k]
        gps.append(GpsSample(
            t=pose.t,
            x=pose.x + config.gps_sigma * rng.standard_normal(),
            y=pose.y + config.gps_sigma * rng.standard_normal(),
            sigma=config.gps_sigma,
        ))

    scans, scan_truth = [], []
    lidar_every = max(1, round(config.imu_rate_hz / config.lidar_rate_hz))
    for k in range(0, len(truth), lidar_every):
        pose = truth[k]
        scans.append((pose.t, scan_at(pose, landmarks, config.lidar_range_m,
                                      config.lidar_noise, rng)))
        scan_truth.append(pose)
    return Drive(config, truth, odom, imu, gps, scans, scan_truth)


def write_drive_logs(drive: Drive, out_dir: str) -> dict[str, str]:
    """Write the four bag files plus ground truth; returns topic -> path."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {topic: os.path.join(out_dir, f"{topic}.adbg") for topic in TOPICS}
    simharness.write_bag(paths["odom"], [sensors.encode_odom(s) for s in drive.odom])
    simharness.write_bag(paths["imu"], [sensors.encode_imu(s) for s in drive.imu])
    simharness.write_bag(paths["gps"], [sensors.encode_gps(s) for s in drive.gps])
    simharness.write_bag(paths["lidar"], [
        sensors.encode_lidar(t, points) for t, points in drive.scans
    ])
    truth_path = os.path.join(out_dir, "ground_truth.json")
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump(
            [{"t": p.t, "x": p.x, "y": p.y, "theta": p.theta} for p in drive.truth],
            fh,
        )
    paths["ground_truth"] = truth_path
    return paths


def rms_position_error(poses: list[PoseEstimate], truth: list[PoseEstimate]) -> float:
    """RMS distance between pose sequences joined by timestamp."""
    truth_by_t = {p.t: p for p in truth}
    errors = [
        (p.x - truth_by_t[p.t].x) ** 2 + (p.y - truth_by_t[p.t].y) ** 2
        for p in poses
        if p.t in truth_by_t
    ]
    return math.sqrt(sum(errors) / len(errors))
