"""Planar pose propagation from wheel odometry + IMU, corrected by GPS.

Propagation integrates speed and yaw rate with the midpoint heading
(second order: N steps of dt/N converge to the exact constant-turn arc as
O(dt^2)). GPS blending is a complementary filter: gain
k = sigma_prop^2 / (sigma_prop^2 + sigma_gps^2), where sigma_prop grows
linearly with distance traveled since the last correction and shrinks by
sqrt(1 - k) when one is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import NonPositiveDt, StaleGps, TimeAlignmentError
from .geometry import normalize_angle

PROPAGATED = "PROPAGATED"
CORRECTED = "CORRECTED"
ICP_REFINED = "ICP_REFINED"


@dataclass(frozen=True)
class PoseEstimate:
    t: int          # ns
    x: float        # m
    y: float
    theta: float    # rad, in (-pi, pi]
    source: str = PROPAGATED


@dataclass(frozen=True)
class OdomSample:
    t: int
    speed: float    # m/s


@dataclass(frozen=True)
class ImuSample:
    t: int
    yaw_rate: float  # rad/s


@dataclass(frozen=True)
class GpsSample:
    t: int
    x: float
    y: float
    sigma: float    # m, > 0


@dataclass
class FuseConfig:
    sigma0: float = 0.05            # m, baseline position uncertainty
    drift_per_meter: float = 0.05   # sigma_prop growth per meter traveled
    gps_window_s: float = 0.5       # association window


def propagate(prev: PoseEstimate, odom: OdomSample, imu: ImuSample, dt: float) -> PoseEstimate:
    if dt <= 0:
        raise NonPositiveDt(f"dt={dt}")
    mid_heading = prev.theta + imu.yaw_rate * dt / 2.0
    return PoseEstimate(
        t=prev.t + round(dt * 1e9),
        x=prev.x + odom.speed * dt * math.cos(mid_heading),
        y=prev.y + odom.speed * dt * math.sin(mid_heading),
        theta=normalize_angle(prev.theta + imu.yaw_rate * dt),
        source=PROPAGATED,
    )


def gps_correct(
    pose: PoseEstimate,
    gps: GpsSample,
    sigma_prop: float,
    window_s: float = 0.5,
) -> tuple[PoseEstimate, float]:
    """Blend toward the GPS fix; returns (corrected pose, shrunk sigma_prop)."""
    if abs(gps.t - pose.t) > window_s * 1e9:
        raise StaleGps(f"gps at {gps.t} vs pose at {pose.t}")
    k = sigma_prop**2 / (sigma_prop**2 + gps.sigma**2)
    corrected = PoseEstimate(
        t=pose.t,
        x=(1.0 - k) * pose.x + k * gps.x,
        y=(1.0 - k) * pose.y + k * gps.y,
        theta=pose.theta,
        source=CORRECTED,
    )
    return corrected, math.sqrt(1.0 - k) * sigma_prop


def fuse_trajectory(
    start: PoseEstimate,
    odom: list[OdomSample],
    imu: list[ImuSample],
    gps: list[GpsSample],
    config: FuseConfig | None = None,
    use_gps: bool = True,
) -> list[PoseEstimate]:
    """Dead-reckon through paired odom/imu samples, applying GPS fixes in order.

    Odom and imu streams must be sample-aligned (equal length and equal
    timestamps); the first pair seeds the clock, so propagation spans
    sample k-1 to k.
    """
    config = config or FuseConfig()
    if len(odom) != len(imu):
        raise TimeAlignmentError(f"{len(odom)} odom vs {len(imu)} imu samples")
    for o, m in zip(odom, imu):
        if o.t != m.t:
            raise TimeAlignmentError(f"odom at {o.t} vs imu at {m.t}")

    poses = [start]
    sigma_prop = config.sigma0
    gps_queue = sorted(gps, key=lambda g: g.t)
    gps_pos = 0
    pose = start
    for k in range(1, len(odom)):
        dt = (odom[k].t - odom[k - 1].t) / 1e9
        pose = propagate(pose, odom[k], imu[k], dt)
        sigma_prop += config.drift_per_meter * abs(odom[k].speed) * dt
        if use_gps:
            while gps_pos < len(gps_queue) and gps_queue[gps_pos].t <= pose.t:
                fix = gps_queue[gps_pos]
                gps_pos += 1
                if abs(fix.t - pose.t) <= config.gps_window_s * 1e9:
                    pose, sigma_prop = gps_correct(pose, fix, sigma_prop, config.gps_window_s)
        poses.append(pose)
    return poses


def pose_at(poses: list[PoseEstimate], t: int) -> PoseEstimate:
    """Pose with timestamp nearest to t (poses sorted by time)."""
    if not poses:
        raise TimeAlignmentError("no poses")
    best = min(poses, key=lambda p: abs(p.t - t))
    return best
