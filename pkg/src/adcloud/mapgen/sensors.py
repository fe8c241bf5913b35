"""Payload codecs for the four map-input bag topics.

odom = f8 speed; imu = f8 yaw rate; gps = 3*f8 (x, y, sigma);
lidar = u32-LE point count + per point 4*f8-LE (x, y, z, reflectance).
"""

from __future__ import annotations

import struct

import numpy as np

from .pose import GpsSample, ImuSample, OdomSample

_F8 = struct.Struct("<d")
_GPS = struct.Struct("<3d")
_U32 = struct.Struct("<I")


def encode_odom(sample: OdomSample) -> tuple:
    return ("odom", sample.t, _F8.pack(sample.speed))


def decode_odom(record) -> OdomSample:
    return OdomSample(record[1], _F8.unpack(record[2])[0])


def encode_imu(sample: ImuSample) -> tuple:
    return ("imu", sample.t, _F8.pack(sample.yaw_rate))


def decode_imu(record) -> ImuSample:
    return ImuSample(record[1], _F8.unpack(record[2])[0])


def encode_gps(sample: GpsSample) -> tuple:
    return ("gps", sample.t, _GPS.pack(sample.x, sample.y, sample.sigma))


def decode_gps(record) -> GpsSample:
    x, y, sigma = _GPS.unpack(record[2])
    return GpsSample(record[1], x, y, sigma)


def encode_lidar(t: int, points: np.ndarray) -> tuple:
    payload = _U32.pack(len(points)) + np.ascontiguousarray(points, dtype="<f8").tobytes()
    return ("lidar", t, payload)


def decode_lidar(record) -> tuple[int, np.ndarray]:
    payload = record[2]
    (count,) = _U32.unpack_from(payload, 0)
    points = np.frombuffer(payload, dtype="<f8", count=count * 4, offset=4)
    return record[1], points.reshape(count, 4).copy()
