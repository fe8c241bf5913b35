"""Rigid transforms and angle helpers for the map pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateGeometry

_ORTHO_TOL = 1e-9


def normalize_angle(theta: float) -> float:
    """Wrap into (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray     # 3x3, orthonormal, det +1
    translation: np.ndarray  # 3

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self ∘ other)(p) = self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rot_t = self.rotation.T
        return RigidTransform(rot_t, -(rot_t @ self.translation))

    def orthonormality_error(self) -> float:
        return float(np.max(np.abs(self.rotation.T @ self.rotation - np.eye(3))))

    def det_error(self) -> float:
        return abs(float(np.linalg.det(self.rotation)) - 1.0)

    def check_valid(self) -> None:
        if self.orthonormality_error() > _ORTHO_TOL or self.det_error() > _ORTHO_TOL:
            raise DegenerateGeometry("rotation is not a proper orthonormal matrix")

    def rotation_angle(self) -> float:
        """Magnitude of the rotation, in radians."""
        cos_theta = (np.trace(self.rotation) - 1.0) / 2.0
        return float(np.arccos(np.clip(cos_theta, -1.0, 1.0)))

    def yaw(self) -> float:
        return float(math.atan2(self.rotation[1, 0], self.rotation[0, 0]))


def rot_z(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def planar_transform(x: float, y: float, theta: float) -> RigidTransform:
    return RigidTransform(rot_z(theta), np.array([x, y, 0.0]))
