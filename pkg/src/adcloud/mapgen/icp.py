"""Point-to-point ICP with the closed-form Kabsch inner step.

Each iteration matches every transformed source point to its nearest target
point (k-d tree, optional distance gate), solves the optimal rigid transform
for the matched pairs by SVD on the centered cross-covariance, and stops
when the parameter change drops below epsilon or the iteration cap hits.
The recorded residual is the RMS correspondence distance, the quantity the
inner step minimizes; with no distance gate it is non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateGeometry, NoCorrespondences, TimeAlignmentError
from .geometry import RigidTransform, planar_transform
from .kdtree import KdTree
from .pose import PoseEstimate

_RANK_TOL = 1e-9


@dataclass
class IcpParams:
    max_iterations: int = 50
    epsilon: float = 1e-10
    max_correspondence_distance: float = np.inf


def kabsch(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Optimal rigid transform mapping source points onto target points.

    Raises DegenerateGeometry when the cross-covariance is rank-deficient
    (collinear or coplanar correspondences admit ambiguous rotations).
    """
    source = np.asarray(source, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if source.shape != target.shape or source.ndim != 2 or source.shape[1] != 3:
        raise ValueError("kabsch needs matching (n, 3) arrays")
    centroid_s = source.mean(axis=0)
    centroid_t = target.mean(axis=0)
    cov = (source - centroid_s).T @ (target - centroid_t)
    u, s, vt = np.linalg.svd(cov)
    if s[0] <= 0.0 or s[2] <= _RANK_TOL * s[0]:
        raise DegenerateGeometry(
            f"cross-covariance rank < 3 (singular values {s.tolist()})"
        )
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rotation = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    translation = centroid_t - rotation @ centroid_s
    return RigidTransform(rotation, translation)


def icp_align(
    source: np.ndarray,
    target: np.ndarray,
    init: RigidTransform | None = None,
    params: IcpParams | None = None,
) -> tuple[RigidTransform, float, list[float]]:
    """Align source onto target; returns (transform, final residual, history)."""
    source = np.asarray(source, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if len(source) == 0 or len(target) == 0:
        raise NoCorrespondences("both scans must be non-empty")
    params = params or IcpParams()
    transform = init or RigidTransform.identity()

    tree = KdTree(target)
    history: list[float] = []
    for _ in range(params.max_iterations):
        moved = transform.apply(source)
        idx, dist = tree.query_batch(moved)
        mask = dist <= params.max_correspondence_distance
        if not mask.any():
            raise NoCorrespondences(
                f"no pairs within {params.max_correspondence_distance} m"
            )
        new_transform = kabsch(source[mask], target[idx[mask]])
        new_transform.check_valid()

        aligned = new_transform.apply(source[mask])
        residual = float(np.sqrt(np.mean(
            np.sum((aligned - target[idx[mask]]) ** 2, axis=1)
        )))
        history.append(residual)

        delta = new_transform.compose(transform.inverse())
        change = delta.rotation_angle() + float(np.linalg.norm(delta.translation))
        transform = new_transform
        if change < params.epsilon:
            break
    return transform, history[-1], history


def stitch(
    scans: list[np.ndarray],
    poses: list,
    params: IcpParams | None = None,
) -> tuple[list[np.ndarray], list]:
    """Chain consecutive-pair ICP alignments into one world frame.

    ``poses`` are fused planar PoseEstimates time-aligned with ``scans``
    (same count, increasing timestamps). Pair i is seeded with the relative
    pose between fused poses i-1 and i; the refined chain is anchored at the
    first fused pose. Scans may carry extra per-point columns (reflectance);
    alignment uses the first three and extras pass through untransformed.
    Returns world-frame point arrays and refined poses.
    """
    if len(scans) != len(poses):
        raise TimeAlignmentError(f"{len(scans)} scans vs {len(poses)} poses")
    if not scans:
        raise NoCorrespondences("no scans to stitch")
    for prev, cur in zip(poses, poses[1:]):
        if cur.t <= prev.t:
            raise TimeAlignmentError("scan timestamps must be strictly increasing")

    xyz = [np.asarray(s, dtype=np.float64)[:, :3] for s in scans]
    world_transforms = [planar_transform(poses[0].x, poses[0].y, poses[0].theta)]
    for i in range(1, len(scans)):
        prev_fused = planar_transform(poses[i - 1].x, poses[i - 1].y, poses[i - 1].theta)
        cur_fused = planar_transform(poses[i].x, poses[i].y, poses[i].theta)
        seed = prev_fused.inverse().compose(cur_fused)
        relative, _residual, _hist = icp_align(xyz[i], xyz[i - 1], seed, params)
        world_transforms.append(world_transforms[i - 1].compose(relative))

    world_scans = [
        np.concatenate([t.apply(pts), np.asarray(scan)[:, 3:]], axis=1)
        if np.asarray(scan).shape[1] > 3 else t.apply(pts)
        for t, scan, pts in zip(world_transforms, scans, xyz)
    ]
    refined = [
        PoseEstimate(
            t=pose.t,
            x=float(t.translation[0]),
            y=float(t.translation[1]),
            theta=t.yaw(),
            source="ICP_REFINED",
        )
        for pose, t in zip(poses, world_transforms)
    ]
    return world_scans, refined
