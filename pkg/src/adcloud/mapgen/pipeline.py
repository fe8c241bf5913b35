"""The HD-map pipeline as engine stages.

Stages over one time-merged sensor dataset: fuse (propagation + GPS
correction), stitch (pairwise ICP chaining), rasterize (partial grids),
merge (reduce). In pipelined mode all four run inside a single submitted
job, so the intermediates never leave the cache tiers; staged mode submits
them as separate jobs whose outputs persist. Both modes produce the final
grid from identical per-stage computations, so the emitted map file is
byte-identical; labeling and file encoding run after the reduce on the
driver, shared by both paths.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from ..engine import Cluster, OpCall, OpKind, StagePlan, register_op
from ..errors import EmptyInput, MapgenError
from ..simharness import read_bag
from . import sensors
from .icp import IcpParams, stitch
from .mapfile import write_mapfile
from .pose import FuseConfig, PoseEstimate, fuse_trajectory, pose_at
from .raster import (
    DEFAULT_CELL_SIZE,
    GridMap,
    GridPartial,
    add_labels,
    finalize_partial,
    merge_partials,
    rasterize_partial,
)

_POSE = struct.Struct("<3d")
_TOPIC_ORDER = {"odom": 0, "imu": 1, "gps": 2, "lidar": 3, "pose": 4, "wscan": 5}


@dataclass
class MapJobConfig:
    log_dir: str
    out_path: str
    cell_size: float = DEFAULT_CELL_SIZE
    labels: dict = field(default_factory=dict)
    pipelined: bool = True
    fuse: FuseConfig = field(default_factory=FuseConfig)
    icp_max_iterations: int = 30
    icp_epsilon: float = 1e-8
    icp_max_correspondence_m: float = 2.0


# --- stage records -------------------------------------------------------------


def encode_pose(pose: PoseEstimate) -> tuple:
    return ("pose", pose.t, _POSE.pack(pose.x, pose.y, pose.theta), pose.source)


def decode_pose(record) -> PoseEstimate:
    x, y, theta = _POSE.unpack(record[2])
    return PoseEstimate(record[1], x, y, theta, record[3])


def encode_partial(partial: GridPartial) -> tuple:
    return (
        "partial",
        partial.min_row,
        partial.min_col,
        partial.height,
        partial.width,
        partial.cell_size,
        np.ascontiguousarray(partial.elevation, dtype="<f8").tobytes(),
        np.ascontiguousarray(partial.refl_sum, dtype="<f8").tobytes(),
        np.ascontiguousarray(partial.hits, dtype="<u4").tobytes(),
    )


def decode_partial(record) -> GridPartial:
    _, min_row, min_col, height, width, cell_size, elev, refl, hits = record
    shape = (height, width)
    return GridPartial(
        cell_size=cell_size,
        min_row=min_row,
        min_col=min_col,
        elevation=np.frombuffer(elev, dtype="<f8").reshape(shape).copy(),
        refl_sum=np.frombuffer(refl, dtype="<f8").reshape(shape).copy(),
        hits=np.frombuffer(hits, dtype="<u4").reshape(shape).copy(),
    )


# --- ops ------------------------------------------------------------------------


def _fuse_op(records, ctx):
    """Sensor records -> pose records, lidar passed through in time order."""
    config = FuseConfig(**ctx.config.get("fuse", {}))
    odom = [sensors.decode_odom(r) for r in records if r[0] == "odom"]
    imu = [sensors.decode_imu(r) for r in records if r[0] == "imu"]
    gps = [sensors.decode_gps(r) for r in records if r[0] == "gps"]
    lidar = [r for r in records if r[0] == "lidar"]
    if not odom:
        raise EmptyInput("no odometry samples to fuse")
    start = PoseEstimate(t=odom[0].t, x=0.0, y=0.0, theta=0.0)
    poses = fuse_trajectory(start, odom, imu, gps, config,
                            use_gps=ctx.config.get("use_gps", True))
    merged = [encode_pose(p) for p in poses] + lidar
    merged.sort(key=lambda r: (r[1], _TOPIC_ORDER[r[0]]))
    return merged


def _stitch_op(records, ctx):
    """Pose + lidar records -> world-frame scans plus refined poses."""
    poses = [decode_pose(r) for r in records if r[0] == "pose"]
    lidar = [sensors.decode_lidar(r) for r in records if r[0] == "lidar"]
    if not lidar:
        raise EmptyInput("no lidar scans to stitch")
    params = IcpParams(
        max_iterations=ctx.config.get("icp_max_iterations", 30),
        epsilon=ctx.config.get("icp_epsilon", 1e-8),
        max_correspondence_distance=ctx.config.get("icp_max_correspondence_m", 2.0),
    )
    scan_poses = [pose_at(poses, t) for t, _ in lidar]
    world_scans, refined = stitch([pts for _, pts in lidar], scan_poses, params)
    out = [encode_pose(p) for p in refined]
    out += [
        ("wscan", t, sensors.encode_lidar(t, pts)[2])
        for (t, _), pts in zip(lidar, world_scans)
    ]
    out.sort(key=lambda r: (r[1], _TOPIC_ORDER[r[0]]))
    return out


def _raster_op(records, ctx):
    scans = [sensors.decode_lidar(r)[1] for r in records if r[0] == "wscan"]
    if not scans:
        return []
    points = np.concatenate(scans, axis=0)
    partial = rasterize_partial(points, ctx.config.get("cell_size", DEFAULT_CELL_SIZE))
    return [encode_partial(partial)]


def _merge_op(records, ctx):
    partials = [decode_partial(r) for r in records]
    merged = partials[0]
    for nxt in partials[1:]:
        merged = merge_partials(merged, nxt)
    return encode_partial(merged)


register_op("map.fuse", OpKind.MAP_PARTITIONS, _fuse_op)
register_op("map.stitch", OpKind.MAP_PARTITIONS, _stitch_op)
register_op("map.rasterize", OpKind.MAP_PARTITIONS, _raster_op)
register_op("map.merge", OpKind.REDUCE, _merge_op)


# --- pipeline driver -----------------------------------------------------------------


def load_merged_sensor_records(log_dir: str) -> list[tuple]:
    """Read the four topic bags and merge them into one time-ordered stream."""
    import os

    streams = []
    for topic in ("odom", "imu", "gps", "lidar"):
        path = os.path.join(log_dir, f"{topic}.adbg")
        if not os.path.exists(path):
            raise MapgenError(f"missing input bag {path}")
        streams.append(read_bag(path))
    merged = list(heapq.merge(
        *streams, key=lambda r: (r[1], _TOPIC_ORDER.get(r[0], 9))
    ))
    return merged


def _stage_ops(config: MapJobConfig) -> list[OpCall]:
    shared = {
        "fuse": asdict(config.fuse),
        "cell_size": config.cell_size,
        "icp_max_iterations": config.icp_max_iterations,
        "icp_epsilon": config.icp_epsilon,
        "icp_max_correspondence_m": config.icp_max_correspondence_m,
    }
    return [
        OpCall("map.fuse", OpKind.MAP_PARTITIONS, dict(shared)),
        OpCall("map.stitch", OpKind.MAP_PARTITIONS, dict(shared)),
        OpCall("map.rasterize", OpKind.MAP_PARTITIONS, dict(shared)),
        OpCall("map.merge", OpKind.REDUCE, dict(shared)),
    ]


def run_map_pipeline(cluster: Cluster, config: MapJobConfig) -> tuple[GridMap, dict]:
    """Load -> fuse -> stitch -> rasterize -> merge -> label, then emit the map."""
    records = load_merged_sensor_records(config.log_dir)
    if not any(r[0] == "lidar" for r in records):
        raise EmptyInput("lidar bag holds no scans; nothing to stitch")
    dataset = cluster.parallelize([records], persist=True, id_hint="maplogs")

    ops = _stage_ops(config)
    jobs = []
    if config.pipelined:
        result = cluster.submit(StagePlan(source=dataset, ops=ops))
        jobs.append(result)
        final_record = result.collected[0]
    else:
        current = dataset
        collected = None
        for op in ops:
            result = cluster.submit(StagePlan(source=current, ops=[op]))
            jobs.append(result)
            current = result.dataset
            collected = result.collected
        final_record = collected[0]

    grid = finalize_partial(decode_partial(final_record))
    grid = add_labels(grid, config.labels or {})
    write_mapfile(grid, config.out_path)

    metrics = {
        "mode": "pipelined" if config.pipelined else "staged",
        "bytes_persisted": sum(j.metrics["bytes_persisted"] for j in jobs),
        "wall_s": sum(j.metrics["wall_s"] for j in jobs),
        "jobs": [j.metrics for j in jobs],
        "out_path": config.out_path,
        "cell_size": config.cell_size,
        "label_warnings": grid.warnings,
    }
    return grid, metrics
