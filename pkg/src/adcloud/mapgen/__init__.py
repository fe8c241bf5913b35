from .geometry import RigidTransform, normalize_angle, rot_z
from .kdtree import KdTree, brute_force_nearest
from .icp import IcpParams, icp_align, kabsch, stitch
from .pose import (
    FuseConfig,
    GpsSample,
    ImuSample,
    OdomSample,
    PoseEstimate,
    fuse_trajectory,
    gps_correct,
    propagate,
)
from .raster import GridMap, add_labels, rasterize, rasterize_partitions
from .mapfile import read_mapfile, write_mapfile, encode_mapfile
from .pipeline import MapJobConfig, run_map_pipeline
from . import simulate

__all__ = [
    "FuseConfig",
    "GpsSample",
    "GridMap",
    "IcpParams",
    "ImuSample",
    "KdTree",
    "MapJobConfig",
    "OdomSample",
    "PoseEstimate",
    "RigidTransform",
    "run_map_pipeline",
    "add_labels",
    "brute_force_nearest",
    "encode_mapfile",
    "fuse_trajectory",
    "gps_correct",
    "icp_align",
    "kabsch",
    "normalize_angle",
    "propagate",
    "rasterize",
    "rasterize_partitions",
    "read_mapfile",
    "rot_z",
    "simulate",
    "stitch",
    "write_mapfile",
]
