from .registry import OpContext, OpKind, register_op, unregister_op
from .driver import (
    ByFile,
    ByRecordCount,
    ByTimeWindow,
    Cluster,
    ClusterConfig,
    DatasetRef,
    JobResult,
    OpCall,
    StagePlan,
    start_cluster,
)

from . import builtin_ops as _builtin_ops  # noqa: F401  (registers engine ops)

__all__ = [
    "ByFile",
    "ByRecordCount",
    "ByTimeWindow",
    "Cluster",
    "ClusterConfig",
    "DatasetRef",
    "JobResult",
    "OpCall",
    "OpContext",
    "OpKind",
    "StagePlan",
    "register_op",
    "unregister_op",
    "start_cluster",
]
