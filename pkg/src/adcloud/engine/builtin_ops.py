"""Engine-level builtin operations, registered at import time."""

from __future__ import annotations

from .registry import OpContext, OpKind, register_op


def _identity(records, ctx: OpContext):
    return records


def _identity_accel(records, ctx: OpContext):
    # ACCEL twin of identity: a distinct registered implementation whose
    # output must match the CPU one (the dispatch path is what differs).
    return [tuple(r) for r in records]


def _flaky_identity(records, ctx: OpContext):
    """Identity that fails on one (partition, attempt, optional iteration).

    Fault-injection hook: fails the first attempt for ``fail_partition``,
    which the retry policy must absorb without changing job output.
    """
    fail_partition = ctx.config.get("fail_partition")
    fail_iteration = ctx.config.get("fail_iteration")
    iteration = ctx.config.get("iteration")
    if (
        ctx.attempt == 0
        and fail_partition == ctx.partition_index
        and (fail_iteration is None or fail_iteration == iteration)
    ):
        raise RuntimeError(f"injected fault on partition {ctx.partition_index}")
    return records


def _sum_fields(records, ctx: OpContext):
    """Elementwise sum of numeric records (all records must share arity)."""
    out = None
    for rec in records:
        if out is None:
            out = list(rec)
        else:
            out = [a + b for a, b in zip(out, rec)]
    return tuple(out)


register_op("identity", OpKind.MAP_PARTITIONS, _identity)
register_op("identity", OpKind.MAP_PARTITIONS, _identity_accel, backend="accel")
register_op("flaky_identity", OpKind.MAP_PARTITIONS, _flaky_identity)
register_op("sum_fields", OpKind.REDUCE, _sum_fields)
register_op("bridge", OpKind.BRIDGE, None)
