"""Replay simulation: stream sensor logs through an algorithm under test.

Bag files hold timestamped, topic-tagged binary records. A replay shards a
bag across the cluster, pipes each partition through its own child process
speaking the bridge protocol (one output record per input record, same topic
and timestamp), optionally joins the outputs against a golden dataset by
(topic, timestamp), and aggregates counts with a deterministic reduce, so
the report is identical for any worker count.
"""

from __future__ import annotations

import json
import random
import struct
from dataclasses import dataclass
from typing import Sequence

from . import binstream
from .engine import Cluster, DatasetRef, OpCall, OpKind, StagePlan, register_op
from .engine.driver import BAG_MAGIC, BAG_VERSION, read_partition_file
from .errors import GoldenJoinError, ParseError, TimestampRegression

# bag record = (topic: Utf8, timestamp_ns: Int64, payload: Bytes)


@dataclass
class SimReport:
    records_replayed: int
    outputs_received: int
    mismatches: int | None
    per_partition_wall_s: list[float]
    wall_s: float
    worker_count: int
    retries: int = 0

    def to_dict(self) -> dict:
        return {
            "records_replayed": self.records_replayed,
            "outputs_received": self.outputs_received,
            "mismatches": self.mismatches,
            "per_partition_wall_s": self.per_partition_wall_s,
            "wall_s": self.wall_s,
            "worker_count": self.worker_count,
            "retries": self.retries,
        }

    def counts(self) -> tuple:
        return (self.records_replayed, self.outputs_received, self.mismatches)


# --- bag files -----------------------------------------------------------------


def validate_bag_record(record) -> None:
    if (
        len(record) != 3
        or not isinstance(record[0], str)
        or not isinstance(record[1], int)
        or not isinstance(record[2], bytes)
    ):
        raise ParseError(f"not a bag record: {record!r}")


def write_bag(path: str, records: Sequence[tuple]) -> None:
    last_ts = None
    for rec in records:
        validate_bag_record(rec)
        if last_ts is not None and rec[1] < last_ts:
            raise TimestampRegression(f"timestamp {rec[1]} after {last_ts}")
        last_ts = rec[1]
    with open(path, "wb") as fh:
        fh.write(BAG_MAGIC + struct.pack("<I", BAG_VERSION))
        binstream.serialize_partition(records, fh)


def read_bag(path: str) -> list[tuple]:
    records = read_partition_file(path)
    last_ts = None
    for rec in records:
        validate_bag_record(rec)
        if last_ts is not None and rec[1] < last_ts:
            raise TimestampRegression(
                f"{path}: timestamp {rec[1]} after {last_ts}"
            )
        last_ts = rec[1]
    return records


def load_bag(cluster: Cluster, path: str, partitioner=None) -> DatasetRef:
    """Validate and distribute one bag across the cluster."""
    from .engine import ByFile

    read_bag(path)  # full validation pass before any distribution
    return cluster.ingest(path, partitioner if partitioner is not None else ByFile())


def synth_bag(
    path: str,
    topics: Sequence[str],
    rate_hz: float,
    duration_s: float,
    payload_size: int = 64,
    seed: int = 0,
) -> int:
    """Write a deterministic synthetic bag; returns the record count."""
    if rate_hz <= 0 or duration_s <= 0:
        raise ParseError("rate and duration must be positive")
    rng = random.Random(seed)
    per_topic = int(rate_hz * duration_s)
    records = []
    for topic in topics:
        for i in range(per_topic):
            ts = round(i * 1e9 / rate_hz)
            records.append((topic, ts, rng.randbytes(payload_size)))
    records.sort(key=lambda r: (r[1], r[0]))
    write_bag(path, records)
    return len(records)


# --- replay --------------------------------------------------------------------


def _compare_with_golden(records, ctx):
    """Join bridge outputs to the golden partition by (topic, timestamp)."""
    golden = {}
    for rec in ctx.aux_records:
        golden[(rec[0], rec[1])] = rec[2]
    mismatches = 0
    for rec in records:
        key = (rec[0], rec[1])
        if key not in golden:
            raise GoldenJoinError(f"output {key} has no golden counterpart")
        if golden.pop(key) != rec[2]:
            mismatches += 1
    if golden:
        missing = next(iter(golden))
        raise GoldenJoinError(f"golden {missing} has no output counterpart")
    return [(len(records), mismatches)]


def _count_outputs(records, ctx):
    return [(len(records), 0)]


def _merge_counts(records, ctx):
    outputs = 0
    mismatches = 0
    for rec in records:
        outputs += rec[0]
        mismatches += rec[1]
    return (outputs, mismatches)


register_op("sim.compare", OpKind.MAP_PARTITIONS, _compare_with_golden)
register_op("sim.count", OpKind.MAP_PARTITIONS, _count_outputs)
register_op("sim.merge_counts", OpKind.REDUCE, _merge_counts)


def replay(
    cluster: Cluster,
    dataset: DatasetRef,
    executable: str,
    args: Sequence[str] = (),
    golden: DatasetRef | None = None,
) -> SimReport:
    """Stream every partition through its own child process and aggregate."""
    if golden is not None and golden.num_partitions != dataset.num_partitions:
        raise GoldenJoinError(
            f"golden has {golden.num_partitions} partitions, input has "
            f"{dataset.num_partitions}; partition them identically"
        )
    ops = [OpCall("bridge", OpKind.BRIDGE,
                  {"executable": str(executable), "args": list(args)})]
    if golden is not None:
        ops.append(OpCall("sim.compare", OpKind.MAP_PARTITIONS, {"_aux": golden.id}))
    else:
        ops.append(OpCall("sim.count", OpKind.MAP_PARTITIONS))
    ops.append(OpCall("sim.merge_counts", OpKind.REDUCE))

    result = cluster.submit(StagePlan(source=dataset, ops=ops, persist_output=False))
    outputs, mismatches = result.collected[0]

    bridge_tasks = result.metrics["stages"][0]["tasks"]
    ok_tasks = sorted(
        (t for t in bridge_tasks if t["ok"]), key=lambda t: t["partition"]
    )
    replayed = sum(t["rows_in"] for t in ok_tasks)
    retries = sum(1 for t in bridge_tasks if not t["ok"])
    return SimReport(
        records_replayed=replayed,
        outputs_received=outputs,
        mismatches=mismatches if golden is not None else None,
        per_partition_wall_s=[t["wall_s"] for t in ok_tasks],
        wall_s=result.metrics["wall_s"],
        worker_count=cluster.config.workers,
        retries=retries,
    )


def write_report(report: SimReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
