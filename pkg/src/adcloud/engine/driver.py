"""Driver: the only scheduler over forked worker processes.

Architecture: the driver binds a loopback socket, forks N workers (each with
its own tiered block store), and schedules stage tasks onto free resource
slots, shipping partition payloads by key when the executing worker already
holds the block and inline otherwise. Workers never talk to each other; the
driver routes every block by key and falls back to the owning worker's
backing directory when its cache is gone.

Determinism rules: datasets are immutable once materialized; partitions are
processed independently; REDUCE combines per-partition partials with the
canonical halving tree over partition indices, so results are bit-identical
for any worker count. A failed task is retried exactly once, on a different
worker when one exists.
"""

from __future__ import annotations

import glob as globmod
import itertools
import multiprocessing
import os
import queue
import shutil
import socket
import struct
import tempfile
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .. import binstream
from ..detsum import chunk_split, tree_reduce
from ..errors import (
    CodecError,
    ConfigError,
    EmptyInput,
    EngineError,
    InvalidPlan,
    MissingBlock,
    ParseError,
    PortBindError,
    SpawnError,
    TaskFailed,
    UnknownOp,
)
from ..storage import TierConfig, TieredStore
from . import registry, wire
from .registry import OpContext, OpKind
from .worker import worker_main  # imported pre-fork so children never run imports

BAG_MAGIC = b"ADBG"
BAG_VERSION = 1


# --- plan model -----------------------------------------------------------------


@dataclass(frozen=True)
class DatasetRef:
    id: str
    num_partitions: int
    lineage: dict | None = None


@dataclass
class OpCall:
    name: str
    kind: OpKind
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = OpKind(self.kind)


@dataclass
class StagePlan:
    source: DatasetRef
    ops: list[OpCall]
    backend: str = "cpu"
    persist_output: bool = True


@dataclass
class ByFile:
    pass


@dataclass
class ByRecordCount:
    count: int


@dataclass
class ByTimeWindow:
    seconds: float


@dataclass
class JobResult:
    dataset: DatasetRef
    collected: list | None
    metrics: dict


@dataclass
class ClusterConfig:
    workers: int = 2
    cpu_slots: int = 2
    accel_slots: int = 0
    mem_bytes: int = 64 * 1024 * 1024
    disk1_bytes: int = 256 * 1024 * 1024
    disk2_bytes: int = 1024 * 1024 * 1024
    base_dir: str | None = None
    port: int = 0
    retries: int = 1  # task retries before the job fails

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        if self.cpu_slots < 0 or self.accel_slots < 0:
            raise ConfigError("slots", "slot counts must be >= 0")
        if self.cpu_slots + self.accel_slots == 0:
            raise ConfigError("slots", "at least one slot required per worker")
        if self.retries not in (0, 1):
            raise ConfigError("retries", "only 0 or 1 supported")


@dataclass
class _DatasetMeta:
    ref: DatasetRef
    locations: list[str]
    counts: list[int]
    persisted: bool


@dataclass
class _PendingReq:
    worker: str
    event: threading.Event
    header: dict | None = None
    blobs: list | None = None
    error: str | None = None


def _block_key(dataset_id: str, partition: int) -> str:
    return f"{dataset_id}/{partition}"


class Cluster:
    """Driver handle over a local multi-process cluster."""

    def __init__(self, config: ClusterConfig):
        self.config = config
        self._owns_base = config.base_dir is None
        self.base_dir = config.base_dir or tempfile.mkdtemp(prefix="adcloud-")
        os.makedirs(self.base_dir, exist_ok=True)

        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            listener.bind(("127.0.0.1", config.port))
        except OSError as exc:
            raise PortBindError(f"cannot bind port {config.port}: {exc}") from exc
        listener.listen(config.workers)
        self.port = listener.getsockname()[1]

        self.worker_ids = [f"w{i}" for i in range(config.workers)]
        ctx = multiprocessing.get_context("fork")
        self._procs = {}
        for wid in self.worker_ids:
            proc = ctx.Process(
                target=_worker_entry,
                args=("127.0.0.1", self.port, wid, self._store_config(wid)),
                name=f"adcloud-{wid}",
                daemon=True,
            )
            proc.start()
            self._procs[wid] = proc

        self._conns: dict[str, tuple] = {}
        listener.settimeout(30)
        try:
            for _ in self.worker_ids:
                conn, _addr = listener.accept()
                rfile, wfile = conn.makefile("rb"), conn.makefile("wb")
                hello, _ = wire.recv_msg(rfile)
                self._conns[hello["worker_id"]] = (conn, rfile, wfile, threading.Lock())
        except (socket.timeout, OSError) as exc:
            raise SpawnError(f"workers failed to connect: {exc}") from exc
        finally:
            listener.close()

        self._alive = set(self.worker_ids)
        self._pending: dict[int, _PendingReq] = {}
        self._pending_lock = threading.Lock()
        self._req_counter = itertools.count()
        self._task_queue: queue.Queue = queue.Queue()
        self._readers = []
        for wid in self.worker_ids:
            t = threading.Thread(target=self._reader, args=(wid,), daemon=True)
            t.start()
            self._readers.append(t)

        self.driver_store = TieredStore(TierConfig(**self._store_config("driver")))
        self._datasets: dict[str, _DatasetMeta] = {}
        self._job_counter = itertools.count()
        self._ds_counter = itertools.count()
        self.events: list[dict] = []
        self._closed = False

    # --- lifecycle ---------------------------------------------------------------

    def _store_config(self, name: str) -> dict:
        root = os.path.join(self.base_dir, name)
        return {
            "mem_bytes": self.config.mem_bytes,
            "disk1_bytes": self.config.disk1_bytes,
            "disk2_bytes": self.config.disk2_bytes,
            "backing_dir": os.path.join(root, "backing"),
            "cache_dir": os.path.join(root, "cache"),
        }

    def shutdown(self) -> None:
        if self._closed:
            return
        self._closed = True
        for wid in self.worker_ids:
            try:
                self._send(wid, {"type": "shutdown"})
            except Exception:
                pass
        for wid, proc in self._procs.items():
            proc.join(timeout=10)
            if proc.is_alive():
                proc.terminate()
                proc.join(timeout=5)
        for conn, rfile, wfile, _lock in self._conns.values():
            for fh in (rfile, wfile):
                try:
                    fh.close()
                except OSError:
                    pass
            conn.close()
        self.driver_store.close()
        if self._owns_base:
            shutil.rmtree(self.base_dir, ignore_errors=True)

    def __enter__(self) -> "Cluster":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()

    # --- messaging ----------------------------------------------------------------

    def _send(self, wid: str, header: dict, blobs: Sequence[bytes] = ()) -> None:
        conn, rfile, wfile, lock = self._conns[wid]
        with lock:
            wire.send_msg(wfile, header, blobs)

    def _reader(self, wid: str) -> None:
        _conn, rfile, _wfile, _lock = self._conns[wid]
        try:
            while True:
                header, blobs = wire.recv_msg(rfile)
                if header["type"] == "task_result":
                    self._task_queue.put((wid, header))
                else:
                    with self._pending_lock:
                        req = self._pending.pop(header["req_id"], None)
                    if req is not None:
                        req.header, req.blobs = header, blobs
                        req.event.set()
        except Exception:
            self._mark_dead(wid)

    def _mark_dead(self, wid: str) -> None:
        if wid not in self._alive:
            return
        self._alive.discard(wid)
        with self._pending_lock:
            stale = [r for r in self._pending.values() if r.worker == wid]
            for req in stale:
                req.error = f"worker {wid} died"
                req.event.set()
        self._task_queue.put((wid, {"type": "worker_dead"}))

    def _request(self, wid: str, header: dict, blobs: Sequence[bytes] = (), timeout: float = 120.0):
        req_id = next(self._req_counter)
        header = dict(header, req_id=req_id)
        req = _PendingReq(worker=wid, event=threading.Event())
        with self._pending_lock:
            self._pending[req_id] = req
        self._send(wid, header, blobs)
        if not req.event.wait(timeout):
            with self._pending_lock:
                self._pending.pop(req_id, None)
            raise EngineError(f"timeout waiting for {header['type']} from {wid}")
        if req.error is not None:
            raise EngineError(req.error)
        return req.header, req.blobs

    # --- block routing ---------------------------------------------------------------

    def _put_block(self, wid: str, key: str, payload: bytes, persist: bool) -> None:
        header, _ = self._request(wid, {"type": "block_put", "key": key, "persist": persist}, [payload])
        if not header.get("ok"):
            raise EngineError(header.get("error", "block_put failed"))

    def _fetch_block(self, dataset_id: str, partition: int) -> bytes:
        meta = self._datasets.get(dataset_id)
        if meta is None:
            raise MissingBlock(f"unknown dataset {dataset_id}")
        key = _block_key(dataset_id, partition)
        wid = meta.locations[partition]
        if wid in self._alive:
            header, blobs = self._request(wid, {"type": "block_get", "key": key})
            if header.get("ok"):
                return blobs[0]
        # Fall back to the owning worker's backing directory.
        import urllib.parse

        path = os.path.join(
            self.base_dir, wid, "backing", urllib.parse.quote(key, safe="") + ".blk"
        )
        try:
            with open(path, "rb") as fh:
                return fh.read()
        except FileNotFoundError:
            raise MissingBlock(key) from None

    def _route_worker(self, partition: int) -> str:
        alive = sorted(self._alive)
        if not alive:
            raise EngineError("no live workers")
        return alive[partition % len(alive)]

    # --- dataset creation ----------------------------------------------------------

    def _new_dataset_id(self, hint: str) -> str:
        return f"{hint}-{next(self._ds_counter):04d}"

    def parallelize(
        self,
        partitions: Sequence[Sequence[tuple]],
        persist: bool = True,
        id_hint: str = "data",
        lineage: dict | None = None,
    ) -> DatasetRef:
        if not partitions:
            raise EmptyInput("dataset needs at least one partition")
        ds_id = self._new_dataset_id(id_hint)
        locations, counts = [], []
        for idx, records in enumerate(partitions):
            wid = self._route_worker(idx)
            payload = binstream.serialize_partition_bytes(records)
            self._put_block(wid, _block_key(ds_id, idx), payload, persist)
            locations.append(wid)
            counts.append(len(records))
        ref = DatasetRef(ds_id, len(partitions), lineage or {"op": "parallelize"})
        self._datasets[ds_id] = _DatasetMeta(ref, locations, counts, persist)
        return ref

    def ingest(self, path_glob: str | Sequence[str], partitioner) -> DatasetRef:
        if isinstance(path_glob, str):
            paths = sorted(globmod.glob(path_glob))
        else:
            paths = [p for pattern in path_glob for p in sorted(globmod.glob(pattern))]
        if not paths:
            raise EmptyInput(f"no files match {path_glob!r}")

        per_file = [read_partition_file(p) for p in paths]
        if isinstance(partitioner, ByFile):
            partitions = per_file
        else:
            records = [r for chunk in per_file for r in chunk]
            if not records:
                raise EmptyInput("input files contain no records")
            if isinstance(partitioner, ByRecordCount):
                if partitioner.count < 1:
                    raise ConfigError("partitioner.count", "must be >= 1")
                partitions = [records[lo:hi] for lo, hi in chunk_split(len(records), partitioner.count)]
            elif isinstance(partitioner, ByTimeWindow):
                partitions = _window_partitions(records, partitioner.seconds)
            else:
                raise ConfigError("partitioner", f"unknown partitioner {partitioner!r}")
        return self.parallelize(
            partitions,
            persist=True,
            id_hint="ingest",
            lineage={"op": "ingest", "paths": paths},
        )

    # --- job execution ---------------------------------------------------------------

    def submit(self, plan: StagePlan) -> JobResult:
        self._validate_plan(plan)
        job_id = f"job-{next(self._job_counter):04d}"
        started = time.perf_counter()
        # Land persists queued by earlier ingests/jobs so the per-job tier
        # deltas are exact.
        self.flush_all()
        stats_before = self._worker_stats()

        current = plan.source
        stage_metrics = []
        collected = None
        for stage_idx, op in enumerate(plan.ops):
            is_final = stage_idx == len(plan.ops) - 1
            persist = plan.persist_output and is_final
            out_id = f"{job_id}.s{stage_idx}.{op.name}"
            current, stage_m, collected = self._run_stage(
                job_id, stage_idx, op, current, out_id, persist, plan.backend
            )
            stage_metrics.append(stage_m)

        self.flush_all()
        stats_after = self._worker_stats()
        metrics = {
            "job_id": job_id,
            "backend": plan.backend,
            "wall_s": time.perf_counter() - started,
            "stages": stage_metrics,
            "tiers": _stats_delta(stats_before, stats_after),
        }
        metrics["bytes_persisted"] = metrics["tiers"]["BACKING"]["bytes_persisted"]
        return JobResult(dataset=current, collected=collected, metrics=metrics)

    def _validate_plan(self, plan: StagePlan) -> None:
        if not plan.ops:
            raise InvalidPlan("plan has no ops")
        if plan.source.id not in self._datasets:
            raise MissingBlock(f"source dataset {plan.source.id} not materialized")
        for idx, op in enumerate(plan.ops):
            if not registry.is_registered(op.name):
                raise UnknownOp(op.name)
            if registry.op_kind(op.name) != op.kind:
                raise InvalidPlan(
                    f"op {op.name!r} is {registry.op_kind(op.name).value}, plan says {op.kind.value}"
                )
            if op.kind == OpKind.REDUCE and idx != len(plan.ops) - 1:
                raise InvalidPlan("REDUCE must be the last op")
            if op.kind == OpKind.BRIDGE and "executable" not in op.config:
                raise InvalidPlan(f"bridge op {op.name!r} needs config['executable']")
            if op.kind != OpKind.BRIDGE:
                registry.impl_for(op.name, plan.backend)  # raises UnknownOp if missing
            aux = op.config.get("_aux")
            if aux is not None and aux not in self._datasets:
                raise MissingBlock(f"aux dataset {aux} not materialized")
        slot_supply = self.config.cpu_slots if plan.backend == "cpu" else self.config.accel_slots
        if slot_supply < 1:
            raise InvalidPlan(f"no {plan.backend!r} slots configured on this cluster")

    def _run_stage(self, job_id, stage_idx, op, in_ref, out_id, persist, backend):
        meta_in = self._datasets[in_ref.id]
        num_partitions = in_ref.num_partitions
        if op.kind == OpKind.REDUCE:
            parts = [p for p in range(num_partitions) if meta_in.counts[p] > 0]
            if not parts:
                raise EmptyInput(f"reduce over empty dataset {in_ref.id}")
        else:
            parts = list(range(num_partitions))

        aux_id = op.config.get("_aux")
        if aux_id is not None:
            aux_meta = self._datasets[aux_id]
            if aux_meta.ref.num_partitions != num_partitions:
                raise InvalidPlan(
                    f"aux dataset {aux_id} has {aux_meta.ref.num_partitions} partitions, "
                    f"input has {num_partitions}"
                )

        slot_kind = backend
        free = {wid: self.config.cpu_slots if slot_kind == "cpu" else self.config.accel_slots
                for wid in sorted(self._alive)}
        pending = deque(parts)
        inflight: dict[str, dict] = {}
        attempts = {p: 0 for p in parts}
        excluded: dict[int, str] = {}
        out_locations: dict[int, str] = {}
        out_counts: dict[int, int] = {}
        task_metrics = []
        stage_start = time.perf_counter()
        task_seq = itertools.count()

        def assign_ready():
            made_progress = True
            while made_progress and pending:
                made_progress = False
                for _ in range(len(pending)):
                    p = pending.popleft()
                    wid = self._pick_worker(p, meta_in, free, excluded.get(p))
                    if wid is None:
                        pending.append(p)
                        continue
                    free[wid] -= 1
                    task_id = f"{job_id}.s{stage_idx}.t{next(task_seq)}"
                    try:
                        self._dispatch_task(
                            task_id, op, in_ref, meta_in, p, wid,
                            attempts[p], out_id, persist, backend, aux_id,
                        )
                    except (EngineError, OSError, ValueError):
                        # dead or closing worker: requeue; the reader thread
                        # reports the death and releases its slots
                        free[wid] += 1
                        pending.append(p)
                        continue
                    inflight[task_id] = {"partition": p, "worker": wid, "attempt": attempts[p]}
                    self.events.append({
                        "t": time.monotonic(), "event": "task_start", "job": job_id,
                        "stage": stage_idx, "op": op.name, "slot_kind": slot_kind,
                        "partition": p, "worker": wid, "attempt": attempts[p],
                        "task_id": task_id,
                    })
                    made_progress = True

        assign_ready()
        while inflight or pending:
            if inflight:
                wid, result = self._task_queue.get()
            else:
                # nothing running and nothing assignable: wait briefly for a
                # worker-death notice before declaring the stage stuck
                try:
                    wid, result = self._task_queue.get(timeout=10.0)
                except queue.Empty:
                    raise EngineError("no live workers with free slots") from None
            if result["type"] == "worker_dead":
                free.pop(wid, None)
                dead_tasks = [tid for tid, info in inflight.items() if info["worker"] == wid]
                for tid in dead_tasks:
                    info = inflight.pop(tid)
                    self._note_task_end(job_id, stage_idx, op, slot_kind, info, ok=False)
                    self._handle_failure(info, f"worker {wid} died", pending, attempts, excluded)
                assign_ready()
                continue

            tid = result["task_id"]
            info = inflight.pop(tid, None)
            if info is None:
                continue  # stale result from an abandoned attempt
            if wid in free:
                free[wid] += 1
            self._note_task_end(job_id, stage_idx, op, slot_kind, info, ok=result["ok"])
            task_metrics.append({
                "partition": info["partition"], "worker": info["worker"],
                "attempt": info["attempt"], "ok": result["ok"],
                "wall_s": result.get("wall_s", 0.0),
                "rows_in": result.get("rows_in", 0), "rows_out": result.get("rows_out", 0),
                "bytes_out": result.get("bytes_out", 0),
                "error": result.get("error"),
            })
            if result["ok"]:
                p = info["partition"]
                out_locations[p] = info["worker"]
                out_counts[p] = result["rows_out"]
            else:
                self._handle_failure(info, result.get("error", "task failed"),
                                     pending, attempts, excluded)
            assign_ready()

        stage_wall = time.perf_counter() - stage_start
        collected = None
        if op.kind == OpKind.REDUCE:
            out_ref, collected = self._finish_reduce(
                op, backend, out_id, parts, out_locations, persist
            )
        else:
            locations = [out_locations[p] for p in range(num_partitions)]
            counts = [out_counts[p] for p in range(num_partitions)]
            out_ref = DatasetRef(out_id, num_partitions, {"op": op.name, "source": in_ref.id})
            self._datasets[out_id] = _DatasetMeta(out_ref, locations, counts, persist)

        stage_m = {
            "stage": stage_idx, "op": op.name, "kind": op.kind.value,
            "wall_s": stage_wall, "tasks": task_metrics,
        }
        return out_ref, stage_m, collected

    def _pick_worker(self, partition, meta_in, free, excluded):
        owner = meta_in.locations[partition] if partition < len(meta_in.locations) else None
        candidates = [w for w in sorted(free) if free[w] > 0 and w != excluded]
        if not candidates:
            # with a single live worker, retry must reuse it
            candidates = [w for w in sorted(free) if free[w] > 0]
            if not candidates:
                return None
        if owner in candidates:
            return owner
        return candidates[0]

    def _dispatch_task(self, task_id, op, in_ref, meta_in, partition, wid,
                       attempt, out_id, persist, backend, aux_id):
        header = {
            "type": "task", "task_id": task_id, "op": op.name, "kind": op.kind.value,
            "config": op.config, "backend": backend, "partition": partition,
            "attempt": attempt, "worker": wid, "persist": persist,
            "out_key": _block_key(out_id if op.kind != OpKind.REDUCE else out_id + "#partial",
                                  partition),
        }
        blobs = []
        key = _block_key(in_ref.id, partition)
        if meta_in.locations[partition] == wid:
            header["in_key"] = key
        else:
            header["in_key"] = None
            blobs.append(self._fetch_block(in_ref.id, partition))
        if aux_id is not None:
            header["has_aux"] = True
            blobs.append(self._fetch_block(aux_id, partition))
        self._send(wid, header, blobs)

    def _handle_failure(self, info, error, pending, attempts, excluded):
        p = info["partition"]
        if attempts[p] >= self.config.retries:
            raise TaskFailed(p, error)
        attempts[p] += 1
        excluded[p] = info["worker"]
        pending.append(p)

    def _note_task_end(self, job_id, stage_idx, op, slot_kind, info, ok):
        self.events.append({
            "t": time.monotonic(), "event": "task_end", "job": job_id,
            "stage": stage_idx, "op": op.name, "slot_kind": slot_kind,
            "partition": info["partition"], "worker": info["worker"],
            "attempt": info["attempt"], "ok": ok,
        })

    def _finish_reduce(self, op, backend, out_id, parts, out_locations, persist):
        partials = []
        for p in parts:
            payload = self._fetch_partial(out_id + "#partial", p, out_locations[p])
            records = binstream.deserialize_partition_bytes(payload)
            partials.append(records[0])
        impl = registry.impl_for(op.name, backend)
        ctx = OpContext(config=op.config, partition_index=-1, attempt=0,
                        backend=backend, worker_id="driver")
        combined = tree_reduce(partials, lambda a, b: impl([a, b], ctx))
        payload = binstream.serialize_partition_bytes([combined])
        wid = self._route_worker(0)
        self._put_block(wid, _block_key(out_id, 0), payload, persist)
        out_ref = DatasetRef(out_id, 1, {"op": op.name})
        self._datasets[out_id] = _DatasetMeta(out_ref, [wid], [1], persist)
        return out_ref, [combined]

    def _fetch_partial(self, dataset_id: str, partition: int, wid: str) -> bytes:
        key = _block_key(dataset_id, partition)
        header, blobs = self._request(wid, {"type": "block_get", "key": key})
        if not header.get("ok"):
            raise MissingBlock(key)
        return blobs[0]

    # --- dataset access -----------------------------------------------------------

    def collect(self, ref: DatasetRef) -> list:
        meta = self._datasets.get(ref.id)
        if meta is None:
            raise MissingBlock(f"dataset {ref.id} not materialized")
        records = []
        for p in range(ref.num_partitions):
            payload = self._fetch_block(ref.id, p)
            records.extend(binstream.deserialize_partition_bytes(payload))
        return records

    def collect_partitions(self, ref: DatasetRef) -> list[list]:
        return [
            binstream.deserialize_partition_bytes(self._fetch_block(ref.id, p))
            for p in range(ref.num_partitions)
        ]

    def reduce_deterministic(self, ref: DatasetRef, op_name: str, config: dict | None = None):
        plan = StagePlan(source=ref, ops=[OpCall(op_name, OpKind.REDUCE, config or {})])
        result = self.submit(plan)
        return result.collected[0]

    # --- storage control -----------------------------------------------------------

    def flush_all(self) -> None:
        for wid in sorted(self._alive):
            self._request(wid, {"type": "flush"})
        self.driver_store.flush_barrier()

    def drop_caches(self) -> None:
        for wid in sorted(self._alive):
            self._request(wid, {"type": "drop_caches"})
        self.driver_store.drop_caches()

    def storage_stats(self) -> dict:
        out = {"driver": self.driver_store.stats()}
        for wid in sorted(self._alive):
            header, _ = self._request(wid, {"type": "stats"})
            out[wid] = header["stats"]
        return out

    def _worker_stats(self) -> dict[str, dict]:
        out = {}
        for wid in sorted(self._alive):
            header, _ = self._request(wid, {"type": "stats"})
            out[wid] = header["stats"]
        return out


def _stats_delta(before: dict, after: dict) -> dict:
    """Per-tier counter growth, summed over workers alive at both snapshots."""
    delta: dict[str, dict[str, int]] = {}
    for wid, tiers in after.items():
        base_tiers = before.get(wid)
        if base_tiers is None:
            continue
        for tier, counters in tiers.items():
            bucket = delta.setdefault(tier, dict.fromkeys(counters, 0))
            for k, v in counters.items():
                bucket[k] += v - base_tiers[tier][k]
    return delta


def _worker_entry(host, port, worker_id, store_config):
    worker_main(host, port, worker_id, store_config)


def start_cluster(
    workers: int,
    cpu_slots: int = 2,
    accel_slots: int = 0,
    base_dir: str | None = None,
    **storage_kwargs,
) -> Cluster:
    config = ClusterConfig(
        workers=workers,
        cpu_slots=cpu_slots,
        accel_slots=accel_slots,
        base_dir=base_dir,
        **storage_kwargs,
    )
    return Cluster(config)


# --- file ingestion -----------------------------------------------------------------


def read_partition_file(path: str) -> list:
    """Read one file as either a bag (magic-prefixed) or a raw partition stream."""
    with open(path, "rb") as fh:
        head = fh.read(8)
        if head[:4] == BAG_MAGIC:
            (version,) = struct.unpack("<I", head[4:8])
            if version != BAG_VERSION:
                raise ParseError(f"{path}: unsupported bag version {version}")
            body = fh.read()
        else:
            body = head + fh.read()
    try:
        return binstream.deserialize_partition_bytes(body)
    except CodecError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _window_partitions(records: list, seconds: float) -> list[list]:
    if seconds <= 0:
        raise ConfigError("partitioner.seconds", "must be > 0")
    for rec in records[:1]:
        if len(rec) < 2 or not isinstance(rec[1], int):
            raise ParseError("BY_TIME_WINDOW needs bag records with an Int64 timestamp field")
    window_ns = int(seconds * 1e9)
    t0 = records[0][1]
    buckets: dict[int, list] = {}
    max_bucket = 0
    for rec in records:
        if len(rec) < 2 or not isinstance(rec[1], int):
            raise ParseError("BY_TIME_WINDOW needs bag records with an Int64 timestamp field")
        idx = (rec[1] - t0) // window_ns
        if idx < 0:
            raise ParseError("timestamp precedes the first record")
        buckets.setdefault(idx, []).append(rec)
        max_bucket = max(max_bucket, idx)
    return [buckets.get(i, []) for i in range(max_bucket + 1)]
