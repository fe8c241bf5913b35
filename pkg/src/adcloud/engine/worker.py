"""Worker process: a stateless executor plus its co-located block store.

Forked from the driver, connects back over loopback, and serves messages
until told to shut down. Tasks run on their own threads (the driver's
scheduler enforces slot limits); bridge tasks hand the heavy lifting to a
child process anyway.
"""

from __future__ import annotations

import os
import threading
import time
import traceback

from .. import binstream
from ..errors import CodecError
from ..storage import TierConfig, TieredStore
from . import registry, wire
from .registry import OpContext, OpKind


def worker_main(host: str, port: int, worker_id: str, store_config: dict) -> None:
    import socket

    sock = socket.create_connection((host, port))
    rfile = sock.makefile("rb")
    wfile = sock.makefile("wb")
    store = TieredStore(TierConfig(**store_config))
    send_lock = threading.Lock()

    def send(header: dict, blobs=()) -> None:
        with send_lock:
            try:
                wire.send_msg(wfile, header, blobs)
            except (OSError, ValueError):
                pass  # driver gone; the main loop will notice

    send({"type": "hello", "worker_id": worker_id, "pid": os.getpid()})

    while True:
        try:
            header, blobs = wire.recv_msg(rfile)
        except (CodecError, OSError):
            break
        mtype = header["type"]
        if mtype == "shutdown":
            break
        if mtype == "task":
            threading.Thread(
                target=_run_task, args=(header, blobs, store, send), daemon=True
            ).start()
        elif mtype == "block_get":
            try:
                payload = store.get(header["key"])
                send({"type": "block_resp", "req_id": header["req_id"], "ok": True}, [payload])
            except Exception as exc:
                send({"type": "block_resp", "req_id": header["req_id"], "ok": False,
                      "error": f"{type(exc).__name__}: {exc}"})
        elif mtype == "block_put":
            try:
                store.put(header["key"], blobs[0], persist=header.get("persist", False))
                send({"type": "ack", "req_id": header["req_id"], "ok": True})
            except Exception as exc:
                send({"type": "ack", "req_id": header["req_id"], "ok": False,
                      "error": f"{type(exc).__name__}: {exc}"})
        elif mtype == "stats":
            send({"type": "stats_resp", "req_id": header["req_id"], "stats": store.stats()})
        elif mtype == "flush":
            store.flush_barrier()
            send({"type": "ack", "req_id": header["req_id"], "ok": True})
        elif mtype == "drop_caches":
            store.drop_caches()
            send({"type": "ack", "req_id": header["req_id"], "ok": True})

    try:
        store.close()
    finally:
        sock.close()
    os._exit(0)


def _run_task(header: dict, blobs: list, store: TieredStore, send) -> None:
    task_id = header["task_id"]
    started = time.perf_counter()
    try:
        if header.get("in_key") is not None:
            data = store.get(header["in_key"])
        elif blobs:
            data = blobs[0]
        else:
            data = binstream.serialize_partition_bytes([])
        records = binstream.deserialize_partition_bytes(data)
        aux_records = None
        if header.get("has_aux"):
            aux_records = binstream.deserialize_partition_bytes(blobs[-1])

        kind = OpKind(header["kind"])
        config = header.get("config") or {}
        ctx = OpContext(
            config=config,
            partition_index=header["partition"],
            attempt=header["attempt"],
            backend=header["backend"],
            worker_id=header["worker"],
            aux_records=aux_records,
        )
        if kind == OpKind.BRIDGE:
            env = dict(os.environ)
            env["ADCLOUD_TASK_ATTEMPT"] = str(header["attempt"])
            env["ADCLOUD_TASK_PARTITION"] = str(header["partition"])
            chan = binstream.spawn_bridge(config["executable"], config.get("args", ()), env=env)
            with chan:
                out = chan.transform(records)
        else:
            impl = registry.impl_for(header["op"], header["backend"])
            result = impl(records, ctx)
            out = [result] if kind == OpKind.REDUCE else list(result)

        out_bytes = binstream.serialize_partition_bytes(out)
        store.put(header["out_key"], out_bytes, persist=header["persist"])
        send({
            "type": "task_result", "task_id": task_id, "ok": True,
            "rows_in": len(records), "rows_out": len(out), "bytes_out": len(out_bytes),
            "wall_s": time.perf_counter() - started,
        })
    except Exception as exc:
        send({
            "type": "task_result", "task_id": task_id, "ok": False,
            "error": f"{type(exc).__name__}: {exc}",
            "trace": traceback.format_exc(limit=5),
            "wall_s": time.perf_counter() - started,
        })
