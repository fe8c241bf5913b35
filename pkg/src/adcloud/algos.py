"""Bridge-speaking child algorithms, runnable as ``python -m adcloud.algos``.

Each algorithm reads a partition stream from stdin, writes one output record
per input record to stdout, and terminates its output with END. They serve as
the algorithms-under-test for replay simulation and as fixtures for bridge
tests; each has an in-process twin in :mod:`adcloud.simharness` used as the
oracle.

``crashy`` consults the ADCLOUD_TASK_ATTEMPT environment variable (set by the
engine for every bridge child) so fault-injection tests can die on the first
attempt only.
"""

from __future__ import annotations

import argparse
import os
import signal
import sys
import time

from . import binstream
from .binstream import Frame, FrameKind


def identity_record(record):
    return record


def byteflip_record(record):
    """Flip the first payload byte of bag records with even timestamps."""
    topic, ts, payload = record
    if ts % 2 == 0 and payload:
        payload = bytes([payload[0] ^ 0xFF]) + payload[1:]
    return (topic, ts, payload)


def rotate_record(record):
    """Move the first field to the end."""
    if len(record) < 2:
        return record
    return record[1:] + record[:1]


def make_busyloop(micros: int):
    def busy(record):
        deadline = time.perf_counter() + micros * 1e-6
        while time.perf_counter() < deadline:
            pass
        return record

    return busy


def _run_stream(transform, stdin, stdout) -> int:
    for record in binstream.iter_partition(stdin):
        out = transform(record)
        binstream.write_frame(stdout, Frame(FrameKind.DATA, binstream.encode_record(out)))
    binstream.write_frame(stdout, Frame(FrameKind.END))
    stdout.flush()
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="adcloud-algos")
    parser.add_argument("name", choices=["identity", "byteflip", "rotate", "busyloop", "crashy", "exit0", "error"])
    parser.add_argument("--micros", type=int, default=200, help="busyloop spin per record")
    parser.add_argument("--after", type=int, default=2, help="crashy: records to echo before dying")
    parser.add_argument("--partition", type=int, default=None,
                        help="crashy: die only when running this partition")
    args = parser.parse_args(argv)

    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer

    if args.name == "exit0":
        return 0

    if args.name == "error":
        # Signals failure in-band instead of via exit code.
        binstream.write_frame(stdout, Frame(FrameKind.ERROR, b"synthetic algorithm failure"))
        stdout.flush()
        return 0

    if args.name == "crashy":
        attempt = int(os.environ.get("ADCLOUD_TASK_ATTEMPT", "0"))
        partition = int(os.environ.get("ADCLOUD_TASK_PARTITION", "-1"))
        armed = attempt == 0 and (args.partition is None or args.partition == partition)
        seen = 0
        for record in binstream.iter_partition(stdin):
            binstream.write_frame(stdout, Frame(FrameKind.DATA, binstream.encode_record(record)))
            stdout.flush()
            seen += 1
            if armed and seen >= args.after:
                os.kill(os.getpid(), signal.SIGKILL)
        binstream.write_frame(stdout, Frame(FrameKind.END))
        stdout.flush()
        return 0

    transforms = {
        "identity": identity_record,
        "byteflip": byteflip_record,
        "rotate": rotate_record,
        "busyloop": make_busyloop(args.micros),
    }
    return _run_stream(transforms[args.name], stdin, stdout)


if __name__ == "__main__":
    sys.exit(main())
