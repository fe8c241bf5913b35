#!/usr/bin/env python3
"""Replay scaling trend: wall time of a CPU-bound replay vs worker count.

Streams a synthetic bag through busy-loop bridge children (a fixed spin per
record), once per worker count, and prints the time table plus speedups.
"""

import argparse
import sys
import tempfile

from adcloud import engine, simharness
from adcloud.engine import ByRecordCount


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--records", type=int, default=20_000)
    parser.add_argument("--micros", type=int, default=200, help="busy spin per record")
    parser.add_argument("--workers", default="1,2,4")
    parser.add_argument("--partitions", type=int, default=8)
    parser.add_argument("--slots", type=int, default=1,
                        help="cpu slots per worker (1 keeps the baseline serial)")
    args = parser.parse_args()

    worker_counts = [int(w) for w in args.workers.split(",")]
    with tempfile.TemporaryDirectory() as tmp:
        bag = f"{tmp}/scaling.adbg"
        simharness.synth_bag(bag, ["cam"], rate_hz=args.records / 10, duration_s=10,
                             payload_size=16, seed=1)
        split = max(1, args.records // args.partitions)

        table = {}
        for workers in worker_counts:
            with engine.start_cluster(workers, cpu_slots=args.slots,
                                      base_dir=f"{tmp}/cluster-{workers}") as cluster:
                dataset = simharness.load_bag(cluster, bag, ByRecordCount(split))
                report = simharness.replay(
                    cluster, dataset, sys.executable,
                    ["-m", "adcloud.algos", "busyloop", "--micros", str(args.micros)],
                )
            table[workers] = report.wall_s
            print(f"workers={workers:2d}  partitions={dataset.num_partitions}  "
                  f"records={report.records_replayed}  wall={report.wall_s:8.2f}s")

    base = table[worker_counts[0]]
    print("\nspeedup vs "
          f"{worker_counts[0]} worker(s): "
          + "  ".join(f"{w}w: {base / t:.2f}x" for w, t in table.items()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
