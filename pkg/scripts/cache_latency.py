#!/usr/bin/env python3
"""Tier latency trend: mean read latency from MEM vs the backing store.

Reads one block repeatedly while resident in MEM, then again after dropping
the caches each time so the read falls through to the backing directory.
"""

import argparse
import os
import sys
import tempfile
import time

from adcloud.storage import TierConfig, TieredStore


def mean_latency(store, key, repeats, drop_first):
    times = []
    for _ in range(repeats):
        if drop_first:
            store.drop_caches()
        t0 = time.perf_counter()
        store.get(key)
        times.append(time.perf_counter() - t0)
    return sum(times) / len(times)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--block-mb", type=float, default=1.0)
    parser.add_argument("--repeats", type=int, default=25)
    args = parser.parse_args()

    size = int(args.block_mb * 2**20)
    with tempfile.TemporaryDirectory() as tmp:
        config = TierConfig(4 * size, 8 * size, 16 * size,
                            f"{tmp}/backing", f"{tmp}/cache")
        with TieredStore(config) as store:
            store.put("block", os.urandom(size), persist=True)
            store.flush_barrier()
            store.get("block")  # warm MEM
            mem = mean_latency(store, "block", args.repeats, drop_first=False)
            backing = mean_latency(store, "block", args.repeats, drop_first=True)

    print(f"block size:      {size / 2**20:.1f} MiB")
    print(f"MEM hit:         {mem * 1e6:10.1f} us")
    print(f"backing read:    {backing * 1e6:10.1f} us")
    print(f"ratio:           {backing / mem:10.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
