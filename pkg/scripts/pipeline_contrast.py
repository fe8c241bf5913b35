#!/usr/bin/env python3
"""Pipelined vs staged execution: bytes persisted to the backing store.

Runs the same work twice: once with intermediates kept in cache tiers
(single pipelined job) and once with every stage's output persisted
(separate jobs), for both the preprocess+train loop and the map pipeline.
"""

import argparse
import sys
import tempfile

from adcloud import engine, trainer
from adcloud.mapgen import MapJobConfig, run_map_pipeline, simulate
from adcloud.trainer import LINEAR_REGRESSION, TrainConfig


def train_contrast(tmp: str) -> None:
    records = trainer.synth_linear_records(400, seed=3, noise=0.1)
    config = TrainConfig(LINEAR_REGRESSION, 0.2, 5, 4)
    results = {}
    for pipelined in (True, False):
        mode = "pipelined" if pipelined else "staged"
        with engine.start_cluster(2, base_dir=f"{tmp}/train-{mode}") as cluster:
            _params, _losses, persisted = trainer.preprocess_then_train(
                config, records, cluster, scale_factor=0.5, pipelined=pipelined)
        results[mode] = persisted
    print("preprocess+train persisted bytes: "
          f"pipelined={results['pipelined']}, staged={results['staged']}")


def map_contrast(tmp: str, duration: float) -> None:
    drive = simulate.generate_drive(simulate.DriveConfig(duration_s=duration, seed=7))
    logs = f"{tmp}/logs"
    simulate.write_drive_logs(drive, logs)
    results = {}
    for pipelined in (True, False):
        mode = "pipelined" if pipelined else "staged"
        with engine.start_cluster(2, base_dir=f"{tmp}/map-{mode}") as cluster:
            _grid, metrics = run_map_pipeline(cluster, MapJobConfig(
                log_dir=logs, out_path=f"{tmp}/{mode}.adhm", pipelined=pipelined))
        results[mode] = metrics["bytes_persisted"]
    print("map pipeline persisted bytes:     "
          f"pipelined={results['pipelined']}, staged={results['staged']}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--drive-seconds", type=float, default=10.0)
    args = parser.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        train_contrast(tmp)
        map_contrast(tmp, args.drive_seconds)
    return 0


if __name__ == "__main__":
    sys.exit(main())
