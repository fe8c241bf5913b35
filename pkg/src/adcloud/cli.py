"""adcloud: one command surface over the engine, storage, and services.

State lives under ADCLOUD_HOME (default ~/.adcloud): the saved cluster
config, per-job metrics, and the storage counters of the most recent run.
Clusters are ephemeral per command (no daemon mode); `cluster start` health-
checks a cluster and saves its configuration as the default for later
commands. Exit codes: 0 success, 1 job failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import config as cfg
from . import engine, simharness, trainer
from .engine import ByFile, ByRecordCount, ByTimeWindow, OpCall, StagePlan
from .errors import AdcloudError, ConfigError
from .mapgen import MapJobConfig, run_map_pipeline, simulate
from .mapgen.pose import FuseConfig

BUILTIN_ALGOS = ("identity", "byteflip", "rotate", "busyloop", "crashy")


def _home() -> str:
    home = cfg.adcloud_home()
    os.makedirs(home, exist_ok=True)
    return home


def _emit(data: dict, as_json: bool, summary: str | None = None) -> None:
    if as_json or summary is None:
        print(json.dumps(data, indent=2, sort_keys=True))
    else:
        print(summary)


def _start_cluster(file_config: cfg.ClusterFileConfig, workers: int | None = None):
    return engine.Cluster(engine.ClusterConfig(
        workers=workers or file_config.workers,
        cpu_slots=file_config.cpu_slots,
        accel_slots=file_config.accel_slots,
        mem_bytes=file_config.mem_bytes,
        disk1_bytes=file_config.disk1_bytes,
        disk2_bytes=file_config.disk2_bytes,
        retries=file_config.retries,
    ))


def _saved_cluster_config() -> cfg.ClusterFileConfig:
    path = os.path.join(_home(), "cluster.json")
    if os.path.exists(path):
        return cfg.parse_cluster_config(path)
    return cfg.ClusterFileConfig()


def _dump_storage_stats(cluster) -> None:
    stats = cluster.storage_stats()
    with open(os.path.join(_home(), "storage-stats.json"), "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)


def _resolve_algo(algo: str, algo_args: str) -> tuple[str, list[str]]:
    extra = algo_args.split() if algo_args else []
    if algo in BUILTIN_ALGOS:
        return sys.executable, ["-m", "adcloud.algos", algo, *extra]
    return algo, extra


def _partitioner_from_dict(spec: dict):
    kind = spec.get("kind", "BY_FILE")
    if kind == "BY_FILE":
        return ByFile()
    if kind == "BY_RECORD_COUNT":
        return ByRecordCount(int(spec["count"]))
    return ByTimeWindow(float(spec["seconds"]))


# --- subcommands ---------------------------------------------------------------


def cmd_cluster_start(args) -> int:
    slots = {"cpu": 2, "accel": 0}
    if args.slots:
        for part in args.slots.split(","):
            name, _, count = part.partition("=")
            if name not in slots or not count.isdigit():
                raise ConfigError("slots", f"bad slot spec {part!r}")
            slots[name] = int(count)
    file_config = cfg.parse_cluster_config({
        "workers": args.workers, "cpu_slots": slots["cpu"], "accel_slots": slots["accel"],
    })
    with _start_cluster(file_config) as cluster:
        info = {
            "workers": cluster.worker_ids,
            "port": cluster.port,
            "slots": slots,
            "base_dir": cluster.base_dir,
            "storage": cluster.storage_stats(),
        }
        _dump_storage_stats(cluster)
    path = os.path.join(_home(), "cluster.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(cfg.canonical_json(file_config))
    _emit(info, args.json,
          f"cluster ok: {len(info['workers'])} workers, config saved to {path}")
    return 0


def cmd_job_submit(args) -> int:
    plan_config = cfg.parse_plan_config(args.plan)
    cluster_config = _saved_cluster_config()
    with _start_cluster(cluster_config) as cluster:
        dataset = cluster.ingest(plan_config.source_glob,
                                 _partitioner_from_dict(plan_config.partitioner))
        plan = StagePlan(
            source=dataset,
            ops=[OpCall(op["name"], op["kind"], op["config"]) for op in plan_config.ops],
            backend=plan_config.backend,
            persist_output=plan_config.persist_output,
        )
        result = cluster.submit(plan)
        _dump_storage_stats(cluster)
    job_id = result.metrics["job_id"]
    jobs_dir = os.path.join(_home(), "jobs")
    os.makedirs(jobs_dir, exist_ok=True)
    with open(os.path.join(jobs_dir, f"{job_id}.json"), "w", encoding="utf-8") as fh:
        json.dump(result.metrics, fh, indent=2, sort_keys=True)
    summary = {
        "job_id": job_id,
        "dataset": result.dataset.id,
        "num_partitions": result.dataset.num_partitions,
        "wall_s": result.metrics["wall_s"],
        "bytes_persisted": result.metrics["bytes_persisted"],
    }
    _emit(summary, args.json, f"{job_id} ok: dataset {result.dataset.id}")
    return 0


def cmd_job_metrics(args) -> int:
    path = os.path.join(_home(), "jobs", f"{args.job_id}.json")
    if not os.path.exists(path):
        raise AdcloudError(f"no metrics for job {args.job_id!r}")
    with open(path, encoding="utf-8") as fh:
        print(fh.read().rstrip())
    return 0


def cmd_storage_stats(args) -> int:
    path = os.path.join(_home(), "storage-stats.json")
    if not os.path.exists(path):
        raise AdcloudError("no storage stats recorded yet; run a job first")
    with open(path, encoding="utf-8") as fh:
        print(fh.read().rstrip())
    return 0


def cmd_sim_synth(args) -> int:
    count = simharness.synth_bag(
        args.out, args.topics.split(","), args.rate, args.duration,
        payload_size=args.payload_size, seed=args.seed,
    )
    _emit({"out": args.out, "records": count}, args.json,
          f"wrote {count} records to {args.out}")
    return 0


def cmd_sim_run(args) -> int:
    cluster_config = _saved_cluster_config()
    executable, algo_args = _resolve_algo(args.algo, args.algo_args)
    partitioner = ByRecordCount(args.split_records) if args.split_records else ByFile()
    with _start_cluster(cluster_config, workers=args.workers) as cluster:
        dataset = simharness.load_bag(cluster, args.bag, partitioner)
        golden = None
        if args.golden:
            golden = simharness.load_bag(cluster, args.golden, partitioner)
        report = simharness.replay(cluster, dataset, executable, algo_args, golden=golden)
        _dump_storage_stats(cluster)
    if args.report:
        simharness.write_report(report, args.report)
    _emit(report.to_dict(), args.json,
          f"replayed {report.records_replayed} records, "
          f"mismatches: {report.mismatches}")
    return 0


def cmd_train(args) -> int:
    train_config = cfg.parse_train_config(args.config)
    records = engine.driver.read_partition_file(args.data)
    tc = trainer.TrainConfig(
        model=train_config.model,
        learning_rate=train_config.learning_rate,
        iterations=train_config.iterations,
        shards=train_config.shards,
        seed=train_config.seed,
        checkpoint_every=train_config.checkpoint_every,
    )
    cluster_config = _saved_cluster_config()
    with _start_cluster(cluster_config, workers=train_config.workers) as cluster:
        params, losses, _metrics = trainer.train(tc, records, cluster)
        _dump_storage_stats(cluster)
    output = {
        "model": train_config.model,
        "version": params.version,
        "values": params.values.tolist(),
        "final_loss": losses[-1],
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(output, fh, indent=2, sort_keys=True)
    curve_path = args.loss_curve or os.path.splitext(args.out)[0] + ".loss.csv"
    with open(curve_path, "w", encoding="utf-8") as fh:
        fh.write("iteration,mean_loss\n")
        for i, loss in enumerate(losses):
            fh.write(f"{i},{loss!r}\n")
    _emit(output, args.json, f"trained {params.version} iterations, "
                             f"final loss {losses[-1]:.6g}, params in {args.out}")
    return 0


def cmd_map_build(args) -> int:
    map_config = cfg.parse_map_config(args.config)
    cluster_config = _saved_cluster_config()
    job = MapJobConfig(
        log_dir=map_config.log_dir,
        out_path=args.out,
        cell_size=map_config.cell_size,
        labels=map_config.labels,
        pipelined=map_config.pipelined,
        fuse=FuseConfig(
            sigma0=map_config.sigma0,
            drift_per_meter=map_config.drift_per_meter,
            gps_window_s=map_config.gps_window_s,
        ),
        icp_max_iterations=map_config.icp_max_iterations,
        icp_epsilon=map_config.icp_epsilon,
        icp_max_correspondence_m=map_config.icp_max_correspondence_m,
    )
    with _start_cluster(cluster_config, workers=map_config.workers) as cluster:
        grid, metrics = run_map_pipeline(cluster, job)
        _dump_storage_stats(cluster)
    summary = {
        "out": args.out,
        "mode": metrics["mode"],
        "cell_size": metrics["cell_size"],
        "width": grid.width,
        "height": grid.height,
        "occupied_cells": int((grid.hits > 0).sum()),
        "bytes_persisted": metrics["bytes_persisted"],
        "label_warnings": metrics["label_warnings"],
    }
    _emit(summary, args.json, f"map written to {args.out} "
                              f"({grid.width}x{grid.height} cells)")
    return 0


def cmd_map_synth_drive(args) -> int:
    drive = simulate.generate_drive(simulate.DriveConfig(
        duration_s=args.duration, seed=args.seed))
    paths = simulate.write_drive_logs(drive, args.out_dir)
    _emit({"paths": paths, "scans": len(drive.scans)}, args.json,
          f"wrote drive logs to {args.out_dir}")
    return 0


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adcloud", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    cluster = sub.add_parser("cluster", help="cluster lifecycle")
    cluster_sub = cluster.add_subparsers(dest="subcommand", required=True)
    start = cluster_sub.add_parser("start", help="health-check and save a cluster config")
    start.add_argument("--workers", type=int, default=2)
    start.add_argument("--slots", default="", help="e.g. cpu=2,accel=1")
    start.add_argument("--json", action="store_true")
    start.set_defaults(func=cmd_cluster_start)

    job = sub.add_parser("job", help="submit plans, read metrics")
    job_sub = job.add_subparsers(dest="subcommand", required=True)
    submit = job_sub.add_parser("submit")
    submit.add_argument("plan")
    submit.add_argument("--json", action="store_true")
    submit.set_defaults(func=cmd_job_submit)
    metrics = job_sub.add_parser("metrics")
    metrics.add_argument("job_id")
    metrics.add_argument("--json", action="store_true")
    metrics.set_defaults(func=cmd_job_metrics)

    storage = sub.add_parser("storage", help="storage counters")
    storage_sub = storage.add_subparsers(dest="subcommand", required=True)
    stats = storage_sub.add_parser("stats")
    stats.add_argument("--json", action="store_true")
    stats.set_defaults(func=cmd_storage_stats)

    sim = sub.add_parser("sim", help="replay simulation")
    sim_sub = sim.add_subparsers(dest="subcommand", required=True)
    run = sim_sub.add_parser("run")
    run.add_argument("--bag", required=True)
    run.add_argument("--algo", required=True,
                     help=f"executable path or builtin: {', '.join(BUILTIN_ALGOS)}")
    run.add_argument("--algo-args", default="")
    run.add_argument("--golden")
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--split-records", type=int, default=None)
    run.add_argument("--report")
    run.add_argument("--json", action="store_true")
    run.set_defaults(func=cmd_sim_run)
    synth = sim_sub.add_parser("synth")
    synth.add_argument("--out", required=True)
    synth.add_argument("--topics", default="cam")
    synth.add_argument("--rate", type=float, default=10.0)
    synth.add_argument("--duration", type=float, default=10.0)
    synth.add_argument("--payload-size", type=int, default=64)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--json", action="store_true")
    synth.set_defaults(func=cmd_sim_synth)

    train = sub.add_parser("train", help="parameter-server training")
    train.add_argument("--config", required=True)
    train.add_argument("--data", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--loss-curve")
    train.add_argument("--json", action="store_true")
    train.set_defaults(func=cmd_train)

    mp = sub.add_parser("map", help="HD map generation")
    map_sub = mp.add_subparsers(dest="subcommand", required=True)
    build = map_sub.add_parser("build")
    build.add_argument("--config", required=True)
    build.add_argument("--out", required=True)
    build.add_argument("--json", action="store_true")
    build.set_defaults(func=cmd_map_build)
    synth_drive = map_sub.add_parser("synth-drive")
    synth_drive.add_argument("--out-dir", required=True)
    synth_drive.add_argument("--duration", type=float, default=30.0)
    synth_drive.add_argument("--seed", type=int, default=7)
    synth_drive.add_argument("--json", action="store_true")
    synth_drive.set_defaults(func=cmd_map_synth_drive)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AdcloudError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
