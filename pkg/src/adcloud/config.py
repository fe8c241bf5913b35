"""JSON config files for the CLI: parsing, validation, canonical form.

Every parser fills defaults and validates field by field; errors name the
offending field path. ``canonical_json`` of a parsed config is idempotent
(dump(parse(f)) == dump(parse(dump(parse(f))))), which the tests rely on.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from .errors import ConfigError
from .mapgen.raster import DEFAULT_CELL_SIZE

DEFAULT_RETRIES = 1


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(path, "file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(path, f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(path, "top level must be a JSON object")
    return data


class _Fields:
    """Field extraction with path-qualified errors."""

    def __init__(self, data: dict, prefix: str = ""):
        self.data = data
        self.prefix = prefix

    def path(self, name: str) -> str:
        return f"{self.prefix}{name}"

    def get(self, name: str, kind, default, minimum=None):
        value = self.data.get(name, default)
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
            raise ConfigError(self.path(name), f"expected {kind.__name__}, got {value!r}")
        if minimum is not None and value < minimum:
            raise ConfigError(self.path(name), f"must be >= {minimum}, got {value!r}")
        return value

    def reject_unknown(self, known: set[str]) -> None:
        for key in self.data:
            if key not in known:
                raise ConfigError(self.path(key), "unknown field")


@dataclass
class ClusterFileConfig:
    workers: int = 2
    cpu_slots: int = 2
    accel_slots: int = 0
    mem_bytes: int = 64 * 1024 * 1024
    disk1_bytes: int = 256 * 1024 * 1024
    disk2_bytes: int = 1024 * 1024 * 1024
    retries: int = DEFAULT_RETRIES


def parse_cluster_config(source: str | dict) -> ClusterFileConfig:
    data = _load_json(source) if isinstance(source, str) else source
    f = _Fields(data)
    f.reject_unknown({"workers", "cpu_slots", "accel_slots", "mem_bytes",
                      "disk1_bytes", "disk2_bytes", "retries"})
    config = ClusterFileConfig(
        workers=f.get("workers", int, 2, minimum=1),
        cpu_slots=f.get("cpu_slots", int, 2, minimum=0),
        accel_slots=f.get("accel_slots", int, 0, minimum=0),
        mem_bytes=f.get("mem_bytes", int, ClusterFileConfig.mem_bytes, minimum=1),
        disk1_bytes=f.get("disk1_bytes", int, ClusterFileConfig.disk1_bytes, minimum=1),
        disk2_bytes=f.get("disk2_bytes", int, ClusterFileConfig.disk2_bytes, minimum=1),
        retries=f.get("retries", int, DEFAULT_RETRIES, minimum=0),
    )
    if config.cpu_slots + config.accel_slots == 0:
        raise ConfigError("cpu_slots", "need at least one slot per worker")
    if config.retries > 1:
        raise ConfigError("retries", "only 0 or 1 retries are supported")
    return config


@dataclass
class TrainFileConfig:
    model: str = "LINEAR_REGRESSION"
    learning_rate: float = 0.1
    iterations: int = 50
    shards: int = 2
    seed: int = 0
    workers: int = 2
    checkpoint_every: int = 0


def parse_train_config(source: str | dict) -> TrainFileConfig:
    data = _load_json(source) if isinstance(source, str) else source
    f = _Fields(data)
    f.reject_unknown({"model", "learning_rate", "iterations", "shards", "seed",
                      "workers", "checkpoint_every"})
    model = f.get("model", str, TrainFileConfig.model)
    if model not in ("LINEAR_REGRESSION", "LOGISTIC_REGRESSION"):
        raise ConfigError("model", f"unknown model {model!r}")
    lr = f.get("learning_rate", float, TrainFileConfig.learning_rate)
    if not lr >= 0:
        raise ConfigError("learning_rate", "must be >= 0")
    return TrainFileConfig(
        model=model,
        learning_rate=lr,
        iterations=f.get("iterations", int, TrainFileConfig.iterations, minimum=1),
        shards=f.get("shards", int, TrainFileConfig.shards, minimum=1),
        seed=f.get("seed", int, 0),
        workers=f.get("workers", int, 2, minimum=1),
        checkpoint_every=f.get("checkpoint_every", int, 0, minimum=0),
    )


@dataclass
class MapFileConfig:
    log_dir: str = "."
    cell_size: float = DEFAULT_CELL_SIZE
    pipelined: bool = True
    workers: int = 2
    labels: dict = field(default_factory=dict)
    sigma0: float = 0.05
    drift_per_meter: float = 0.05
    gps_window_s: float = 0.5
    icp_max_iterations: int = 30
    icp_epsilon: float = 1e-8
    icp_max_correspondence_m: float = 2.0


def parse_map_config(source: str | dict) -> MapFileConfig:
    data = _load_json(source) if isinstance(source, str) else source
    f = _Fields(data)
    f.reject_unknown({"log_dir", "cell_size", "pipelined", "workers", "labels",
                      "sigma0", "drift_per_meter", "gps_window_s",
                      "icp_max_iterations", "icp_epsilon", "icp_max_correspondence_m"})
    cell_size = f.get("cell_size", float, DEFAULT_CELL_SIZE)
    if cell_size <= 0:
        raise ConfigError("cell_size", "must be > 0")
    labels = data.get("labels", {})
    if labels is None:
        labels = {}
    if not isinstance(labels, dict):
        raise ConfigError("labels", "must be an object")
    return MapFileConfig(
        log_dir=f.get("log_dir", str, "."),
        cell_size=cell_size,
        pipelined=f.get("pipelined", bool, True),
        workers=f.get("workers", int, 2, minimum=1),
        labels=labels,
        sigma0=f.get("sigma0", float, 0.05),
        drift_per_meter=f.get("drift_per_meter", float, 0.05),
        gps_window_s=f.get("gps_window_s", float, 0.5),
        icp_max_iterations=f.get("icp_max_iterations", int, 30, minimum=1),
        icp_epsilon=f.get("icp_epsilon", float, 1e-8),
        icp_max_correspondence_m=f.get("icp_max_correspondence_m", float, 2.0),
    )


@dataclass
class PlanFileConfig:
    source_glob: str
    partitioner: dict
    ops: list[dict]
    backend: str = "cpu"
    persist_output: bool = True


def parse_plan_config(source: str | dict) -> PlanFileConfig:
    data = _load_json(source) if isinstance(source, str) else source
    f = _Fields(data)
    f.reject_unknown({"source", "ops", "backend", "persist_output"})
    src = data.get("source")
    if not isinstance(src, dict) or "glob" not in src:
        raise ConfigError("source", "must be an object with a 'glob' field")
    partitioner = src.get("partitioner", {"kind": "BY_FILE"})
    kind = partitioner.get("kind")
    if kind not in ("BY_FILE", "BY_RECORD_COUNT", "BY_TIME_WINDOW"):
        raise ConfigError("source.partitioner.kind", f"unknown partitioner {kind!r}")
    if kind == "BY_RECORD_COUNT" and int(partitioner.get("count", 0)) < 1:
        raise ConfigError("source.partitioner.count", "must be >= 1")
    if kind == "BY_TIME_WINDOW" and float(partitioner.get("seconds", 0)) <= 0:
        raise ConfigError("source.partitioner.seconds", "must be > 0")

    ops = data.get("ops")
    if not isinstance(ops, list) or not ops:
        raise ConfigError("ops", "must be a non-empty array")
    for i, op in enumerate(ops):
        if not isinstance(op, dict) or "name" not in op or "kind" not in op:
            raise ConfigError(f"ops[{i}]", "needs name and kind")
        if op["kind"] not in ("MAP_PARTITIONS", "BRIDGE", "REDUCE"):
            raise ConfigError(f"ops[{i}].kind", f"unknown kind {op['kind']!r}")

    backend = f.get("backend", str, "cpu")
    if backend not in ("cpu", "accel"):
        raise ConfigError("backend", "must be 'cpu' or 'accel'")
    return PlanFileConfig(
        source_glob=src["glob"],
        partitioner=partitioner,
        ops=[{"name": op["name"], "kind": op["kind"], "config": op.get("config", {})}
             for op in ops],
        backend=backend,
        persist_output=f.get("persist_output", bool, True),
    )


def canonical_json(config) -> str:
    data = asdict(config) if hasattr(config, "__dataclass_fields__") else config
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def adcloud_home() -> str:
    return os.environ.get("ADCLOUD_HOME", os.path.expanduser("~/.adcloud"))
