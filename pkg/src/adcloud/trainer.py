"""Synchronous data-parallel training with a storage-backed parameter server.

Convex stand-in models (linear and logistic regression, weights plus
intercept) keep every numeric claim checkable: gradients against finite
differences, convergence against the closed-form least-squares solution, and
the distributed loop against a sequential oracle, bit for bit.

Bit-identity across shard and worker counts comes from fixed expression
trees (see adcloud.detsum): every per-shard quantity is the canonical
halving-tree sum over its contiguous sample range, shards are split on
halving-tree boundaries, and the server combines raw shard sums (equal to
n_s times the shard mean in exact arithmetic) with the same tree before the
single division by the total sample count. Re-multiplying the rounded shard
mean by n_s instead would reintroduce a rounding step that breaks the
equality, so updates carry both the mean (the per-shard contract) and the
exact tree sum (what aggregation consumes).
"""

from __future__ import annotations

import base64
from dataclasses import dataclass

import numpy as np

from . import binstream
from .detsum import row_dots, split_ranges, tree_reduce, tree_sum
from .engine import Cluster, DatasetRef, OpCall, OpKind, StagePlan, register_op
from .errors import (
    ConfigError,
    DimensionMismatch,
    EmptyInput,
    MissingUpdate,
    NonFiniteGradient,
    StaleIteration,
)
from .storage import TieredStore

LINEAR_REGRESSION = "LINEAR_REGRESSION"
LOGISTIC_REGRESSION = "LOGISTIC_REGRESSION"
_MODELS = (LINEAR_REGRESSION, LOGISTIC_REGRESSION)


@dataclass
class TrainConfig:
    model: str
    learning_rate: float
    iterations: int
    shards: int
    seed: int = 0
    checkpoint_every: int = 0  # 0: never persist parameter blocks

    def __post_init__(self):
        if self.model not in _MODELS:
            raise ConfigError("model", f"must be one of {_MODELS}")
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate", "must be >= 0")
        if self.iterations < 1:
            raise ConfigError("iterations", "must be >= 1")
        if self.shards < 1:
            raise ConfigError("shards", "must be >= 1")


@dataclass
class ParameterSet:
    version: int
    values: np.ndarray  # float64, length D = features + 1 (intercept last)

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.version, self.values.copy())


@dataclass
class GradientUpdate:
    shard_id: int
    iteration: int
    gradient: np.ndarray       # mean per-sample gradient over the shard
    gradient_sum: np.ndarray   # halving-tree sum (n_s * mean, exactly)
    sample_count: int
    loss_sum: float


# --- dataset records -------------------------------------------------------------


def sample_record(features: np.ndarray, label: float) -> tuple:
    """Dataset wire record: raw little-endian feature vector plus label."""
    return (np.asarray(features, dtype="<f8").tobytes(), float(label))


def decode_samples(records) -> tuple[np.ndarray, np.ndarray]:
    if not records:
        raise EmptyInput("no training samples")
    rows, labels = [], []
    width = None
    for rec in records:
        feats = np.frombuffer(rec[0], dtype="<f8")
        if width is None:
            width = feats.size
        elif feats.size != width:
            raise DimensionMismatch(f"feature width {feats.size} != {width}")
        rows.append(feats)
        labels.append(rec[1])
    return np.array(rows, dtype=np.float64), np.array(labels, dtype=np.float64)


# --- models ------------------------------------------------------------------------


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _per_sample(model: str, values: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Per-sample loss vector and gradient scale factor (both length n)."""
    z = row_dots(x, values[:-1]) + values[-1]
    if model == LINEAR_REGRESSION:
        err = z - y
        return 0.5 * err * err, err
    # logistic: y in {0, 1}; numerically stable log-loss
    losses = np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))
    return losses, _stable_sigmoid(z) - y


def mean_loss(model: str, values: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    losses, _ = _per_sample(model, values, x, y)
    return float(tree_sum(losses[:, None])[0] / len(y))


# --- sharding and gradients -----------------------------------------------------------


def shard_data(records, shards: int) -> list[list]:
    """Contiguous shards with sizes differing by at most one."""
    if not records:
        raise EmptyInput("cannot shard an empty dataset")
    if shards > len(records):
        raise EmptyInput(f"{shards} shards over {len(records)} samples leaves some empty")
    return [records[lo:hi] for lo, hi in split_ranges(len(records), shards)]


def local_gradient(
    model: str,
    params: ParameterSet,
    x: np.ndarray,
    y: np.ndarray,
    shard_id: int,
    iteration: int,
) -> GradientUpdate:
    if x.shape[1] + 1 != params.values.size:
        raise DimensionMismatch(
            f"{x.shape[1]} features need {x.shape[1] + 1} parameters, "
            f"got {params.values.size}"
        )
    with np.errstate(over="ignore", invalid="ignore"):
        losses, scale = _per_sample(model, params.values, x, y)
        grads = np.concatenate([x * scale[:, None], scale[:, None]], axis=1)
        gradient_sum = tree_sum(grads)
    if not np.all(np.isfinite(gradient_sum)):
        raise NonFiniteGradient(f"shard {shard_id} at iteration {iteration}")
    return GradientUpdate(
        shard_id=shard_id,
        iteration=iteration,
        gradient=gradient_sum / len(y),
        gradient_sum=gradient_sum,
        sample_count=len(y),
        loss_sum=float(tree_sum(losses[:, None])[0]),
    )


# --- parameter server ------------------------------------------------------------------


def encode_update(update: GradientUpdate) -> tuple:
    return (
        update.shard_id,
        update.iteration,
        update.sample_count,
        update.gradient.astype("<f8").tobytes(),
        update.gradient_sum.astype("<f8").tobytes(),
        update.loss_sum,
    )


def decode_update(record) -> GradientUpdate:
    return GradientUpdate(
        shard_id=record[0],
        iteration=record[1],
        sample_count=record[2],
        gradient=np.frombuffer(record[3], dtype="<f8").copy(),
        gradient_sum=np.frombuffer(record[4], dtype="<f8").copy(),
        loss_sum=record[5],
    )


def encode_params(params: ParameterSet) -> tuple:
    return (params.version, params.values.astype("<f8").tobytes())


def decode_params(record) -> ParameterSet:
    return ParameterSet(record[0], np.frombuffer(record[1], dtype="<f8").copy())


class ParameterServer:
    """Versioned parameters and per-iteration gradient blocks in a tiered store.

    Parameter blocks stay cache-only; checkpoints (every ``checkpoint_every``
    iterations) are the explicit durability points.
    """

    def __init__(self, store: TieredStore, config: TrainConfig, init_values: np.ndarray):
        self.store = store
        self.config = config
        self.params = ParameterSet(0, np.asarray(init_values, dtype=np.float64))
        self._received: dict[int, GradientUpdate] = {}
        self._write_params()

    def _write_params(self) -> None:
        payload = binstream.serialize_partition_bytes([encode_params(self.params)])
        self.store.put(f"ps/params/{self.params.version}", payload, persist=False)
        every = self.config.checkpoint_every
        if every and self.params.version % every == 0 and self.params.version > 0:
            self.store.put(f"ps/checkpoint/{self.params.version}", payload, persist=True)

    def read_params(self, version: int | None = None) -> ParameterSet:
        version = self.params.version if version is None else version
        payload = self.store.get(f"ps/params/{version}")
        return decode_params(binstream.deserialize_partition_bytes(payload)[0])

    def push(self, update: GradientUpdate) -> None:
        if update.iteration != self.params.version:
            raise StaleIteration(
                f"update for iteration {update.iteration}, server at {self.params.version}"
            )
        payload = binstream.serialize_partition_bytes([encode_update(update)])
        self.store.put(f"ps/grad/{update.iteration}/{update.shard_id}", payload, persist=False)
        self._received[update.shard_id] = update

    def aggregate_and_broadcast(self) -> tuple[ParameterSet, float]:
        """Combine all shard updates, step, bump the version, publish."""
        expected = set(range(self.config.shards))
        missing = expected - set(self._received)
        if missing:
            raise MissingUpdate(f"iteration {self.params.version} missing shards {sorted(missing)}")

        updates = []
        for shard_id in sorted(expected):
            key = f"ps/grad/{self.params.version}/{shard_id}"
            records = binstream.deserialize_partition_bytes(self.store.get(key))
            updates.append(decode_update(records[0]))

        total_n = sum(u.sample_count for u in updates)
        grad_total = tree_reduce([u.gradient_sum for u in updates], lambda a, b: a + b)
        loss_total = tree_reduce([np.array([u.loss_sum]) for u in updates], lambda a, b: a + b)[0]
        full_gradient = grad_total / total_n
        new_values = self.params.values - self.config.learning_rate * full_gradient
        if not np.all(np.isfinite(new_values)):
            raise NonFiniteGradient(
                f"parameters diverged at iteration {self.params.version}"
            )
        self.params = ParameterSet(self.params.version + 1, new_values)
        self._received = {}
        self._write_params()
        return self.params, float(loss_total / total_n)


# --- engine op --------------------------------------------------------------------


def _gradient_op(records, ctx):
    """Per-shard gradient task: decode samples, compute, emit one update record."""
    config = ctx.config
    if (
        ctx.attempt == 0
        and config.get("fail_partition") == ctx.partition_index
        and config.get("fail_iteration", config["iteration"]) == config["iteration"]
    ):
        raise RuntimeError(f"injected gradient fault on shard {ctx.partition_index}")
    x, y = decode_samples(records)
    values = np.frombuffer(base64.b64decode(config["params_b64"]), dtype="<f8").copy()
    params = ParameterSet(config["iteration"], values)
    update = local_gradient(
        config["model"], params, x, y,
        shard_id=ctx.partition_index, iteration=config["iteration"],
    )
    return [encode_update(update)]


def _scale_features(records, ctx):
    """Preprocessing stand-in: multiply features by a constant factor."""
    factor = ctx.config.get("factor", 1.0)
    out = []
    for rec in records:
        feats = np.frombuffer(rec[0], dtype="<f8") * factor
        out.append((feats.astype("<f8").tobytes(), rec[1]))
    return out


register_op("trainer.gradient", OpKind.MAP_PARTITIONS, _gradient_op)
register_op("trainer.scale", OpKind.MAP_PARTITIONS, _scale_features)


# --- training loops ------------------------------------------------------------------


def _init_values(config: TrainConfig, num_features: int) -> np.ndarray:
    # Zero init: deterministic and shared by the distributed loop and oracle.
    return np.zeros(num_features + 1, dtype=np.float64)


def _run_iterations(
    config: TrainConfig,
    dataset: DatasetRef,
    cluster: Cluster,
    server: ParameterServer,
    fault: dict | None = None,
) -> tuple[list[float], int]:
    losses = []
    persisted = 0
    for iteration in range(config.iterations):
        op_config = {
            "model": config.model,
            "iteration": iteration,
            "params_b64": base64.b64encode(
                server.params.values.astype("<f8").tobytes()
            ).decode("ascii"),
        }
        if fault is not None and fault.get("iteration") == iteration:
            op_config["fail_partition"] = fault["partition"]
            op_config["fail_iteration"] = iteration
        plan = StagePlan(
            source=dataset,
            ops=[OpCall("trainer.gradient", OpKind.MAP_PARTITIONS, op_config)],
            persist_output=False,
        )
        result = cluster.submit(plan)
        persisted += result.metrics["bytes_persisted"]
        for shard_records in cluster.collect_partitions(result.dataset):
            server.push(decode_update(shard_records[0]))
        _params, loss = server.aggregate_and_broadcast()
        losses.append(loss)
    return losses, persisted


def _feature_width(records) -> int:
    return len(np.frombuffer(records[0][0], dtype="<f8"))


def train(
    config: TrainConfig,
    records,
    cluster: Cluster,
    store: TieredStore | None = None,
    fault: dict | None = None,
) -> tuple[ParameterSet, list[float], dict]:
    """Distributed synchronous training over ``config.shards`` engine partitions."""
    shards = shard_data(list(records), config.shards)
    dataset = cluster.parallelize(shards, persist=True, id_hint="train")
    server = ParameterServer(store or cluster.driver_store, config,
                             _init_values(config, _feature_width(records)))
    losses, persisted = _run_iterations(config, dataset, cluster, server, fault)
    return server.params, losses, {"bytes_persisted_during_iterations": persisted}


def preprocess_then_train(
    config: TrainConfig,
    records,
    cluster: Cluster,
    scale_factor: float,
    pipelined: bool,
) -> tuple[ParameterSet, list[float], int]:
    """Preprocess (feature scaling) then train, returning total persisted bytes.

    ``pipelined=True`` keeps the scaled intermediate in cache tiers;
    ``pipelined=False`` persists it as a separate job's output, the Fig-7
    style contrast.
    """
    shards = shard_data(list(records), config.shards)
    dataset = cluster.parallelize(shards, persist=True, id_hint="raw")
    scale_job = cluster.submit(StagePlan(
        source=dataset,
        ops=[OpCall("trainer.scale", OpKind.MAP_PARTITIONS, {"factor": scale_factor})],
        persist_output=not pipelined,
    ))
    server = ParameterServer(cluster.driver_store, config,
                             _init_values(config, _feature_width(records)))
    losses, persisted = _run_iterations(config, scale_job.dataset, cluster, server)
    total_persisted = scale_job.metrics["bytes_persisted"] + persisted
    return server.params, losses, total_persisted


def synth_linear_records(
    n: int, seed: int = 0, slope: float = 2.0, intercept: float = 1.0, noise: float = 0.0
) -> list[tuple]:
    """Samples of y = slope*x + intercept (+ optional Gaussian noise)."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, n)
    y = slope * x + intercept + (noise * rng.standard_normal(n) if noise else 0.0)
    return [sample_record([xi], yi) for xi, yi in zip(x, y)]


def synth_logistic_records(n: int, seed: int = 0, features: int = 2) -> list[tuple]:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, features))
    true_w = rng.standard_normal(features)
    y = (x @ true_w + 0.3 * rng.standard_normal(n) > 0).astype(np.float64)
    return [sample_record(xi, yi) for xi, yi in zip(x, y)]


def single_node_oracle(config: TrainConfig, records) -> tuple[ParameterSet, list[float]]:
    """Sequential twin of train(): same shard split, same summation trees."""
    shards = shard_data(list(records), config.shards)
    decoded = [decode_samples(s) for s in shards]
    num_features = decoded[0][0].shape[1]
    params = ParameterSet(0, _init_values(config, num_features))
    losses = []
    for iteration in range(config.iterations):
        updates = [
            local_gradient(config.model, params, x, y, shard_id=i, iteration=iteration)
            for i, (x, y) in enumerate(decoded)
        ]
        total_n = sum(u.sample_count for u in updates)
        grad_total = tree_reduce([u.gradient_sum for u in updates], lambda a, b: a + b)
        loss_total = tree_reduce([np.array([u.loss_sum]) for u in updates],
                                 lambda a, b: a + b)[0]
        new_values = params.values - config.learning_rate * (grad_total / total_n)
        if not np.all(np.isfinite(new_values)):
            raise NonFiniteGradient(f"parameters diverged at iteration {iteration}")
        params = ParameterSet(iteration + 1, new_values)
        losses.append(float(loss_total / total_n))
    return params, losses
