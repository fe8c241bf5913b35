"""Named operation registry.

Plans reference operations by name, never by shipped closures: workers are
forked from the driver process, so whatever is registered before the cluster
starts is available everywhere. Each name may carry one implementation per
slot kind ("cpu", "accel"); a plan requiring ACCEL slots runs the
accel-registered implementation of the same name.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from ..errors import DuplicateName, UnknownOp


class OpKind(str, Enum):
    MAP_PARTITIONS = "MAP_PARTITIONS"
    BRIDGE = "BRIDGE"
    REDUCE = "REDUCE"


@dataclass
class OpContext:
    """Runtime information handed to every op implementation."""

    config: dict
    partition_index: int
    attempt: int
    backend: str
    worker_id: str
    aux_records: list | None = None


@dataclass
class _OpEntry:
    kind: OpKind
    impls: dict[str, Callable] = field(default_factory=dict)


_OPS: dict[str, _OpEntry] = {}


def register_op(name: str, kind: OpKind | str, impl: Callable | None, backend: str = "cpu") -> None:
    """Make ``name`` usable in stage plans; DuplicateName on re-registration."""
    kind = OpKind(kind)
    entry = _OPS.get(name)
    if entry is None:
        entry = _OPS[name] = _OpEntry(kind)
    elif entry.kind != kind:
        raise DuplicateName(f"op {name!r} already registered with kind {entry.kind.value}")
    if backend in entry.impls:
        raise DuplicateName(f"op {name!r} already registered for backend {backend!r}")
    entry.impls[backend] = impl


def unregister_op(name: str) -> None:
    _OPS.pop(name, None)


def op_kind(name: str) -> OpKind:
    try:
        return _OPS[name].kind
    except KeyError:
        raise UnknownOp(name) from None


def impl_for(name: str, backend: str) -> Callable:
    entry = _OPS.get(name)
    if entry is None:
        raise UnknownOp(name)
    try:
        return entry.impls[backend]
    except KeyError:
        raise UnknownOp(f"op {name!r} has no {backend!r} implementation") from None


def is_registered(name: str, backend: str | None = None) -> bool:
    entry = _OPS.get(name)
    if entry is None:
        return False
    return backend is None or backend in entry.impls
