"""Tiered block store: memory above disk tiers above a persistent backing dir.

Residency rules (the reference LRU simulation in the test suite mirrors these
exactly):

* A block lives in at most one cache tier, chosen as the highest tier whose
  capacity can hold it, after demoting least-recently-used blocks downward.
* Recency is a store-wide logical counter bumped on every put/get; the
  eviction victim of a tier is its smallest ``last_access``. Demotion keeps
  the block's recency; promotion and puts refresh it.
* Eviction out of the lowest cache tier drops the cached copy; if the
  block's current payload is not already durable or queued for persistence,
  it is pushed onto the persist queue first, so bytes are never lost (reads
  are served from the queued snapshot until the write lands).
* ``put(..., persist=True)`` snapshots the payload onto a FIFO queue drained
  by one background thread; every queued entry is written (re-puts write
  again), which keeps the persisted-byte counter and the final backing
  contents independent of drain timing. ``flush_barrier`` waits for
  everything enqueued before it.

Counter semantics per tier: ``hits`` gets served by the tier, ``misses``
probes that fell through it, ``bytes_read``/``bytes_written`` payload bytes
served from / inserted into it, ``bytes_evicted`` bytes pushed out by space
pressure, ``bytes_resident`` current occupancy. The backing store appears as
pseudo-tier ``BACKING`` whose ``bytes_persisted`` counts all backing writes.
"""

from __future__ import annotations

import json
import os
import queue
import threading
import urllib.parse
from dataclasses import dataclass

from .errors import BackingIoError, BlockTooLarge, ConfigError, NotFound

TIER_NAMES = ("MEM", "DISK1", "DISK2")
BACKING = "BACKING"

_COUNTER_KEYS = ("hits", "misses", "bytes_resident", "bytes_evicted",
                 "bytes_persisted", "bytes_read", "bytes_written")


@dataclass
class TierConfig:
    """Cache tier capacities in bytes plus on-disk locations."""

    mem_bytes: int
    disk1_bytes: int
    disk2_bytes: int
    backing_dir: str
    cache_dir: str

    def __post_init__(self):
        for name, cap in (("mem_bytes", self.mem_bytes),
                          ("disk1_bytes", self.disk1_bytes),
                          ("disk2_bytes", self.disk2_bytes)):
            if cap <= 0:
                raise ConfigError(name, "tier capacity must be positive")

    @property
    def capacities(self) -> dict[str, int]:
        return {"MEM": self.mem_bytes, "DISK1": self.disk1_bytes, "DISK2": self.disk2_bytes}


@dataclass
class Block:
    key: str
    size: int
    tier: str | None
    persisted: bool
    last_access: int
    pending: int = 0      # queued persist entries not yet written
    durable: bool = False  # current payload is in the backing store or queued for it


def _key_path(directory: str, key: str) -> str:
    return os.path.join(directory, urllib.parse.quote(key, safe="") + ".blk")


class TieredStore:
    """One worker's co-located block store."""

    def __init__(self, config: TierConfig):
        self.config = config
        self._lock = threading.RLock()
        self._clock = 0
        self._tiers: dict[str, dict[str, Block]] = {t: {} for t in TIER_NAMES}
        self._mem_payloads: dict[str, bytes] = {}
        self._blocks: dict[str, Block] = {}
        self._pending_payloads: dict[str, bytes] = {}
        self._stats = {t: dict.fromkeys(_COUNTER_KEYS, 0) for t in (*TIER_NAMES, BACKING)}
        self._io_error: Exception | None = None

        os.makedirs(config.backing_dir, exist_ok=True)
        for tier in ("DISK1", "DISK2"):
            os.makedirs(self._tier_dir(tier), exist_ok=True)

        self._queue: queue.Queue = queue.Queue()
        self._writer = threading.Thread(target=self._drain, name="persist-writer", daemon=True)
        self._writer.start()

    # --- public API ------------------------------------------------------------

    def put(self, key: str, payload: bytes, persist: bool = False) -> None:
        size = len(payload)
        with self._lock:
            target = self._fitting_tier(size, 0)
            if target is None and not persist:
                raise BlockTooLarge(
                    f"{size} bytes exceeds every cache tier; persist=False would lose it")
            self._clock += 1
            block = self._blocks.get(key)
            if block is not None and block.tier is not None:
                self._remove_from_tier(block)
            if block is None:
                block = Block(key, size, None, False, self._clock)
                self._blocks[key] = block
            block.size = size
            block.persisted = False
            block.durable = persist
            block.last_access = self._clock

            if target is not None:
                self._insert(block, payload, target)

            if persist:
                self._enqueue_persist(block, payload)

    def get(self, key: str) -> bytes:
        with self._lock:
            self._clock += 1
            block = self._blocks.get(key)
            if block is not None and block.tier is not None:
                payload = self._read_payload(block)
                tier_idx = TIER_NAMES.index(block.tier)
                for upper in TIER_NAMES[:tier_idx]:
                    self._stats[upper]["misses"] += 1
                self._stats[block.tier]["hits"] += 1
                self._stats[block.tier]["bytes_read"] += block.size
                block.last_access = self._clock
                self._promote(block, payload)
                return payload

            # Cache miss everywhere.
            for tier in TIER_NAMES:
                self._stats[tier]["misses"] += 1
            payload = self._read_backing(key)
            if payload is None:
                raise NotFound(key)
            self._stats[BACKING]["hits"] += 1
            self._stats[BACKING]["bytes_read"] += len(payload)
            if block is None:
                block = Block(key, len(payload), None, True, self._clock, durable=True)
                self._blocks[key] = block
            block.size = len(payload)
            block.durable = True  # the served copy is the backing/queued one
            block.last_access = self._clock
            target = self._fitting_tier(len(payload), 0)
            if target is not None:
                self._insert(block, payload, target)
            return payload

    def contains(self, key: str) -> bool:
        with self._lock:
            block = self._blocks.get(key)
            if block is not None and (block.tier is not None or block.pending):
                return True
            return os.path.exists(_key_path(self.config.backing_dir, key))

    def flush_barrier(self) -> None:
        """Block until every persist enqueued before this call is durable."""
        done = threading.Event()
        self._queue.put(done)
        done.wait()
        with self._lock:
            if self._io_error is not None:
                exc, self._io_error = self._io_error, None
                raise BackingIoError(str(exc)) from exc

    def drop_caches(self) -> None:
        """Simulate losing every cache tier; backing store survives."""
        with self._lock:
            for tier in TIER_NAMES:
                for block in list(self._tiers[tier].values()):
                    self._remove_from_tier(block)
            self._mem_payloads.clear()

    def stats(self) -> dict[str, dict[str, int]]:
        with self._lock:
            return {tier: dict(counters) for tier, counters in self._stats.items()}

    def keys(self) -> list[str]:
        with self._lock:
            cached = {k for k, b in self._blocks.items() if b.tier is not None or b.pending}
        backing = set()
        for name in os.listdir(self.config.backing_dir):
            if name.endswith(".blk"):
                backing.add(urllib.parse.unquote(name[: -len(".blk")]))
        return sorted(cached | backing)

    def close(self) -> None:
        self._queue.put(None)
        self._writer.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # --- tier mechanics ---------------------------------------------------------

    def _tier_dir(self, tier: str) -> str:
        return os.path.join(self.config.cache_dir, tier.lower())

    def _resident(self, tier: str) -> int:
        return self._stats[tier]["bytes_resident"]

    def _fitting_tier(self, size: int, start_idx: int) -> str | None:
        caps = self.config.capacities
        for tier in TIER_NAMES[start_idx:]:
            if size <= caps[tier]:
                return tier
        return None

    def _insert(self, block: Block, payload: bytes, tier: str) -> None:
        self._ensure_space(tier, block.size)
        block.tier = tier
        self._tiers[tier][block.key] = block
        self._write_payload(block, payload, tier)
        self._stats[tier]["bytes_resident"] += block.size
        self._stats[tier]["bytes_written"] += block.size

    def _ensure_space(self, tier: str, needed: int) -> None:
        cap = self.config.capacities[tier]
        while cap - self._resident(tier) < needed:
            victim = min(self._tiers[tier].values(), key=lambda b: b.last_access)
            self._evict(victim)

    def _evict(self, victim: Block) -> None:
        from_tier = victim.tier
        payload = self._read_payload(victim)
        self._remove_from_tier(victim)
        self._stats[from_tier]["bytes_evicted"] += victim.size
        next_idx = TIER_NAMES.index(from_tier) + 1
        target = self._fitting_tier(victim.size, next_idx)
        if target is not None:
            self._insert(victim, payload, target)
            return
        # Dropped out of the cache entirely; make sure the payload survives.
        if not victim.durable:
            victim.durable = True
            self._enqueue_persist(victim, payload)

    def _promote(self, block: Block, payload: bytes) -> None:
        if block.tier == "MEM" or block.size > self.config.mem_bytes:
            return
        self._remove_from_tier(block)
        self._insert(block, payload, "MEM")

    def _remove_from_tier(self, block: Block) -> None:
        tier = block.tier
        del self._tiers[tier][block.key]
        self._stats[tier]["bytes_resident"] -= block.size
        if tier == "MEM":
            self._mem_payloads.pop(block.key, None)
        else:
            try:
                os.unlink(_key_path(self._tier_dir(tier), block.key))
            except FileNotFoundError:
                pass
        block.tier = None

    def _read_payload(self, block: Block) -> bytes:
        if block.tier == "MEM":
            return self._mem_payloads[block.key]
        with open(_key_path(self._tier_dir(block.tier), block.key), "rb") as fh:
            return fh.read()

    def _write_payload(self, block: Block, payload: bytes, tier: str) -> None:
        if tier == "MEM":
            self._mem_payloads[block.key] = payload
        else:
            with open(_key_path(self._tier_dir(tier), block.key), "wb") as fh:
                fh.write(payload)

    # --- backing store ------------------------------------------------------------

    def _enqueue_persist(self, block: Block, payload: bytes) -> None:
        block.pending += 1
        self._pending_payloads[block.key] = payload
        self._queue.put((block.key, payload))

    def _read_backing(self, key: str) -> bytes | None:
        with self._lock:
            snapshot = self._pending_payloads.get(key)
        if snapshot is not None:
            return snapshot
        path = _key_path(self.config.backing_dir, key)
        try:
            with open(path, "rb") as fh:
                return fh.read()
        except FileNotFoundError:
            return None

    def _write_backing(self, key: str, payload: bytes) -> None:
        path = _key_path(self.config.backing_dir, key)
        tmp = path + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
        self._stats[BACKING]["bytes_persisted"] += len(payload)
        self._stats[BACKING]["bytes_written"] += len(payload)
        self._update_manifest(key, len(payload))

    def _update_manifest(self, key: str, size: int) -> None:
        path = os.path.join(self.config.backing_dir, "MANIFEST.json")
        try:
            with open(path, "r", encoding="utf-8") as fh:
                manifest = json.load(fh)
        except (FileNotFoundError, json.JSONDecodeError):
            manifest = {}
        manifest[key] = size
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        os.replace(tmp, path)

    def _drain(self) -> None:
        while True:
            item = self._queue.get()
            if item is None:
                return
            if isinstance(item, threading.Event):
                item.set()
                continue
            key, payload = item
            with self._lock:
                try:
                    self._write_backing(key, payload)
                except OSError as exc:
                    self._io_error = exc
                    continue
                block = self._blocks.get(key)
                if block is not None and block.pending > 0:
                    block.pending -= 1
                    if block.pending == 0:
                        self._pending_payloads.pop(key, None)
                        # Byte-identical to the block's current payload only
                        # if no plain put superseded the queued snapshot.
                        if block.durable:
                            block.persisted = True
