"""Single-threaded reference simulation of the tiered store semantics.

Kept deliberately independent of adcloud.storage: plain dicts, a synchronous
persist log drained only at flush barriers, and the same documented rules
(highest fitting tier, smallest-last-access victim, demotion keeps recency,
drop from the lowest tier enqueues not-yet-durable payloads for persistence).
"""

TIERS = ("MEM", "DISK1", "DISK2")
KEYS = ("hits", "misses", "bytes_resident", "bytes_evicted",
        "bytes_persisted", "bytes_read", "bytes_written")


class LruOracle:
    def __init__(self, capacities):
        self.cap = dict(capacities)  # tier -> bytes
        self.clock = 0
        self.tier_of = {}       # key -> tier name (cached blocks only)
        self.payload = {}       # key -> bytes (cached copy)
        self.size = {}
        self.last_access = {}
        self.durable = {}       # key -> current payload on disk or queued
        self.pending_count = {}
        self.pending_latest = {}
        self.queue = []         # FIFO of (key, payload)
        self.backing = {}
        self.stats = {t: dict.fromkeys(KEYS, 0) for t in (*TIERS, "BACKING")}

    # -- helpers ---------------------------------------------------------------

    def _resident(self, tier):
        return sum(self.size[k] for k, t in self.tier_of.items() if t == tier)

    def _fitting(self, size, start=0):
        for tier in TIERS[start:]:
            if size <= self.cap[tier]:
                return tier
        return None

    def _insert(self, key, payload, tier):
        self._make_room(tier, len(payload))
        self.tier_of[key] = tier
        self.payload[key] = payload
        self.stats[tier]["bytes_resident"] += len(payload)
        self.stats[tier]["bytes_written"] += len(payload)

    def _make_room(self, tier, needed):
        while self.cap[tier] - self._resident(tier) < needed:
            victim = min((k for k, t in self.tier_of.items() if t == tier),
                         key=lambda k: self.last_access[k])
            self._evict(victim)

    def _evict(self, key):
        tier = self.tier_of[key]
        payload = self.payload[key]
        self._remove_cached(key)
        self.stats[tier]["bytes_evicted"] += self.size[key]
        target = self._fitting(self.size[key], TIERS.index(tier) + 1)
        if target is not None:
            self._insert(key, payload, target)
        elif not self.durable.get(key):
            self.durable[key] = True
            self._enqueue(key, payload)

    def _remove_cached(self, key):
        tier = self.tier_of.pop(key)
        self.payload.pop(key)
        self.stats[tier]["bytes_resident"] -= self.size[key]

    def _enqueue(self, key, payload):
        self.pending_count[key] = self.pending_count.get(key, 0) + 1
        self.pending_latest[key] = payload
        self.queue.append((key, payload))

    # -- operations --------------------------------------------------------------

    def put(self, key, payload, persist):
        target = self._fitting(len(payload))
        if target is None and not persist:
            raise ValueError("block too large")
        self.clock += 1
        if key in self.tier_of:
            self._remove_cached(key)
        self.size[key] = len(payload)
        self.durable[key] = persist
        self.last_access[key] = self.clock
        if target is not None:
            self._insert(key, payload, target)
        if persist:
            self._enqueue(key, payload)

    def get(self, key):
        self.clock += 1
        if key in self.tier_of:
            tier = self.tier_of[key]
            payload = self.payload[key]
            for upper in TIERS[:TIERS.index(tier)]:
                self.stats[upper]["misses"] += 1
            self.stats[tier]["hits"] += 1
            self.stats[tier]["bytes_read"] += self.size[key]
            self.last_access[key] = self.clock
            if tier != "MEM" and self.size[key] <= self.cap["MEM"]:
                self._remove_cached(key)
                self._insert(key, payload, "MEM")
            return payload

        for tier in TIERS:
            self.stats[tier]["misses"] += 1
        if self.pending_count.get(key):
            payload = self.pending_latest[key]
        elif key in self.backing:
            payload = self.backing[key]
        else:
            raise KeyError(key)
        self.stats["BACKING"]["hits"] += 1
        self.stats["BACKING"]["bytes_read"] += len(payload)
        self.size[key] = len(payload)
        self.durable[key] = True
        self.last_access[key] = self.clock
        target = self._fitting(len(payload))
        if target is not None:
            self._insert(key, payload, target)
        return payload

    def flush_barrier(self):
        for key, payload in self.queue:
            self.backing[key] = payload
            self.stats["BACKING"]["bytes_persisted"] += len(payload)
            self.stats["BACKING"]["bytes_written"] += len(payload)
            self.pending_count[key] -= 1
            if self.pending_count[key] == 0:
                del self.pending_latest[key]
        self.queue.clear()

    def residency(self):
        out = {t: {} for t in TIERS}
        for key, tier in self.tier_of.items():
            out[tier][key] = self.size[key]
        return out
