import json
import os
import random
import shutil
import tempfile

import pytest
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, rule

from adcloud.errors import BlockTooLarge, NotFound
from adcloud.storage import TierConfig, TieredStore

from .lru_oracle import LruOracle

CAPS = {"MEM": 4000, "DISK1": 8000, "DISK2": 16000}


@pytest.fixture
def store(tmp_path):
    config = TierConfig(
        mem_bytes=CAPS["MEM"],
        disk1_bytes=CAPS["DISK1"],
        disk2_bytes=CAPS["DISK2"],
        backing_dir=str(tmp_path / "backing"),
        cache_dir=str(tmp_path / "cache"),
    )
    with TieredStore(config) as s:
        yield s


def residency(store):
    out = {t: {} for t in ("MEM", "DISK1", "DISK2")}
    for tier, blocks in store._tiers.items():
        for key, block in blocks.items():
            out[tier][key] = block.size
    return out


def sync_counters(stats):
    # backing writes happen on the async drain thread; compare them only
    # after a flush barrier
    return {
        tier: {
            k: v
            for k, v in counters.items()
            if not (tier == "BACKING" and k in ("bytes_persisted", "bytes_written"))
        }
        for tier, counters in stats.items()
    }


def test_put_get_mem_hit(store):
    store.put("k", b"x" * 100)
    assert store.get("k") == b"x" * 100
    assert store.stats()["MEM"]["hits"] == 1
    assert store.stats()["MEM"]["bytes_resident"] == 100


def test_get_unknown_key(store):
    with pytest.raises(NotFound):
        store.get("nope")


def test_block_too_large_without_persist(store):
    with pytest.raises(BlockTooLarge):
        store.put("big", b"z" * (CAPS["DISK2"] + 1), persist=False)


def test_oversized_block_persists_and_reads_back(store):
    payload = b"z" * (CAPS["DISK2"] + 1)
    store.put("big", payload, persist=True)
    store.flush_barrier()
    assert store.get("big") == payload
    assert store.stats()["BACKING"]["hits"] == 1


def test_lru_demotion_to_disk1(store):
    store.put("old", b"a" * 3000)
    store.put("new", b"b" * 3000)  # over MEM capacity: LRU "old" demotes
    res = residency(store)
    assert "old" in res["DISK1"]
    assert "new" in res["MEM"]
    # reading the demoted block promotes it back to MEM
    assert store.get("old") == b"a" * 3000
    stats = store.stats()
    assert stats["DISK1"]["hits"] == 1
    assert stats["MEM"]["misses"] == 1
    assert "old" in residency(store)["MEM"]


def test_flush_then_cache_drop_preserves_bytes(store):
    payloads = {f"k{i}": os.urandom(500) for i in range(6)}
    for key, payload in payloads.items():
        store.put(key, payload, persist=True)
    store.flush_barrier()
    store.drop_caches()
    for key, payload in payloads.items():
        assert store.get(key) == payload


def test_unpersisted_put_lost_on_cache_drop(store):
    store.put("volatile", b"v" * 10, persist=False)
    store.drop_caches()
    with pytest.raises(NotFound):
        store.get("volatile")


def test_barrier_on_idle_store_returns(store):
    store.flush_barrier()


def test_backing_layout_and_manifest(store):
    store.put("a/b 1", b"payload", persist=True)
    store.flush_barrier()
    backing = store.config.backing_dir
    files = sorted(os.listdir(backing))
    assert "a%2Fb%201.blk" in files
    with open(os.path.join(backing, "a%2Fb%201.blk"), "rb") as fh:
        assert fh.read() == b"payload"
    with open(os.path.join(backing, "MANIFEST.json"), encoding="utf-8") as fh:
        assert json.load(fh) == {"a/b 1": 7}


def test_eviction_from_lowest_tier_persists_first(store):
    # fill every tier with persist=False blocks, then push one more
    keys = [f"k{i}" for i in range(14)]
    for key in keys:
        store.put(key, key.encode() * 500, persist=False)  # ~1000-2500 bytes each
    store.flush_barrier()
    # everything must still be readable: evicted blocks went to backing
    for key in keys:
        assert store.get(key) == key.encode() * 500


def test_counters_match_hand_simulation(store):
    # Scripted scenario over 3 blocks sized to force one demotion.
    store.put("a", b"a" * 2500)          # MEM
    store.put("b", b"b" * 2500)          # MEM full: "a" -> DISK1
    store.get("a")                        # DISK1 hit, promote: "b" -> DISK1
    store.get("b")                        # DISK1 hit, promote: "a" -> DISK1
    store.get("c") if False else None
    stats = store.stats()
    assert stats["MEM"] == {
        "hits": 0, "misses": 2, "bytes_resident": 2500, "bytes_evicted": 7500,
        "bytes_persisted": 0, "bytes_read": 0, "bytes_written": 10000,
    }
    assert stats["DISK1"] == {
        "hits": 2, "misses": 0, "bytes_resident": 2500, "bytes_evicted": 0,
        "bytes_persisted": 0, "bytes_read": 5000, "bytes_written": 7500,
    }
    assert stats["DISK2"]["bytes_resident"] == 0


def test_counters_match_hand_simulation_backing_path(store):
    # One persisted block, caches dropped, then read back from backing.
    store.put("a", b"a" * 1000, persist=True)   # MEM write
    store.flush_barrier()                        # 1000 bytes persisted
    store.drop_caches()
    assert store.get("a") == b"a" * 1000         # miss everywhere, BACKING hit, re-cache
    stats = store.stats()
    assert stats["MEM"] == {
        "hits": 0, "misses": 1, "bytes_resident": 1000, "bytes_evicted": 0,
        "bytes_persisted": 0, "bytes_read": 0, "bytes_written": 2000,
    }
    assert stats["DISK1"]["misses"] == 1 and stats["DISK2"]["misses"] == 1
    assert stats["BACKING"] == {
        "hits": 1, "misses": 0, "bytes_resident": 0, "bytes_evicted": 0,
        "bytes_persisted": 1000, "bytes_read": 1000, "bytes_written": 1000,
    }
    # second get is a plain MEM hit
    store.get("a")
    assert store.stats()["MEM"]["hits"] == 1


def test_counters_match_hand_simulation_cascade(store):
    # Seven 2 KB blocks: MEM (4 KB) holds 2 and demotes five; DISK1 (8 KB)
    # holds four of those and pushes the oldest on to DISK2.
    for i in range(7):
        store.put(f"b{i}", bytes([i]) * 2000)
    res = residency(store)
    assert set(res["MEM"]) == {"b5", "b6"}
    assert set(res["DISK1"]) == {"b1", "b2", "b3", "b4"}
    assert set(res["DISK2"]) == {"b0"}
    stats = store.stats()
    assert stats["MEM"] == {
        "hits": 0, "misses": 0, "bytes_resident": 4000, "bytes_evicted": 10000,
        "bytes_persisted": 0, "bytes_read": 0, "bytes_written": 14000,
    }
    assert stats["DISK1"] == {
        "hits": 0, "misses": 0, "bytes_resident": 8000, "bytes_evicted": 2000,
        "bytes_persisted": 0, "bytes_read": 0, "bytes_written": 10000,
    }
    assert stats["DISK2"] == {
        "hits": 0, "misses": 0, "bytes_resident": 2000, "bytes_evicted": 0,
        "bytes_persisted": 0, "bytes_read": 0, "bytes_written": 2000,
    }


def run_random_ops(store, oracle, seed, ops, barrier_every=0):
    rng = random.Random(seed)
    keys = [f"blk-{i}" for i in range(100)]
    for step in range(ops):
        key = rng.choice(keys)
        action = rng.random()
        if action < 0.45:
            payload = bytes([rng.randrange(256)]) * rng.randint(50, 9000)
            persist = rng.random() < 0.4
            store.put(key, payload, persist)
            oracle.put(key, payload, persist)
        elif action < 0.9:
            try:
                expected = oracle.get(key)
            except KeyError:
                with pytest.raises(NotFound):
                    store.get(key)
            else:
                assert store.get(key) == expected
        else:
            store.flush_barrier()
            oracle.flush_barrier()
            assert store.stats() == oracle.stats
        assert residency(store) == oracle.residency(), f"diverged at step {step}"
        assert sync_counters(store.stats()) == sync_counters(oracle.stats)
    store.flush_barrier()
    oracle.flush_barrier()
    assert store.stats() == oracle.stats


@pytest.mark.parametrize("seed", [0, 1, 7])
def test_randomized_ops_match_reference_lru(store, seed):
    oracle = LruOracle(CAPS)
    run_random_ops(store, oracle, seed, ops=400)


def test_barrier_guarantees_prior_puts_only(store):
    # Everything enqueued before the barrier must be durable when it returns;
    # later puts need a later barrier.
    early = {f"e{i}": os.urandom(200) for i in range(10)}
    for key, payload in early.items():
        store.put(key, payload, persist=True)
    store.flush_barrier()
    backing = store.config.backing_dir
    for key, payload in early.items():
        with open(os.path.join(backing, f"{key}.blk"), "rb") as fh:
            assert fh.read() == payload

    store.put("late", b"later", persist=True)
    store.flush_barrier()
    with open(os.path.join(backing, "late.blk"), "rb") as fh:
        assert fh.read() == b"later"


def test_capacity_never_exceeded(store):
    rng = random.Random(99)
    for i in range(200):
        store.put(f"k{rng.randrange(40)}", b"p" * rng.randint(100, 3900),
                  persist=rng.random() < 0.3)
        stats = store.stats()
        for tier, cap in CAPS.items():
            assert stats[tier]["bytes_resident"] <= cap
    store.flush_barrier()


class StoreAgainstOracle(RuleBasedStateMachine):
    """Stateful twin-execution of the store and the reference simulation."""

    def __init__(self):
        super().__init__()
        self.tmp = tempfile.mkdtemp()
        self.store = TieredStore(TierConfig(
            CAPS["MEM"], CAPS["DISK1"], CAPS["DISK2"],
            os.path.join(self.tmp, "backing"), os.path.join(self.tmp, "cache"),
        ))
        self.oracle = LruOracle(CAPS)

    keys = st.sampled_from([f"k{i}" for i in range(12)])

    @rule(key=keys, size=st.integers(1, 9000), persist=st.booleans())
    def put(self, key, size, persist):
        payload = key.encode() * (size // len(key) + 1)
        payload = payload[:size]
        self.store.put(key, payload, persist)
        self.oracle.put(key, payload, persist)
        self.check()

    @rule(key=keys)
    def get(self, key):
        try:
            expected = self.oracle.get(key)
        except KeyError:
            with pytest.raises(NotFound):
                self.store.get(key)
        else:
            assert self.store.get(key) == expected
        self.check()

    @rule()
    def barrier(self):
        self.store.flush_barrier()
        self.oracle.flush_barrier()
        assert self.store.stats() == self.oracle.stats

    def check(self):
        assert residency(self.store) == self.oracle.residency()
        assert sync_counters(self.store.stats()) == sync_counters(self.oracle.stats)

    def teardown(self):
        self.store.close()
        shutil.rmtree(self.tmp, ignore_errors=True)


StoreAgainstOracle.TestCase.settings = settings(
    max_examples=25, stateful_step_count=40, deadline=None)
TestStoreAgainstOracle = StoreAgainstOracle.TestCase
