from __future__ import annotations

import numpy as np
import pytest

from mih_localmap.descriptors import (
    BinaryDescriptor,
    PerturbationSpec,
    perturb,
    random_descriptor,
)
from mih_localmap.mih import (
    INSERTED,
    MOVED_TO_FRONT,
    MihConfig,
    MihIndex,
    oracle_query,
    write_dump_csv,
)


def descriptor_with_substring(base: BinaryDescriptor, table: int, value: int,
                              width: int = 8) -> BinaryDescriptor:
    """Copy of ``base`` with substring ``table`` forced to ``value``."""
    mask = ((1 << width) - 1) << (table * width)
    return BinaryDescriptor((base.value & ~mask) | (value << (table * width)))


def test_default_config_matches_paper_defaults():
    cfg = MihConfig()
    assert cfg.table_count == 32
    assert cfg.bucket_capacity == 10
    assert cfg.substring_bits == 8
    assert cfg.dead_bits == 0


def test_dead_bits_recorded_for_non_dividing_t():
    cfg = MihConfig(table_count=3)
    assert cfg.substring_bits == 85
    assert cfg.dead_bits == 1
    index = MihIndex(cfg)
    assert index.stats().dead_bits == 1


def test_config_validation():
    with pytest.raises(ValueError):
        MihConfig(table_count=0)
    with pytest.raises(ValueError):
        MihConfig(bucket_capacity=0)
    with pytest.raises(ValueError):
        MihConfig(table_count=300)


def test_exact_self_match_in_all_tables():
    index = MihIndex()
    d = random_descriptor(1)
    index.insert(7, d)
    result = index.query(d)
    assert 7 in result.union_ids
    assert all(7 in s for s in result.per_table_ids)


def test_collision_fixture_evicts_oldest_in_table_zero_only():
    # p1..p11 share substring 0, differ elsewhere; N=10 evicts p1 from table 0.
    index = MihIndex(MihConfig(table_count=32, bucket_capacity=10))
    rng = np.random.default_rng(2)
    descriptors = {}
    for pid in range(1, 12):
        d = descriptor_with_substring(random_descriptor(rng), table=0, value=0xAB)
        descriptors[pid] = d
        report = index.insert(pid, d)
        if pid <= 10:
            assert all(o.evicted_id is None for o in report)
        else:
            assert report[0].evicted_id == 1
            assert all(o.evicted_id is None for o in report[1:])
    table0 = index.query(descriptors[2]).per_table_ids[0]
    assert table0 == set(range(2, 12))
    # p1 is still present in its other tables
    res = index.query(descriptors[1])
    assert 1 in res.union_ids
    assert 1 not in res.per_table_ids[0]


def test_reinsert_moves_to_front():
    index = MihIndex(MihConfig(table_count=4, bucket_capacity=10))
    d = random_descriptor(3)
    index.insert(1, d)
    index.insert(2, d)
    report = index.insert(1, d)
    assert all(o.action == MOVED_TO_FRONT for o in report)
    records = index.dump()
    by_position = {(r.table_index, r.position_from_front): r.point_id for r in records}
    for table in range(4):
        assert by_position[(table, 0)] == 1
        assert by_position[(table, 1)] == 2


def test_query_empty_index():
    index = MihIndex()
    result = index.query(random_descriptor(4))
    assert result.union_ids == set()
    assert all(s == set() for s in result.per_table_ids)


def test_confined_flip_hides_only_that_table():
    index = MihIndex()
    d = random_descriptor(5)
    index.insert(42, d)
    # flip bits only inside substring 5 (bit range [40, 48))
    flipped = d.flip([40, 43, 47])
    result = index.query(flipped)
    for i in range(32):
        if i == 5:
            assert 42 not in result.per_table_ids[i]
        else:
            assert 42 in result.per_table_ids[i]


def test_singleton_subset_union():
    index = MihIndex()
    d = random_descriptor(6)
    index.insert(13, d)
    result = index.query(d, table_subset={0})
    assert result.union_ids == result.per_table_ids[0]
    assert all(result.per_table_ids[i] == set() for i in range(1, 32))


def test_query_rejects_bad_subset():
    index = MihIndex()
    with pytest.raises(ValueError):
        index.query(random_descriptor(7), table_subset={32})


def test_batch_query_counts_lookups():
    index = MihIndex()
    rng = np.random.default_rng(8)
    descriptors = [random_descriptor(rng) for _ in range(17)]
    for pid, d in enumerate(descriptors):
        index.insert(pid, d)
    before = index.stats().queries
    aggregate, per_descriptor = index.batch_query(descriptors)
    assert index.stats().queries - before == 17 * 32
    assert aggregate == set(range(17))
    assert len(per_descriptor) == 17
    # subset accounting
    before = index.stats().queries
    index.batch_query(descriptors, table_subset={1, 5, 9})
    assert index.stats().queries - before == 17 * 3


def test_batch_query_empty_list():
    index = MihIndex()
    aggregate, per_descriptor = index.batch_query([])
    assert aggregate == set()
    assert per_descriptor == []


def test_queries_are_pure_reads():
    index = MihIndex(MihConfig(table_count=8))
    rng = np.random.default_rng(9)
    descriptors = [random_descriptor(rng) for _ in range(30)]
    for pid, d in enumerate(descriptors):
        index.insert(pid, d)
    first, _ = index.batch_query(descriptors)
    second, _ = index.batch_query(descriptors)
    assert first == second
    assert index.dump() == index.dump()


def test_union_query_equals_batch_union():
    index = MihIndex(MihConfig(table_count=16))
    rng = np.random.default_rng(10)
    stored = [random_descriptor(rng) for _ in range(60)]
    for pid, d in enumerate(stored):
        index.insert(pid, d)
    probes = [perturb(d, PerturbationSpec(30), rng) for d in stored[:20]]
    for subset in (None, {0, 3, 7}, {15}):
        expected, _ = index.batch_query(probes, subset)
        assert index.union_query(probes, subset) == expected


def test_stats_fresh_and_after_inserts():
    index = MihIndex(MihConfig(table_count=8))
    s = index.stats()
    assert (s.inserts, s.queries, s.evictions, s.occupied_buckets, s.stored_entries) == (
        0, 0, 0, 0, 0,
    )
    rng = np.random.default_rng(11)
    for pid in range(5):
        index.insert(pid, random_descriptor(rng))
    s = index.stats()
    assert s.inserts == 5 * 8
    assert s.stored_entries == 5 * 8
    assert s.occupied_buckets <= 5 * 8


def test_memory_bound_and_bucket_length():
    cfg = MihConfig(table_count=32, bucket_capacity=3)
    index = MihIndex(cfg)
    rng = np.random.default_rng(12)
    for pid in range(500):
        index.insert(pid, random_descriptor(rng))
    for record in index.dump():
        assert record.position_from_front < cfg.bucket_capacity
    assert index.stats().stored_entries <= 32 * 256 * 3


def test_most_recent_insert_always_retrievable():
    index = MihIndex(MihConfig(table_count=8, bucket_capacity=2))
    rng = np.random.default_rng(13)
    for pid in range(300):
        d = random_descriptor(rng)
        index.insert(pid, d)
        assert pid in index.query(d).union_ids


def _random_workload_checks(table_count: int, operations: int, seed: int) -> int:
    """Interleaved inserts/queries; every query checked against the oracle."""
    rng = np.random.default_rng(seed)
    index = MihIndex(MihConfig(table_count=table_count, bucket_capacity=10))
    reference: dict[tuple[int, int], list[int]] = {}
    width = 256 // table_count
    live: list[BinaryDescriptor] = []
    queries_checked = 0
    next_id = 0
    for _ in range(operations):
        if not live or rng.random() < 0.55:
            d = random_descriptor(rng)
            report = index.insert(next_id, d)
            # mirror semantics in a plain dict-of-lists reference model
            for outcome in report:
                key = (outcome.table_index,
                       (d.value >> (outcome.table_index * width)) & ((1 << width) - 1))
                bucket = reference.setdefault(key, [])
                if outcome.action == MOVED_TO_FRONT:
                    assert next_id in bucket
                    bucket.remove(next_id)
                else:
                    assert outcome.action == INSERTED
                    assert next_id not in bucket
                bucket.insert(0, next_id)
                if len(bucket) > 10:
                    evicted = bucket.pop()
                    assert outcome.evicted_id == evicted
                else:
                    assert outcome.evicted_id is None
            live.append(d)
            next_id += 1
        else:
            base = live[int(rng.integers(0, len(live)))]
            probe = perturb(base, PerturbationSpec(int(rng.integers(0, 120))), rng)
            expected = oracle_query(index.dump(), probe, table_count)
            assert index.query(probe).union_ids == expected
            queries_checked += 1
    # full reference comparison at the end
    final = {
        (r.table_index, r.bucket_address, r.position_from_front): r.point_id
        for r in index.dump()
    }
    expected_final = {
        (table, address, pos): pid
        for (table, address), bucket in reference.items()
        for pos, pid in enumerate(bucket)
    }
    assert final == expected_final
    return queries_checked


def test_oracle_equivalence_random_workload():
    checked = _random_workload_checks(table_count=8, operations=600, seed=14)
    assert checked > 100


def test_oracle_equivalence_after_forced_evictions():
    rng = np.random.default_rng(15)
    index = MihIndex(MihConfig(table_count=4, bucket_capacity=2))
    descriptors = []
    base = random_descriptor(rng)
    for pid in range(6):
        d = descriptor_with_substring(random_descriptor(rng), 0, 0x77, width=64)
        descriptors.append(d)
        index.insert(pid, d)
    # ids 0..3 evicted from table 0; oracle and query agree everywhere
    for d in descriptors:
        assert index.query(d).union_ids == oracle_query(index.dump(), d, 4)


def test_oracle_empty_subset():
    index = MihIndex(MihConfig(table_count=8))
    d = random_descriptor(16)
    index.insert(1, d)
    assert oracle_query(index.dump(), d, 8, table_subset=set()) == set()
    assert index.query(d, table_subset=set()).union_ids == set()


def test_dump_csv_round_trip(tmp_path):
    index = MihIndex(MihConfig(table_count=4))
    rng = np.random.default_rng(17)
    for pid in range(10):
        index.insert(pid, random_descriptor(rng))
    path = tmp_path / "dump.csv"
    write_dump_csv(path, index.dump(), header_comment="seed=17")
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "# seed=17"
    assert lines[1] == "table_index,bucket_address,position_from_front,point_id"
    assert len(lines) == 2 + len(index.dump())
