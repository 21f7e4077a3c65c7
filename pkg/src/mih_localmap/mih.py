"""Multi-index hashing store over 256-bit binary descriptors.

Each of the ``t`` tables is addressed by one disjoint contiguous descriptor
substring and holds bounded buckets of point ids with ring-buffer semantics:
re-insertion moves an id to the front, insertion beyond capacity evicts the
back (oldest) entry.  Queries are exact substring matches; results from the
queried tables are unioned.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

from .descriptors import BinaryDescriptor, substring_value, substring_width

INSERTED = "inserted"
MOVED_TO_FRONT = "moved_to_front"


@dataclass(frozen=True, slots=True)
class MihConfig:
    """Table count and per-bucket capacity; defaults t=32, N=10."""

    table_count: int = 32
    bucket_capacity: int = 10

    def __post_init__(self) -> None:
        if self.table_count < 1:
            raise ValueError(f"table_count must be >= 1, got {self.table_count}")
        if self.bucket_capacity < 1:
            raise ValueError(f"bucket_capacity must be >= 1, got {self.bucket_capacity}")
        substring_width(self.table_count)  # validates range

    @property
    def substring_bits(self) -> int:
        return substring_width(self.table_count)

    @property
    def dead_bits(self) -> int:
        """Trailing bits not covered by any substring when t does not divide 256."""
        return 256 - self.table_count * self.substring_bits


class Bucket:
    """Bounded ordered id list, front (index 0) = most recent, no duplicates."""

    __slots__ = ("entries",)

    def __init__(self) -> None:
        self.entries: list[int] = []

    def touch(self, point_id: int, capacity: int) -> tuple[str, int | None]:
        """Insert or refresh ``point_id``; returns (action, evicted_id)."""
        entries = self.entries
        if point_id in entries:
            entries.remove(point_id)
            entries.insert(0, point_id)
            return MOVED_TO_FRONT, None
        entries.insert(0, point_id)
        if len(entries) > capacity:
            return INSERTED, entries.pop()
        return INSERTED, None


@dataclass(frozen=True, slots=True)
class InsertOutcome:
    """Per-table effect of one insert."""

    table_index: int
    action: str
    evicted_id: int | None = None


@dataclass(frozen=True, slots=True)
class QueryResult:
    union_ids: set[int]
    per_table_ids: list[set[int]]


class DumpRecord(NamedTuple):
    """One live bucket entry: address and position for the linear-scan oracle."""

    table_index: int
    bucket_address: int
    position_from_front: int
    point_id: int


@dataclass(slots=True)
class IndexStats:
    inserts: int = 0
    queries: int = 0
    evictions: int = 0
    occupied_buckets: int = 0
    dead_bits: int = 0
    stored_entries: int = 0


class MihIndex:
    """t hash tables of direct-addressed bounded buckets of point ids.

    With 8-bit substrings (t >= 32) each table is a dense array of buckets;
    wider substrings use a sparse dict keyed by substring value.  Single
    writer, multiple readers: inserts require exclusive access, queries are
    reads (they only bump the lookup counter).
    """

    def __init__(self, config: MihConfig | None = None) -> None:
        self.config = config or MihConfig()
        self._width = self.config.substring_bits
        self._dense = self._width <= 8
        if self._dense:
            self._tables: list = [
                [None] * (1 << self._width) for _ in range(self.config.table_count)
            ]
        else:
            self._tables = [dict() for _ in range(self.config.table_count)]
        self._inserts = 0
        self._queries = 0
        self._evictions = 0

    # -- internal -----------------------------------------------------------

    def _bucket(self, table_index: int, address: int, create: bool) -> Bucket | None:
        table = self._tables[table_index]
        if self._dense:
            bucket = table[address]
            if bucket is None and create:
                bucket = table[address] = Bucket()
            return bucket
        bucket = table.get(address)
        if bucket is None and create:
            bucket = table[address] = Bucket()
        return bucket

    def _addresses(self, descriptor: BinaryDescriptor) -> list[int]:
        width = self._width
        return [
            substring_value(descriptor, i, width) for i in range(self.config.table_count)
        ]

    def _iter_buckets(self):
        for t, table in enumerate(self._tables):
            if self._dense:
                for address, bucket in enumerate(table):
                    if bucket is not None and bucket.entries:
                        yield t, address, bucket
            else:
                for address, bucket in table.items():
                    if bucket.entries:
                        yield t, address, bucket

    # -- operations ----------------------------------------------------------

    def insert(self, point_id: int, descriptor: BinaryDescriptor) -> list[InsertOutcome]:
        """Insert ``point_id`` at each table's addressed bucket front."""
        capacity = self.config.bucket_capacity
        report = []
        for i, address in enumerate(self._addresses(descriptor)):
            bucket = self._bucket(i, address, create=True)
            action, evicted = bucket.touch(point_id, capacity)
            self._inserts += 1
            if evicted is not None:
                self._evictions += 1
            report.append(InsertOutcome(i, action, evicted))
        return report

    def query(
        self, descriptor: BinaryDescriptor, table_subset: set[int] | None = None
    ) -> QueryResult:
        """Exact-match lookup; excluded tables contribute empty sets."""
        subset = self._validated_subset(table_subset)
        per_table: list[set[int]] = [set() for _ in range(self.config.table_count)]
        union: set[int] = set()
        addresses = self._addresses(descriptor)
        for i in subset:
            bucket = self._bucket(i, addresses[i], create=False)
            self._queries += 1
            if bucket is not None and bucket.entries:
                ids = set(bucket.entries)
                per_table[i] = ids
                union |= ids
        return QueryResult(union, per_table)

    def union_query(
        self, descriptors, table_subset: set[int] | None = None
    ) -> set[int]:
        """Union of query results over many descriptors (tracking hot path).

        Equivalent to the union over :meth:`batch_query` results without
        materializing per-table sets.
        """
        subset = self._validated_subset(table_subset)
        width = self._width
        union: set[int] = set()
        for descriptor in descriptors:
            value = descriptor.value
            for i in subset:
                address = (value >> (i * width)) & ((1 << width) - 1)
                bucket = self._bucket(i, address, create=False)
                self._queries += 1
                if bucket is not None and bucket.entries:
                    union.update(bucket.entries)
        return union

    def batch_query(
        self, descriptors, table_subset: set[int] | None = None
    ) -> tuple[set[int], list[QueryResult]]:
        """Aggregate point set over all descriptors plus per-descriptor results."""
        results = [self.query(d, table_subset) for d in descriptors]
        aggregate: set[int] = set()
        for r in results:
            aggregate |= r.union_ids
        return aggregate, results

    def stats(self) -> IndexStats:
        occupied = 0
        stored = 0
        for _, _, bucket in self._iter_buckets():
            occupied += 1
            stored += len(bucket.entries)
        return IndexStats(
            inserts=self._inserts,
            queries=self._queries,
            evictions=self._evictions,
            occupied_buckets=occupied,
            dead_bits=self.config.dead_bits,
            stored_entries=stored,
        )

    def dump(self) -> list[DumpRecord]:
        """All live bucket entries, ordered by table, address, position."""
        records = []
        for t, address, bucket in self._iter_buckets():
            for pos, point_id in enumerate(bucket.entries):
                records.append(DumpRecord(t, address, pos, point_id))
        return records

    def _validated_subset(self, table_subset: set[int] | None) -> list[int]:
        if table_subset is None:
            return list(range(self.config.table_count))
        bad = [i for i in table_subset if not 0 <= i < self.config.table_count]
        if bad:
            raise ValueError(f"table indices out of range: {sorted(bad)}")
        return sorted(table_subset)


def oracle_query(
    dump_records, descriptor: BinaryDescriptor, table_count: int,
    table_subset: set[int] | None = None,
) -> set[int]:
    """Brute-force reference: linear scan of an index dump.

    Returns ids of entries whose recorded bucket address equals the query's
    substring value in a queried table.  Must match ``query().union_ids``.
    """
    width = substring_width(table_count)
    subset = set(range(table_count)) if table_subset is None else set(table_subset)
    values = {i: substring_value(descriptor, i, width) for i in subset}
    found: set[int] = set()
    for record in dump_records:
        expected = values.get(record.table_index)
        if expected is not None and record.bucket_address == expected:
            found.add(record.point_id)
    return found


def write_dump_csv(path, records, header_comment: str | None = None) -> None:
    """CSV dump: one row per live bucket entry."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["table_index", "bucket_address", "position_from_front", "point_id"])
        for r in records:
            writer.writerow([r.table_index, r.bucket_address, r.position_from_front, r.point_id])
