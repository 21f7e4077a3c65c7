"""Keyframe/map-point observation graph and local-map intersection.

Keyframes sharing at least one observed 3D point are connected by an edge
weighted with the shared-point count.  The co-visible candidate set of a
reference keyframe unions the observations of the reference and of every
neighbor whose edge weight passes a threshold; intersecting it with the set
retrieved by appearance gives the final local map.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .descriptors import BinaryDescriptor


@dataclass(frozen=True, slots=True)
class KeyframeRecord:
    keyframe_id: int
    observed_point_ids: frozenset[int]
    frame_index: int

    def __post_init__(self) -> None:
        if not self.observed_point_ids:
            raise ValueError("keyframe must observe at least one point")


@dataclass(slots=True)
class MapPointRecord:
    """One mapped 3D point with its descriptor and track bookkeeping."""

    point_id: int
    position: np.ndarray
    descriptor: BinaryDescriptor
    first_seen_frame: int
    observation_count: int = 1

    def __post_init__(self) -> None:
        if self.observation_count < 1:
            raise ValueError("observation_count must be >= 1")


class CovisibilityGraph:
    """Keyframes <-> observed point ids with shared-count weighted edges."""

    def __init__(self) -> None:
        self.keyframes: dict[int, KeyframeRecord] = {}
        self.point_to_keyframes: dict[int, set[int]] = {}
        self._adjacency: dict[int, dict[int, int]] = {}

    def add_keyframe(self, record: KeyframeRecord) -> dict[int, int]:
        """Insert a keyframe; returns the new edges as {neighbor_id: weight}."""
        if record.keyframe_id in self.keyframes:
            raise ValueError(f"duplicate keyframe id {record.keyframe_id}")
        shared: dict[int, int] = {}
        for point_id in record.observed_point_ids:
            for other in self.point_to_keyframes.get(point_id, ()):
                shared[other] = shared.get(other, 0) + 1
        self.keyframes[record.keyframe_id] = record
        for point_id in record.observed_point_ids:
            self.point_to_keyframes.setdefault(point_id, set()).add(record.keyframe_id)
        self._adjacency[record.keyframe_id] = dict(shared)
        for other, weight in shared.items():
            self._adjacency[other][record.keyframe_id] = weight
        return shared

    def edge_weight(self, a: int, b: int) -> int:
        return self._adjacency.get(a, {}).get(b, 0)

    def neighbors(self, keyframe_id: int, min_shared: int = 1) -> set[int]:
        if keyframe_id not in self.keyframes:
            raise KeyError(f"unknown keyframe {keyframe_id}")
        return {
            other
            for other, weight in self._adjacency[keyframe_id].items()
            if weight >= min_shared
        }

    def covisible_set(self, reference_keyframe_id: int, min_shared: int = 1) -> set[int]:
        """Union of points observed by the reference and its strong neighbors."""
        reference = self.keyframes.get(reference_keyframe_id)
        if reference is None:
            raise KeyError(f"unknown keyframe {reference_keyframe_id}")
        points = set(reference.observed_point_ids)
        for other in self.neighbors(reference_keyframe_id, min_shared):
            points |= self.keyframes[other].observed_point_ids
        return points

    def audit(self) -> None:
        """Check the inverted map and edges against the keyframe records."""
        rebuilt: dict[int, set[int]] = {}
        for kf in self.keyframes.values():
            for point_id in kf.observed_point_ids:
                rebuilt.setdefault(point_id, set()).add(kf.keyframe_id)
        if rebuilt != self.point_to_keyframes:
            raise AssertionError("point_to_keyframes inconsistent with keyframe records")
        for a, neighbors in self._adjacency.items():
            for b, weight in neighbors.items():
                expected = len(
                    self.keyframes[a].observed_point_ids
                    & self.keyframes[b].observed_point_ids
                )
                if weight != expected or weight <= 0:
                    raise AssertionError(f"edge ({a}, {b}) weight {weight} != {expected}")
                if self._adjacency[b].get(a) != weight:
                    raise AssertionError(f"edge ({a}, {b}) not symmetric")

    def edges(self) -> list[tuple[int, int, int]]:
        """Sorted (kf_a, kf_b, weight) with kf_a < kf_b."""
        out = []
        for a, neighbors in self._adjacency.items():
            for b, weight in neighbors.items():
                if a < b:
                    out.append((a, b, weight))
        return sorted(out)


def local_map(ph: set[int], pc: set[int]) -> set[int]:
    """Appearance set intersected with the co-visible set."""
    return ph & pc


def track_length(point: MapPointRecord, current_frame: int) -> int:
    """Frames elapsed since the point was first seen."""
    if current_frame < point.first_seen_frame:
        raise ValueError(
            f"current frame {current_frame} precedes first_seen {point.first_seen_frame}"
        )
    return current_frame - point.first_seen_frame


def write_edges_csv(path, graph: CovisibilityGraph, header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["kf_a", "kf_b", "weight"])
        for a, b, weight in graph.edges():
            writer.writerow([a, b, weight])
