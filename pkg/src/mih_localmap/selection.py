"""Online greedy hash-table subset selection under a logDet objective.

Every table of the index retrieves a subset of the frame's true feature
matches.  A table subset ``S`` is scored by the damped log-determinant of the
pose information accumulated over the deduplicated union of the selected
tables' matches.  That set function is monotone and submodular, so greedy
selection carries a (1 - 1/e) guarantee relative to the exhaustive optimum
after subtracting the empty-set baseline.

Greedy selection adds the argmax-gain table (ties broken by lowest table
index) until the cardinality bound is hit or the accumulated objective
reaches the target contribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .geometry import (
    DEFAULT_DAMPING,
    CameraPose,
    FeatureMatch,
    PinholeModel,
    batch_information,
    logdet_information,
)

EXHAUSTIVE_MAX_TABLES = 12


@dataclass(frozen=True, slots=True)
class SelectionConfig:
    k: int = 8
    d_thres: float = 80.0
    damping: float = DEFAULT_DAMPING

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("cardinality constraint k must be >= 1")
        if self.damping <= 0.0:
            raise ValueError("damping must be positive")


class TableMatchSets:
    """Per-table match-id sets plus each match's information increment.

    Duplicate ids across tables refer to the same underlying match; unions
    deduplicate by id.  Information increments are evaluated once at
    construction against the supplied pose context.
    """

    def __init__(
        self,
        per_table,
        matches: dict[int, FeatureMatch],
        pose: CameraPose,
        model: PinholeModel,
    ) -> None:
        self.per_table: list[frozenset[int]] = [frozenset(s) for s in per_table]
        self.matches = dict(matches)
        referenced = set().union(*self.per_table) if self.per_table else set()
        missing = referenced - self.matches.keys()
        if missing:
            raise ValueError(f"tables reference unknown match ids: {sorted(missing)[:5]}")
        self.pose = pose
        self.model = model
        if referenced:
            ids = sorted(referenced)
            points = np.stack([self.matches[i].world_point for i in ids])
            weights = np.stack([self.matches[i].residual_information for i in ids])
            infos = batch_information(pose, model, points, weights)
            self.information = {i: infos[k] for k, i in enumerate(ids)}
        else:
            self.information = {}

    @classmethod
    def from_information(cls, per_table, information: dict[int, np.ndarray]) -> "TableMatchSets":
        """Synthetic construction from explicit 6x6 increments (benchmarks)."""
        obj = cls.__new__(cls)
        obj.per_table = [frozenset(s) for s in per_table]
        obj.matches = {}
        obj.pose = None
        obj.model = None
        obj.information = {i: np.asarray(m, dtype=float) for i, m in information.items()}
        referenced = set().union(*obj.per_table) if obj.per_table else set()
        missing = referenced - obj.information.keys()
        if missing:
            raise ValueError(f"tables reference unknown match ids: {sorted(missing)[:5]}")
        return obj

    @property
    def table_count(self) -> int:
        return len(self.per_table)

    def union_ids(self, table_indices) -> set[int]:
        out: set[int] = set()
        for i in table_indices:
            out |= self.per_table[i]
        return out

    def information_sum(self, ids) -> np.ndarray:
        total = np.zeros((6, 6))
        for i in ids:
            total += self.information[i]
        return total


def objective(sets: TableMatchSets, table_indices, damping: float = DEFAULT_DAMPING) -> float:
    """Damped logDet over the union of the given tables' matches."""
    indices = set(table_indices)
    bad = [i for i in indices if not 0 <= i < sets.table_count]
    if bad:
        raise ValueError(f"table indices out of range: {sorted(bad)}")
    return logdet_information(sets.information_sum(sets.union_ids(indices)), damping)


@dataclass(frozen=True, slots=True)
class SelectionResult:
    """Ordered selected tables with the objective value after each step."""

    selected: tuple[int, ...]
    gains: tuple[float, ...]
    final_objective: float
    baseline: float

    @property
    def marginal_gains(self) -> tuple[float, ...]:
        previous = self.baseline
        out = []
        for value in self.gains:
            out.append(value - previous)
            previous = value
        return tuple(out)


def greedy_select(sets: TableMatchSets, config: SelectionConfig) -> SelectionResult:
    """Iteratively add the table with maximal objective, per-step records kept.

    Stops when the cardinality bound is reached or the accumulated objective
    value passes ``d_thres``.  Ties break toward the lowest table index.
    """
    t = sets.table_count
    baseline = logdet_information(np.zeros((6, 6)), config.damping)
    selected: list[int] = []
    gains: list[float] = []
    union: set[int] = set()
    running = np.zeros((6, 6))
    d_acc = 0.0
    while len(selected) < config.k and d_acc < config.d_thres:
        remaining = [i for i in range(t) if i not in selected]
        if not remaining:
            break
        best_index = -1
        best_value = -np.inf
        best_new: set[int] | None = None
        for i in remaining:
            new_ids = sets.per_table[i] - union
            candidate = running if not new_ids else running + sets.information_sum(new_ids)
            value = logdet_information(candidate, config.damping)
            if value > best_value:
                best_index, best_value, best_new = i, value, set(new_ids)
        selected.append(best_index)
        union |= best_new
        if best_new:
            running = running + sets.information_sum(best_new)
        d_acc = best_value
        gains.append(best_value)
    final = gains[-1] if gains else baseline
    return SelectionResult(tuple(selected), tuple(gains), final, baseline)


def exhaustive_select(
    sets: TableMatchSets, k: int, damping: float = DEFAULT_DAMPING
) -> tuple[tuple[int, ...], float]:
    """True optimum of the coverage objective by enumerating subsets of size <= k."""
    t = sets.table_count
    if t > EXHAUSTIVE_MAX_TABLES:
        raise ValueError(
            f"exhaustive search limited to {EXHAUSTIVE_MAX_TABLES} tables, got {t}"
        )
    best_subset: tuple[int, ...] = ()
    best_value = logdet_information(np.zeros((6, 6)), damping)
    for size in range(1, min(k, t) + 1):
        for subset in combinations(range(t), size):
            value = objective(sets, subset, damping)
            if value > best_value:
                best_subset, best_value = subset, value
    return best_subset, best_value


def refresh_policy(
    current: SelectionResult | None,
    is_keyframe: bool,
    sets: TableMatchSets,
    config: SelectionConfig,
) -> SelectionResult:
    """Re-run greedy selection at keyframes; keep the subset frozen otherwise."""
    if is_keyframe or current is None:
        return greedy_select(sets, config)
    return current


def normalized_ratio(greedy_value: float, optimal_value: float, baseline: float) -> float:
    """Greedy/optimal ratio after subtracting the empty-set baseline.

    The raw ratio is meaningless with a negative baseline; both values are
    shifted by the empty-set objective first.  A zero denominator (nothing to
    gain) normalizes to 1.
    """
    denom = optimal_value - baseline
    if denom <= 0.0:
        return 1.0
    return (greedy_value - baseline) / denom


def random_instance(
    seed,
    table_count: int = 8,
    min_matches: int = 8,
    max_matches: int = 30,
    membership: float = 0.4,
) -> TableMatchSets:
    """Random selection instance with genuine projective geometry.

    Matches are random points in front of an identity camera with per-match
    residual-information scales; each match joins each table independently
    with probability ``membership``.
    """
    rng = np.random.default_rng(seed)
    model = PinholeModel(300.0, 300.0, 320.0, 320.0)
    pose = CameraPose.identity()
    n = int(rng.integers(min_matches, max_matches + 1))
    matches: dict[int, FeatureMatch] = {}
    for i in range(n):
        point = np.array(
            [rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0), rng.uniform(4.0, 20.0)]
        )
        sigma = rng.uniform(0.5, 2.0)
        pixel = np.array(
            [
                model.fx * point[0] / point[2] + model.cx,
                model.fy * point[1] / point[2] + model.cy,
            ]
        ) + rng.normal(0.0, sigma, 2)
        matches[i] = FeatureMatch(i, point, pixel, np.eye(2) / sigma**2)
    per_table = [
        {i for i in range(n) if rng.random() < membership} for _ in range(table_count)
    ]
    return TableMatchSets(per_table, matches, pose, model)


