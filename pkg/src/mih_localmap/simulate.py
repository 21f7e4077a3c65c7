"""Synthetic tracking pipeline exercising local-map building end to end.

A random point cloud is observed from a waypoint trajectory; observations
carry pixel noise and uniformly perturbed descriptors, with ground-truth ids
retained for scoring only.  Per frame, a candidate local map is built per
strategy, data association runs Hamming nearest-neighbor with threshold and
ratio gates, and the pose is refined by Gauss-Newton from the previous
estimate.  Keyframes (fixed interval) register new map points, extend the
co-visibility graph, re-insert the co-visible set into the hash index and,
for the subset-selection strategy, re-run table selection.

Mapping is idealized: map points take their true position and canonical
descriptor, so the comparison isolates local-map building from mapping
error.  Candidate-set construction and index/graph state depend only on the
world and the keyframe schedule, never on estimated poses, which makes the
per-frame candidate sets directly comparable across strategies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .covisibility import CovisibilityGraph, KeyframeRecord, MapPointRecord, local_map
from .descriptors import (
    BinaryDescriptor,
    PerturbationModel,
    PerturbationSpec,
    hamming_matrix,
    pack_descriptors,
    perturb,
    random_descriptor,
)
from .geometry import (
    CameraPose,
    FeatureMatch,
    PinholeModel,
    SingularGeometryError,
    batch_project,
    gauss_newton_refine,
    look_at_pose,
)
from .mih import MihConfig, MihIndex
from .selection import SelectionConfig, SelectionResult, TableMatchSets, refresh_policy


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending field."""


class InfeasibleWorldError(ValueError):
    """A trajectory pose sees fewer points than features_per_frame."""


class StrategyKind(Enum):
    COVIS_ONLY = "CovisOnly"
    MIH_ALL = "MihAll"
    MIH_SELECTED = "MihSelected"
    RND = "Rnd"
    LONG = "Long"


@dataclass(frozen=True, slots=True)
class StrategySpec:
    kind: StrategyKind
    budget: int | None = None
    selection: SelectionConfig = field(default_factory=SelectionConfig)

    def __post_init__(self) -> None:
        if self.budget is not None and self.budget < 1:
            raise ConfigError("budget must be >= 1 when set")

    @property
    def name(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class WorldConfig:
    """World, trajectory, sensor and gating parameters for one run."""

    point_count: int = 6000
    world_box: tuple = ((-8.0, -8.0, -3.0), (8.0, 8.0, 3.0))
    waypoints: tuple = ((14.0, 0.0, 1.0), (0.0, 14.0, 1.0), (-14.0, 0.0, 1.0),
                        (0.0, -14.0, 1.0), (14.0, 0.0, 1.0), (0.0, 14.0, 1.0),
                        (-14.0, 0.0, 1.0), (0.0, -14.0, 1.0), (14.0, 0.0, 1.0))
    frames_per_segment: int = 15
    look_at: tuple = (0.0, 0.0, 0.0)
    camera: PinholeModel = field(default_factory=lambda: PinholeModel(300.0, 300.0, 320.0, 320.0))
    fov_degrees: float = 90.0
    depth_range: tuple = (2.0, 40.0)
    pixel_noise: float = 1.0
    flip_range: tuple = (0, 50)
    features_per_frame: int = 120
    detect_dropout: float = 0.6
    keyframe_interval: int = 10
    seed: int = 0
    table_count: int = 32
    bucket_capacity: int = 10
    hamming_threshold: int = 64
    ratio_threshold: float = 0.8
    min_shared: int = 1
    track_loss_matches: int = 10

    def __post_init__(self) -> None:
        if self.features_per_frame < 1:
            raise ConfigError("features_per_frame must be >= 1")
        if self.point_count < self.features_per_frame:
            raise ConfigError("point_count must be >= features_per_frame")
        if self.keyframe_interval < 1:
            raise ConfigError("keyframe_interval must be >= 1")
        if len(self.waypoints) < 2:
            raise ConfigError("waypoints must contain at least 2 positions")
        if self.frames_per_segment < 1:
            raise ConfigError("frames_per_segment must be >= 1")
        if not 0.0 <= self.fov_degrees <= 180.0:
            raise ConfigError("fov_degrees must be in [0, 180]")
        if not 0.0 < self.depth_range[0] < self.depth_range[1]:
            raise ConfigError("depth_range must satisfy 0 < near < far")
        lo, hi = self.flip_range
        if not 0 <= lo <= hi <= 256:
            raise ConfigError("flip_range must satisfy 0 <= lo <= hi <= 256")
        if not 0.0 <= self.detect_dropout < 1.0:
            raise ConfigError("detect_dropout must be in [0, 1)")

    @property
    def frame_count(self) -> int:
        return (len(self.waypoints) - 1) * self.frames_per_segment

    @property
    def pixel_sigma_effective(self) -> float:
        """Residual-information sigma; noiseless configs fall back to 1 px."""
        return self.pixel_noise if self.pixel_noise > 0.0 else 1.0


@dataclass(frozen=True, slots=True)
class Observation:
    point_id: int
    measurement: np.ndarray
    descriptor: BinaryDescriptor


@dataclass(frozen=True)
class World:
    config: WorldConfig
    points: np.ndarray
    descriptors: tuple
    packed: np.ndarray
    saliency: np.ndarray
    poses: tuple

    @property
    def frame_count(self) -> int:
        return self.config.frame_count


def _trajectory_poses(cfg: WorldConfig) -> list[CameraPose]:
    waypoints = np.asarray(cfg.waypoints, dtype=float)
    target = np.asarray(cfg.look_at, dtype=float)
    poses = []
    for f in range(cfg.frame_count):
        segment, step = divmod(f, cfg.frames_per_segment)
        u = step / cfg.frames_per_segment
        position = (1.0 - u) * waypoints[segment] + u * waypoints[segment + 1]
        poses.append(look_at_pose(position, target))
    return poses


def _visible_indices(world_points: np.ndarray, pose: CameraPose, cfg: WorldConfig) -> np.ndarray:
    """Indices of points inside the FOV cone, depth range, and pixel margin.

    The pixel margin (8 * pixel_noise) keeps noisy measurements inside the
    image bounds implied by the camera model ([0, 2cx] x [0, 2cy]).
    """
    xc = pose.transform(world_points)
    z = xc[:, 2]
    near, far = cfg.depth_range
    ok = (z >= near) & (z <= far)
    half_tan = math.tan(math.radians(cfg.fov_degrees) / 2.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        lateral = ok & (np.abs(xc[:, 0]) <= half_tan * z) & (np.abs(xc[:, 1]) <= half_tan * z)
    pixels, _, valid = batch_project(pose, cfg.camera, world_points)
    margin = 8.0 * cfg.pixel_noise
    cam = cfg.camera
    in_image = (
        (pixels[:, 0] >= margin)
        & (pixels[:, 0] <= 2.0 * cam.cx - margin)
        & (pixels[:, 1] >= margin)
        & (pixels[:, 1] <= 2.0 * cam.cy - margin)
    )
    return np.flatnonzero(lateral & valid & in_image)


def generate_world(cfg: WorldConfig) -> World:
    """Deterministic world per seed; raises InfeasibleWorldError when a pose
    sees fewer than ``features_per_frame`` points."""
    rng = np.random.default_rng([cfg.seed, 0])
    low = np.asarray(cfg.world_box[0], dtype=float)
    high = np.asarray(cfg.world_box[1], dtype=float)
    points = rng.uniform(low, high, size=(cfg.point_count, 3))
    descriptors = tuple(random_descriptor(rng) for _ in range(cfg.point_count))
    packed = pack_descriptors(descriptors)
    # Fixed per-point detector response: frames observe their most salient
    # visible points, so the same physical points are re-detected across
    # frames, as a corner detector would.
    saliency = rng.random(cfg.point_count)
    poses = _trajectory_poses(cfg)
    for f, pose in enumerate(poses):
        visible = _visible_indices(points, pose, cfg)
        if len(visible) < cfg.features_per_frame:
            raise InfeasibleWorldError(
                f"frame {f} sees {len(visible)} points < m={cfg.features_per_frame}"
            )
    return World(cfg, points, descriptors, packed, saliency, tuple(poses))


def observe(world: World, frame_index: int) -> list[Observation]:
    """Up to m visible points with noisy pixels and perturbed descriptors.

    Detection is mostly repeatable: each visible point fires independently
    with probability ``1 - detect_dropout`` and the m most salient detections
    are kept, so the same strong features recur across frames with some
    churn.  Deterministic per (world seed, frame index); ground-truth ids are
    kept on the observations for scoring only.
    """
    cfg = world.config
    if not 0 <= frame_index < world.frame_count:
        raise IndexError(f"frame {frame_index} out of range")
    rng = np.random.default_rng([cfg.seed, 1, frame_index])
    pose = world.poses[frame_index]
    visible = _visible_indices(world.points, pose, cfg)
    if cfg.detect_dropout > 0.0:
        fired = rng.random(len(visible)) >= cfg.detect_dropout
        if fired.any():
            visible = visible[fired]
    m = cfg.features_per_frame
    if len(visible) > m:
        order = np.argsort(-world.saliency[visible], kind="stable")
        visible = np.sort(visible[order[:m]])
    pixels, _, _ = batch_project(pose, cfg.camera, world.points[visible])
    noise = rng.normal(0.0, cfg.pixel_noise, size=pixels.shape) if cfg.pixel_noise > 0 else 0.0
    pixels = pixels + noise
    lo, hi = cfg.flip_range
    epsilons = rng.integers(lo, hi + 1, size=len(visible))
    observations = []
    for row, point_index in enumerate(visible):
        spec = PerturbationSpec(int(epsilons[row]), PerturbationModel.DISTINCT_POSITIONS)
        descriptor = perturb(world.descriptors[point_index], spec, rng)
        observations.append(Observation(int(point_index), pixels[row].copy(), descriptor))
    return observations


# ---------------------------------------------------------------------------
# Data association


@dataclass(frozen=True, slots=True)
class AssociationResult:
    matches: list
    truth_flags: list
    true_matches: int
    false_matches: int


def associate(
    observations,
    candidates,
    hamming_threshold: int = 64,
    ratio: float = 0.8,
    residual_sigma: float = 1.0,
    candidate_packed: np.ndarray | None = None,
) -> AssociationResult:
    """Nearest-neighbor Hamming association over the candidate map points.

    Accepts the best candidate when its distance passes the threshold and,
    with two or more candidates, the best/second-best ratio gate.  Truth
    flags compare matched ids against ground-truth ids and are never fed
    back.  ``candidate_packed`` lets callers reuse precomputed descriptor
    rows aligned with ``candidates``.
    """
    observations = list(observations)
    candidates = list(candidates)
    if not observations or not candidates:
        return AssociationResult([], [], 0, 0)
    if candidate_packed is None:
        candidate_packed = pack_descriptors(c.descriptor for c in candidates)
    obs_packed = pack_descriptors(o.descriptor for o in observations)
    distances = hamming_matrix(obs_packed, candidate_packed)
    best_cols = np.argmin(distances, axis=1)
    best = distances[np.arange(len(observations)), best_cols]
    if distances.shape[1] >= 2:
        two = np.partition(distances, 1, axis=1)[:, :2]
        second = two[:, 1]
    else:
        second = None
    info = np.eye(2) / residual_sigma**2
    matches: list[FeatureMatch] = []
    truth_flags: list[bool] = []
    for i, obs in enumerate(observations):
        if best[i] > hamming_threshold:
            continue
        if second is not None and not best[i] < ratio * second[i]:
            continue
        cand = candidates[int(best_cols[i])]
        matches.append(
            FeatureMatch(cand.point_id, cand.position, obs.measurement, info)
        )
        truth_flags.append(cand.point_id == obs.point_id)
    true_count = sum(truth_flags)
    return AssociationResult(matches, truth_flags, true_count, len(matches) - true_count)


def associate_bruteforce(
    observations, candidates, hamming_threshold: int = 64, ratio: float = 0.8,
    residual_sigma: float = 1.0,
) -> AssociationResult:
    """All-pairs reference implementation of :func:`associate`."""
    observations = list(observations)
    candidates = list(candidates)
    if not observations or not candidates:
        return AssociationResult([], [], 0, 0)
    info = np.eye(2) / residual_sigma**2
    matches: list[FeatureMatch] = []
    truth_flags: list[bool] = []
    for obs in observations:
        scored = [
            ((obs.descriptor.value ^ c.descriptor.value).bit_count(), j)
            for j, c in enumerate(candidates)
        ]
        scored.sort()
        best_d, best_j = scored[0]
        if best_d > hamming_threshold:
            continue
        if len(scored) >= 2 and not best_d < ratio * scored[1][0]:
            continue
        cand = candidates[best_j]
        matches.append(FeatureMatch(cand.point_id, cand.position, obs.measurement, info))
        truth_flags.append(cand.point_id == obs.point_id)
    true_count = sum(truth_flags)
    return AssociationResult(matches, truth_flags, true_count, len(matches) - true_count)


# ---------------------------------------------------------------------------
# Pipeline


@dataclass(frozen=True, slots=True)
class FrameMetrics:
    frame_index: int
    is_keyframe: bool
    local_map_size: int
    table_lookups: int
    selection_lookups: int
    matches_used: int
    true_matches_found: int
    false_matches: int
    true_matches_available: int
    selected_table_count: int
    pose_error_rot: float
    pose_error_trans: float
    track_loss: bool
    match_ages: tuple


@dataclass
class RunResult:
    strategy: str
    seed: int
    frames: list
    summary: dict
    selection_trace: list
    estimated_poses: list


class _MapState:
    """Map points, co-visibility graph and hash index shared by one run."""

    def __init__(self, world: World) -> None:
        self.world = world
        cfg = world.config
        self.records: dict[int, MapPointRecord] = {}
        self.graph = CovisibilityGraph()
        self.index = MihIndex(MihConfig(cfg.table_count, cfg.bucket_capacity))
        self.last_keyframe_id: int | None = None

    def register_keyframe(self, frame_index: int, observations) -> set[int]:
        """Map new points, extend the graph, re-insert the co-visible set."""
        world = self.world
        observed_ids = []
        for obs in observations:
            pid = obs.point_id
            record = self.records.get(pid)
            if record is None:
                self.records[pid] = MapPointRecord(
                    pid,
                    world.points[pid].copy(),
                    world.descriptors[pid],
                    first_seen_frame=frame_index,
                )
            else:
                record.observation_count += 1
            observed_ids.append(pid)
        self.graph.add_keyframe(
            KeyframeRecord(frame_index, frozenset(observed_ids), frame_index)
        )
        self.last_keyframe_id = frame_index
        covisible = self.graph.covisible_set(frame_index, world.config.min_shared)
        for pid in sorted(covisible):
            self.index.insert(pid, self.records[pid].descriptor)
        return covisible

    def covisible(self) -> set[int]:
        return self.graph.covisible_set(self.last_keyframe_id, self.world.config.min_shared)


def _selection_sets(
    state: _MapState, observations, pose: CameraPose
) -> tuple[TableMatchSets, int]:
    """True-match subsets per table from a full-table query at a keyframe."""
    world = state.world
    cfg = world.config
    descriptors = [o.descriptor for o in observations]
    _, results = state.index.batch_query(descriptors)
    lookups = len(descriptors) * cfg.table_count
    sigma = cfg.pixel_sigma_effective
    info = np.eye(2) / sigma**2
    matches: dict[int, FeatureMatch] = {}
    per_table: list[set[int]] = [set() for _ in range(cfg.table_count)]
    for obs, result in zip(observations, results):
        pid = obs.point_id
        if pid not in state.records:
            continue
        hit_tables = [
            i for i in range(cfg.table_count) if pid in result.per_table_ids[i]
        ]
        if not hit_tables:
            continue
        matches[pid] = FeatureMatch(
            pid, state.records[pid].position, obs.measurement, info
        )
        for i in hit_tables:
            per_table[i].add(pid)
    return TableMatchSets(per_table, matches, pose, cfg.camera), lookups


def _strategy_candidates(
    strategy: StrategySpec,
    state: _MapState,
    observations,
    selection: SelectionResult | None,
    frame_index: int,
) -> tuple[set[int], int, int]:
    """Candidate ids, tracking-side table lookups, and queried-table count."""
    cfg = state.world.config
    pc = state.covisible()
    kind = strategy.kind
    if kind is StrategyKind.COVIS_ONLY:
        return pc, 0, 0
    if kind is StrategyKind.MIH_ALL:
        descriptors = [o.descriptor for o in observations]
        ph = state.index.union_query(descriptors)
        return local_map(ph, pc), len(descriptors) * cfg.table_count, cfg.table_count
    if kind is StrategyKind.MIH_SELECTED:
        subset = set(selection.selected) if selection else set()
        descriptors = [o.descriptor for o in observations]
        ph = state.index.union_query(descriptors, subset) if subset else set()
        return local_map(ph, pc), len(descriptors) * len(subset), len(subset)
    if kind is StrategyKind.RND:
        if len(pc) <= strategy.budget:
            return pc, 0, 0
        rng = np.random.default_rng([cfg.seed, 2, frame_index])
        chosen = rng.choice(sorted(pc), size=strategy.budget, replace=False)
        return {int(p) for p in chosen}, 0, 0
    if kind is StrategyKind.LONG:
        ranked = sorted(
            pc, key=lambda pid: (state.records[pid].first_seen_frame, pid)
        )
        return set(ranked[: strategy.budget]), 0, 0
    raise ConfigError(f"unsupported strategy kind {kind}")


def run_pipeline(world: World, strategy: StrategySpec, score_truth: bool = True) -> RunResult:
    """Track the full trajectory under one local-map strategy.

    Frame 0 bootstraps the system: the pose estimate anchors to ground truth
    and the first keyframe initializes map, graph and index.  Subsequent
    frames build candidates, associate, and refine the pose from the previous
    estimate; frames with too few matches (or degenerate geometry) carry the
    previous estimate and are flagged, not aborted.
    """
    cfg = world.config
    if strategy.kind in (StrategyKind.RND, StrategyKind.LONG) and strategy.budget is None:
        raise ConfigError(f"strategy {strategy.name} requires a budget")
    state = _MapState(world)
    selection: SelectionResult | None = None
    selection_trace: list[tuple] = []
    frames: list[FrameMetrics] = []
    estimated: list[CameraPose] = []
    pose_est = world.poses[0]

    for f in range(world.frame_count):
        observations = observe(world, f)
        is_keyframe = f % cfg.keyframe_interval == 0
        if f == 0:
            state.register_keyframe(0, observations)
            sel_lookups = 0
            if strategy.kind is StrategyKind.MIH_SELECTED:
                sets, sel_lookups = _selection_sets(state, observations, pose_est)
                selection = refresh_policy(selection, True, sets, strategy.selection)
                _record_trace(selection_trace, 0, selection)
            frames.append(
                FrameMetrics(0, True, 0, 0, sel_lookups, 0, 0, 0, 0,
                             0, 0.0, 0.0, False, ())
            )
            estimated.append(pose_est)
            continue

        available = sum(1 for o in observations if o.point_id in state.records)
        candidate_ids, lookups, queried_tables = _strategy_candidates(
            strategy, state, observations, selection, f
        )
        ordered = sorted(candidate_ids)
        candidates = [state.records[pid] for pid in ordered]
        packed = world.packed[np.asarray(ordered, dtype=int)] if ordered else None
        assoc = associate(
            observations,
            candidates,
            cfg.hamming_threshold,
            cfg.ratio_threshold,
            cfg.pixel_sigma_effective,
            candidate_packed=packed,
        )
        track_loss = len(assoc.matches) < cfg.track_loss_matches
        if not track_loss:
            try:
                refined = gauss_newton_refine(pose_est, cfg.camera, assoc.matches)
                pose_est = refined.pose
            except SingularGeometryError:
                track_loss = True
        rot_err, trans_err = pose_est.error_to(world.poses[f])

        if score_truth:
            found = assoc.true_matches
            false = assoc.false_matches
            ages = tuple(
                f - state.records[m.point_id].first_seen_frame
                for m, ok in zip(assoc.matches, assoc.truth_flags)
                if ok
            )
        else:
            found, false, ages, available = 0, 0, (), 0

        sel_lookups = 0
        if is_keyframe:
            state.register_keyframe(f, observations)
            if strategy.kind is StrategyKind.MIH_SELECTED:
                sets, sel_lookups = _selection_sets(state, observations, pose_est)
                selection = refresh_policy(selection, True, sets, strategy.selection)
                _record_trace(selection_trace, f, selection)

        frames.append(
            FrameMetrics(
                f, is_keyframe, len(candidate_ids), lookups, sel_lookups,
                len(assoc.matches), found, false, available, queried_tables,
                rot_err, trans_err, track_loss, ages,
            )
        )
        estimated.append(pose_est)

    summary = summarize(frames[1:], keyframe_interval=cfg.keyframe_interval)
    return RunResult(strategy.name, cfg.seed, frames, summary, selection_trace, estimated)


def _record_trace(trace: list, keyframe_id: int, selection: SelectionResult) -> None:
    d_prev = selection.baseline
    for step, (table, value) in enumerate(zip(selection.selected, selection.gains)):
        trace.append((keyframe_id, step, table, value - d_prev, value))
        d_prev = value


# ---------------------------------------------------------------------------
# Aggregation


def quartiles(values) -> tuple[float, float]:
    """(Q1, Q3) by the nearest-rank method."""
    ordered = sorted(values)
    n = len(ordered)
    if n == 0:
        raise ValueError("quartiles of empty series")
    q1 = ordered[max(0, math.ceil(0.25 * n) - 1)]
    q3 = ordered[max(0, math.ceil(0.75 * n) - 1)]
    return float(q1), float(q3)


def summarize(frames, keyframe_interval: int | None = None) -> dict:
    """Deterministic aggregate of per-frame metrics.

    Means and nearest-rank quartiles for sizes/lookups/errors, pooled match
    recall, and the aggregated match-age histogram.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("summarize requires at least one frame")
    sizes = [fr.local_map_size for fr in frames]
    lookups = [fr.table_lookups for fr in frames]
    found = sum(fr.true_matches_found for fr in frames)
    available = sum(fr.true_matches_available for fr in frames)
    histogram: dict[int, int] = {}
    for fr in frames:
        for age in fr.match_ages:
            histogram[age] = histogram.get(age, 0) + 1
    q1_size, q3_size = quartiles(sizes)
    q1_lookups, q3_lookups = quartiles(lookups)
    summary = {
        "frame_count": len(frames),
        "local_map_size_mean": float(np.mean(sizes)),
        "local_map_size_q1": q1_size,
        "local_map_size_q3": q3_size,
        "table_lookups_mean": float(np.mean(lookups)),
        "table_lookups_q1": q1_lookups,
        "table_lookups_q3": q3_lookups,
        "selection_lookups_mean": float(np.mean([fr.selection_lookups for fr in frames])),
        "matches_used_mean": float(np.mean([fr.matches_used for fr in frames])),
        "true_matches_found": found,
        "true_matches_available": available,
        "match_recall": (found / available) if available else None,
        "false_matches_total": int(sum(fr.false_matches for fr in frames)),
        "pose_error_rot_mean": float(np.mean([fr.pose_error_rot for fr in frames])),
        "pose_error_trans_mean": float(np.mean([fr.pose_error_trans for fr in frames])),
        "track_loss_frames": int(sum(1 for fr in frames if fr.track_loss)),
        "selected_tables_mean": float(np.mean([fr.selected_table_count for fr in frames])),
        "match_age_histogram": {str(k): v for k, v in sorted(histogram.items())},
    }
    if keyframe_interval is not None:
        summary["keyframe_interval"] = keyframe_interval
        summary["matches_beyond_one_interval"] = int(
            sum(v for k, v in histogram.items() if k > keyframe_interval)
        )
    return summary


# ---------------------------------------------------------------------------
# Run configuration (JSON) and multi-run orchestration


@dataclass(frozen=True, slots=True)
class RunConfig:
    world: WorldConfig
    strategies: tuple
    seeds: tuple


def default_run_config(seeds=(1,)) -> RunConfig:
    return RunConfig(
        WorldConfig(),
        (
            StrategySpec(StrategyKind.COVIS_ONLY),
            StrategySpec(StrategyKind.MIH_ALL),
            StrategySpec(StrategyKind.MIH_SELECTED),
        ),
        tuple(seeds),
    )


def _parse_strategy(raw: dict, position: int) -> StrategySpec:
    field_name = f"strategies[{position}]"
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError(f"{field_name}.kind is required")
    kind_name = raw["kind"]
    try:
        kind = StrategyKind(kind_name)
    except ValueError:
        valid = ", ".join(k.value for k in StrategyKind)
        raise ConfigError(
            f"{field_name}.kind: unknown strategy {kind_name!r} (expected one of {valid})"
        ) from None
    budget = raw.get("budget")
    selection = raw.get("selection", {})
    if not isinstance(selection, dict):
        raise ConfigError(f"{field_name}.selection must be an object")
    try:
        config = SelectionConfig(
            k=selection.get("k", 8),
            d_thres=selection.get("d_thres", 80.0),
            damping=selection.get("damping", 1e-3),
        )
    except ValueError as exc:
        raise ConfigError(f"{field_name}.selection: {exc}") from None
    return StrategySpec(kind, budget, config)


def parse_run_config(raw: dict) -> RunConfig:
    """Validate a run-config JSON document (see README for the schema)."""
    if not isinstance(raw, dict):
        raise ConfigError("run config must be a JSON object")
    world_raw = raw.get("world", {})
    if not isinstance(world_raw, dict):
        raise ConfigError("world must be an object")
    kwargs = {}
    camera_raw = world_raw.get("camera")
    if camera_raw is not None:
        try:
            kwargs["camera"] = PinholeModel(**camera_raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"world.camera: {exc}") from None
    tuple_fields = {"world_box", "waypoints", "look_at", "depth_range", "flip_range"}
    for name, value in world_raw.items():
        if name == "camera":
            continue
        if name not in WorldConfig.__dataclass_fields__:
            raise ConfigError(f"world.{name}: unknown field")
        if name in tuple_fields:
            value = _as_nested_tuple(value)
        kwargs[name] = value
    try:
        world = WorldConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"world: {exc}") from None
    strategies_raw = raw.get("strategies")
    if not strategies_raw:
        raise ConfigError("strategies must be a non-empty list")
    strategies = tuple(_parse_strategy(s, i) for i, s in enumerate(strategies_raw))
    seeds_raw = raw.get("seeds", [world.seed])
    if not isinstance(seeds_raw, list) or not seeds_raw:
        raise ConfigError("seeds must be a non-empty list")
    if any(not isinstance(s, int) for s in seeds_raw):
        raise ConfigError("seeds must be integers")
    return RunConfig(world, strategies, tuple(seeds_raw))


def _as_nested_tuple(value):
    if isinstance(value, (list, tuple)):
        return tuple(_as_nested_tuple(v) for v in value)
    return value


def _run_seed(run_config: RunConfig, seed: int, score_truth: bool) -> list[RunResult]:
    """All strategies for one seed, sharing one world.

    A Rnd/Long strategy without an explicit budget is size-matched to the
    mean local-map size of the MihSelected run for the same seed.
    """
    world = generate_world(replace(run_config.world, seed=seed))
    results: dict[int, RunResult] = {}
    by_kind: dict[StrategyKind, RunResult] = {}
    deferred = []
    for position, strategy in enumerate(run_config.strategies):
        needs_budget = (
            strategy.kind in (StrategyKind.RND, StrategyKind.LONG)
            and strategy.budget is None
        )
        if needs_budget:
            deferred.append((position, strategy))
            continue
        result = run_pipeline(world, strategy, score_truth)
        results[position] = result
        by_kind.setdefault(strategy.kind, result)
    for position, strategy in deferred:
        reference = by_kind.get(StrategyKind.MIH_SELECTED)
        if reference is None:
            raise ConfigError(
                f"strategies[{position}].budget: not set and no MihSelected run "
                "to size-match against"
            )
        budget = max(1, round(reference.summary["local_map_size_mean"]))
        result = run_pipeline(world, replace(strategy, budget=budget), score_truth)
        results[position] = result
    return [results[i] for i in range(len(run_config.strategies))]


def run_simulation_suite(
    run_config: RunConfig, score_truth: bool = True, max_workers: int = 1
) -> list[RunResult]:
    """Run every (seed, strategy) pair; output order is deterministic."""
    if max_workers > 1 and len(run_config.seeds) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            per_seed = list(
                pool.map(
                    _run_seed_job,
                    [(run_config, seed, score_truth) for seed in run_config.seeds],
                )
            )
    else:
        per_seed = [_run_seed(run_config, seed, score_truth) for seed in run_config.seeds]
    return [result for seed_results in per_seed for result in seed_results]


def _run_seed_job(args) -> list[RunResult]:
    return _run_seed(*args)
