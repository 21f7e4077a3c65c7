from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from mih_localmap.covisibility import MapPointRecord
from mih_localmap.descriptors import random_descriptor
from mih_localmap.geometry import PinholeModel
from mih_localmap.simulate import (
    ConfigError,
    FrameMetrics,
    InfeasibleWorldError,
    Observation,
    StrategyKind,
    StrategySpec,
    WorldConfig,
    associate,
    associate_bruteforce,
    default_run_config,
    generate_world,
    observe,
    parse_run_config,
    quartiles,
    run_pipeline,
    run_simulation_suite,
    summarize,
)

# small world used by the pipeline-level tests
SMALL = WorldConfig(
    point_count=1500,
    waypoints=((14.0, 0.0, 1.0), (0.0, 14.0, 1.0), (-14.0, 0.0, 1.0)),
    frames_per_segment=12,
    features_per_frame=60,
    keyframe_interval=6,
    seed=5,
)


@pytest.fixture(scope="module")
def small_world():
    return generate_world(SMALL)


def test_world_deterministic_per_seed():
    a = generate_world(SMALL)
    b = generate_world(SMALL)
    assert np.array_equal(a.points, b.points)
    assert a.descriptors == b.descriptors
    assert np.array_equal(a.saliency, b.saliency)
    for pa, pb in zip(a.poses, b.poses):
        assert np.array_equal(pa.rotation, pb.rotation)
        assert np.array_equal(pa.translation, pb.translation)


def test_world_differs_across_seeds():
    a = generate_world(SMALL)
    b = generate_world(replace(SMALL, seed=6))
    assert not np.array_equal(a.points, b.points)


def test_every_frame_sees_enough_points(small_world):
    cfg = small_world.config
    for f in range(small_world.frame_count):
        obs = observe(small_world, f)
        assert len(obs) == cfg.features_per_frame


def test_degenerate_fov_is_infeasible():
    with pytest.raises(InfeasibleWorldError):
        generate_world(replace(SMALL, fov_degrees=0.0))


def test_observe_noiseless_descriptors_and_pixels():
    cfg = replace(SMALL, pixel_noise=0.0, flip_range=(0, 0), detect_dropout=0.0)
    world = generate_world(cfg)
    obs = observe(world, 3)
    for o in obs:
        assert o.descriptor == world.descriptors[o.point_id]
    pixels, _, valid = __import__("mih_localmap.geometry", fromlist=["batch_project"]).batch_project(
        world.poses[3], cfg.camera, np.stack([world.points[o.point_id] for o in obs])
    )
    assert valid.all()
    for o, p in zip(obs, pixels):
        assert o.measurement == pytest.approx(p)


def test_observe_measurements_inside_image_bounds(small_world):
    cam = small_world.config.camera
    for f in (0, 7, 20):
        for o in observe(small_world, f):
            assert 0.0 <= o.measurement[0] <= 2 * cam.cx
            assert 0.0 <= o.measurement[1] <= 2 * cam.cy


def test_observe_ids_unique_per_frame(small_world):
    for f in (0, 5, 11):
        ids = [o.point_id for o in observe(small_world, f)]
        assert len(ids) == len(set(ids))


def test_observe_deterministic(small_world):
    a = observe(small_world, 4)
    b = observe(small_world, 4)
    assert [o.point_id for o in a] == [o.point_id for o in b]
    assert all(x.descriptor == y.descriptor for x, y in zip(a, b))
    assert all(np.array_equal(x.measurement, y.measurement) for x, y in zip(a, b))


def test_observe_frame_out_of_range(small_world):
    with pytest.raises(IndexError):
        observe(small_world, small_world.frame_count)


# -- association ------------------------------------------------------------


def _candidates_from(world, ids):
    return [
        MapPointRecord(int(i), world.points[i], world.descriptors[i], 0) for i in ids
    ]


def test_associate_exact_candidates_all_true():
    cfg = replace(SMALL, flip_range=(0, 0))
    world = generate_world(cfg)
    obs = observe(world, 2)
    candidates = _candidates_from(world, [o.point_id for o in obs])
    result = associate(obs, candidates)
    assert len(result.matches) == len(obs)
    assert all(result.truth_flags)
    assert result.false_matches == 0


def test_associate_empty_candidates(small_world):
    result = associate(observe(small_world, 1), [])
    assert result.matches == []


def test_associate_matches_bruteforce_oracle():
    rng = np.random.default_rng(9)
    candidates = [
        MapPointRecord(i, rng.uniform(-5, 5, 3), random_descriptor(rng), 0)
        for i in range(400)
    ]
    observations = []
    for _ in range(150):
        base = candidates[int(rng.integers(0, 400))]
        from mih_localmap.descriptors import PerturbationSpec, perturb

        eps = int(rng.integers(0, 120))
        observations.append(
            Observation(
                base.point_id,
                rng.uniform(0, 640, 2),
                perturb(base.descriptor, PerturbationSpec(eps), rng),
            )
        )
    fast = associate(observations, candidates)
    slow = associate_bruteforce(observations, candidates)
    assert [m.point_id for m in fast.matches] == [m.point_id for m in slow.matches]
    assert fast.truth_flags == slow.truth_flags
    assert fast.true_matches == slow.true_matches


def test_associate_threshold_gate():
    rng = np.random.default_rng(10)
    target = MapPointRecord(0, np.zeros(3), random_descriptor(rng), 0)
    decoy = MapPointRecord(1, np.ones(3), random_descriptor(rng), 0)
    from mih_localmap.descriptors import PerturbationSpec, perturb

    probe = Observation(0, np.zeros(2), perturb(target.descriptor, PerturbationSpec(80), rng))
    # distance 80 > threshold 64 -> rejected
    assert associate([probe], [target, decoy]).matches == []
    near = Observation(0, np.zeros(2), perturb(target.descriptor, PerturbationSpec(30), rng))
    result = associate([near], [target, decoy])
    assert [m.point_id for m in result.matches] == [0]


# -- pipeline ---------------------------------------------------------------


@pytest.fixture(scope="module")
def pipeline_results(small_world):
    return {
        kind: run_pipeline(small_world, StrategySpec(kind))
        for kind in (StrategyKind.COVIS_ONLY, StrategyKind.MIH_ALL, StrategyKind.MIH_SELECTED)
    }


def test_pipeline_per_frame_compactness(pipeline_results):
    covis = pipeline_results[StrategyKind.COVIS_ONLY].frames
    mih_all = pipeline_results[StrategyKind.MIH_ALL].frames
    selected = pipeline_results[StrategyKind.MIH_SELECTED].frames
    for s, a, c in zip(selected, mih_all, covis):
        assert s.local_map_size <= a.local_map_size <= c.local_map_size


def test_pipeline_lookup_accounting(pipeline_results):
    m = SMALL.features_per_frame
    for fr in pipeline_results[StrategyKind.MIH_ALL].frames[1:]:
        assert fr.table_lookups == 32 * m
    for fr in pipeline_results[StrategyKind.MIH_SELECTED].frames[1:]:
        assert fr.table_lookups == fr.selected_table_count * m
        assert fr.table_lookups <= 8 * m
    for fr in pipeline_results[StrategyKind.COVIS_ONLY].frames:
        assert fr.table_lookups == 0


def test_pipeline_no_track_loss_on_default_small_world(pipeline_results):
    for result in pipeline_results.values():
        assert result.summary["track_loss_frames"] == 0


def test_pipeline_deterministic(small_world, pipeline_results):
    again = run_pipeline(small_world, StrategySpec(StrategyKind.MIH_SELECTED))
    assert again.frames == pipeline_results[StrategyKind.MIH_SELECTED].frames
    assert again.selection_trace == pipeline_results[StrategyKind.MIH_SELECTED].selection_trace


def test_pipeline_truth_scoring_does_not_steer(small_world, pipeline_results):
    blind = run_pipeline(small_world, StrategySpec(StrategyKind.MIH_SELECTED), score_truth=False)
    scored = pipeline_results[StrategyKind.MIH_SELECTED]
    assert len(blind.estimated_poses) == len(scored.estimated_poses)
    for a, b in zip(blind.estimated_poses, scored.estimated_poses):
        assert np.array_equal(a.rotation, b.rotation)
        assert np.array_equal(a.translation, b.translation)
    assert all(fr.true_matches_found == 0 for fr in blind.frames)


def test_pipeline_age_histogram_reaches_beyond_interval(pipeline_results):
    for result in pipeline_results.values():
        assert result.summary["matches_beyond_one_interval"] > 0


def test_pipeline_rnd_long_budgets(small_world):
    rnd = run_pipeline(small_world, StrategySpec(StrategyKind.RND, budget=40))
    long_r = run_pipeline(small_world, StrategySpec(StrategyKind.LONG, budget=40))
    for result in (rnd, long_r):
        for fr in result.frames[1:]:
            assert fr.local_map_size <= 40
    with pytest.raises(ConfigError):
        run_pipeline(small_world, StrategySpec(StrategyKind.RND))


def test_pipeline_selection_trace_consistency(pipeline_results):
    trace = pipeline_results[StrategyKind.MIH_SELECTED].selection_trace
    assert trace, "selection strategy must record a trace"
    keyframes = {row[0] for row in trace}
    assert 0 in keyframes
    for row in trace:
        kf, step, table, gain, d_acc = row
        assert 0 <= table < 32
        assert gain >= -1e-9


def test_suite_budget_matching():
    config = default_run_config(seeds=(5,))
    config = replace(
        config,
        world=SMALL,
        strategies=config.strategies + (StrategySpec(StrategyKind.RND),),
    )
    results = run_simulation_suite(config)
    assert [r.strategy for r in results] == ["CovisOnly", "MihAll", "MihSelected", "Rnd"]
    selected_mean = results[2].summary["local_map_size_mean"]
    rnd_sizes = [fr.local_map_size for fr in results[3].frames[1:]]
    assert max(rnd_sizes) <= max(1, round(selected_mean))


def test_suite_budget_requires_reference():
    config = default_run_config(seeds=(5,))
    config = replace(config, world=SMALL, strategies=(StrategySpec(StrategyKind.RND),))
    with pytest.raises(ConfigError, match=r"strategies\[0\].budget"):
        run_simulation_suite(config)


def test_suite_parallel_workers_match_sequential():
    config = default_run_config(seeds=(5, 6))
    config = replace(config, world=SMALL,
                     strategies=(StrategySpec(StrategyKind.MIH_SELECTED),))
    sequential = run_simulation_suite(config, max_workers=1)
    parallel = run_simulation_suite(config, max_workers=2)
    assert [(r.strategy, r.seed) for r in parallel] == [
        (r.strategy, r.seed) for r in sequential
    ]
    for a, b in zip(sequential, parallel):
        assert a.frames == b.frames
        assert a.summary == b.summary


# -- summarize / quartiles ----------------------------------------------------


def _frame(index, size=10, ages=(), found=0, available=0) -> FrameMetrics:
    return FrameMetrics(index, False, size, 0, 0, 0, found, 0, available,
                        0, 0.0, 0.0, False, tuple(ages))


def test_quartiles_nearest_rank():
    assert quartiles(range(1, 101)) == (25.0, 75.0)
    assert quartiles([7, 7, 7]) == (7.0, 7.0)
    with pytest.raises(ValueError):
        quartiles([])


def test_summarize_constant_series():
    frames = [_frame(i, size=42) for i in range(10)]
    s = summarize(frames)
    assert s["local_map_size_mean"] == 42.0
    assert s["local_map_size_q1"] == 42.0
    assert s["local_map_size_q3"] == 42.0


def test_summarize_histogram_conserves_matches():
    frames = [
        _frame(1, ages=(1, 1, 5), found=3, available=4),
        _frame(2, ages=(2,), found=1, available=1),
    ]
    s = summarize(frames, keyframe_interval=3)
    histogram = s["match_age_histogram"]
    assert sum(histogram.values()) == s["true_matches_found"] == 4
    assert s["matches_beyond_one_interval"] == 1
    assert s["match_recall"] == pytest.approx(0.8)


def test_summarize_empty_rejected():
    with pytest.raises(ValueError):
        summarize([])


# -- config parsing -----------------------------------------------------------


def test_parse_run_config_round_trip():
    raw = {
        "world": {"point_count": 1500, "features_per_frame": 50, "seed": 3,
                  "camera": {"fx": 200.0, "fy": 200.0, "cx": 300.0, "cy": 300.0}},
        "strategies": [
            {"kind": "CovisOnly"},
            {"kind": "MihSelected", "selection": {"k": 4, "d_thres": 60.0}},
            {"kind": "Rnd", "budget": 50},
        ],
        "seeds": [1, 2],
    }
    config = parse_run_config(raw)
    assert config.world.point_count == 1500
    assert config.world.camera == PinholeModel(200.0, 200.0, 300.0, 300.0)
    assert config.strategies[1].selection.k == 4
    assert config.strategies[2].budget == 50
    assert config.seeds == (1, 2)


def test_parse_run_config_unknown_strategy_names_field():
    raw = {"world": {}, "strategies": [{"kind": "CovisOnly"}, {"kind": "Nope"}]}
    with pytest.raises(ConfigError, match=r"strategies\[1\].kind"):
        parse_run_config(raw)


def test_parse_run_config_unknown_world_field():
    raw = {"world": {"bogus": 1}, "strategies": [{"kind": "CovisOnly"}]}
    with pytest.raises(ConfigError, match="world.bogus"):
        parse_run_config(raw)


def test_parse_run_config_validates_seeds():
    raw = {"world": {}, "strategies": [{"kind": "CovisOnly"}], "seeds": []}
    with pytest.raises(ConfigError, match="seeds"):
        parse_run_config(raw)
