"""Command-line interface: recall sweeps, selection benchmarks, simulations.

Verbs:
  recall        analytic + Monte-Carlo retrieval-probability sweep
  select-bench  greedy vs exhaustive table selection on random instances
  simulate      full synthetic tracking pipeline over strategies and seeds
  oracle-check  brute-force oracle equivalence for the index and association

Every report writes delimited output (CSV/JSON) with a seed/config-hash
header and, unless ``--no-figures`` is given, PNG figures alongside.

Exit codes: 0 success, 1 check failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import recall as recall_mod
from .descriptors import PerturbationModel, pack_descriptors, random_descriptor
from .mih import MihConfig, MihIndex, oracle_query, write_dump_csv
from .reporting import config_hash, metadata_line, write_csv, write_json
from .selection import (
    SelectionConfig,
    exhaustive_select,
    greedy_select,
    normalized_ratio,
    objective,
    random_instance,
)
from .simulate import (
    ConfigError,
    associate,
    associate_bruteforce,
    default_run_config,
    parse_run_config,
    run_simulation_suite,
)

log = logging.getLogger("mih_localmap")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

THEOREM_BOUND = 1.0 - 1.0 / math.e
_MODEL_NAMES = {
    "balls": PerturbationModel.BALLS_INTO_BINS,
    "distinct": PerturbationModel.DISTINCT_POSITIONS,
}


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _parse_range(text: str) -> list[int]:
    """``A:B:S`` (inclusive of B when hit), ``A:B`` (step 1), or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise argparse.ArgumentTypeError(f"expected start:stop[:step], got {text!r}")
        try:
            start, stop = int(parts[0]), int(parts[1])
            step = int(parts[2]) if len(parts) == 3 else 1
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected integers in range, got {text!r}")
        if step < 1 or stop < start:
            raise argparse.ArgumentTypeError(f"invalid range {text!r}")
        return list(range(start, stop + 1, step))
    return _parse_int_list(text)


def _worker_cap(requested: int) -> int:
    env = os.environ.get("MIH_LOCALMAP_THREADS")
    if env is None:
        return requested
    try:
        cap = int(env)
    except ValueError:
        raise ConfigError(f"MIH_LOCALMAP_THREADS must be an integer, got {env!r}")
    return max(1, min(requested, cap))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mih-localmap",
        description="Appearance-prior local map building benchmarks.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("recall", help="retrieval probability sweep")
    p.add_argument("--t", type=_parse_int_list, default=[2, 4, 8, 16, 32, 64],
                   help="comma-separated table counts")
    p.add_argument("--eps", type=_parse_range, default=list(range(0, 129, 8)),
                   help="perturbed-bit grid, start:stop:step or comma list")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=20240809)
    p.add_argument("--model", choices=sorted(_MODEL_NAMES), default="balls")
    p.add_argument("--self-check", action="store_true",
                   help="fail (exit 1) when Monte Carlo strays beyond 4 SE of analytic")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("select-bench", help="greedy vs exhaustive selection")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--t", type=int, default=8, help="tables per instance (<= 12)")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--damping", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("simulate", help="synthetic tracking pipeline")
    p.add_argument("--config", type=Path, default=None,
                   help="run-config JSON; omitted -> built-in default")
    p.add_argument("--seed", type=int, default=None,
                   help="override: run only this seed")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel seed workers (capped by MIH_LOCALMAP_THREADS)")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("oracle-check", help="brute-force oracle equivalence")
    p.add_argument("--seed", type=int, default=99)
    p.add_argument("--ops", type=int, default=2000, help="operations per table count")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return parser


# ---------------------------------------------------------------------------


def cmd_recall(args) -> int:
    if args.trials < 1 or not args.t or min(args.t) < 1 or min(args.eps) < 0 or max(args.eps) > 256:
        print("recall: invalid grid arguments", file=sys.stderr)
        return EXIT_USAGE
    model = _MODEL_NAMES[args.model]
    cfg = {
        "t": args.t, "eps": args.eps, "trials": args.trials,
        "model": model.value, "seed": args.seed,
    }
    cfg_hash = config_hash(cfg)
    log.info("recall sweep over %d grid points", len(args.t) * len(args.eps))
    curves = recall_mod.sweep(args.t, args.eps, args.trials, args.seed, model)
    rows = recall_mod.sweep_rows(curves)
    out = Path(args.out)
    csv_path = out / "recall_sweep.csv"
    write_csv(csv_path, ["t", "epsilon", "analytic", "mc_estimate", "mc_stderr",
                         "mc_trials", "model"], rows, args.seed, cfg_hash)
    print(f"wrote {csv_path}")
    if not args.no_figures:
        from .figures import recall_curves_figure

        fig_path = recall_curves_figure(curves, out / "recall_sweep.png")
        print(f"wrote {fig_path}")
    if args.self_check:
        for row in rows:
            tol = recall_mod.agreement_tolerance(
                row["analytic"], row["mc_estimate"], row["mc_trials"]
            )
            if abs(row["analytic"] - row["mc_estimate"]) > tol:
                print(
                    f"self-check FAILED at t={row['t']} eps={row['epsilon']}: "
                    f"analytic={row['analytic']:.6g} mc={row['mc_estimate']:.6g} "
                    f"tolerance={tol:.3g}",
                    file=sys.stderr,
                )
                return EXIT_CHECK_FAILED
        print("self-check passed: Monte Carlo within 4 SE of analytic everywhere")
    return EXIT_OK


def cmd_select_bench(args) -> int:
    if args.t < 1 or args.t > 12 or args.k < 1 or args.instances < 1:
        print("select-bench: invalid arguments (need 1 <= t <= 12, k >= 1)", file=sys.stderr)
        return EXIT_USAGE
    cfg = {"instances": args.instances, "t": args.t, "k": args.k,
           "damping": args.damping, "seed": args.seed}
    cfg_hash = config_hash(cfg)
    config = SelectionConfig(k=args.k, d_thres=math.inf, damping=args.damping)
    rows = []
    worst = math.inf
    for i in range(args.instances):
        sets = random_instance([args.seed, i], args.t)
        greedy = greedy_select(sets, config)
        # re-evaluate the selected subset through the same path as the oracle
        # so identical subsets compare bitwise-identically
        greedy_value = objective(sets, greedy.selected, args.damping)
        _, optimal = exhaustive_select(sets, args.k, args.damping)
        ratio = normalized_ratio(greedy_value, optimal, greedy.baseline)
        worst = min(worst, ratio)
        rows.append(
            {
                "instance": i,
                "greedy_objective": greedy_value,
                "optimal_objective": optimal,
                "baseline": greedy.baseline,
                "ratio": ratio,
            }
        )
    out = Path(args.out)
    csv_path = out / "select_bench.csv"
    write_csv(csv_path, ["instance", "greedy_objective", "optimal_objective",
                         "baseline", "ratio"], rows, args.seed, cfg_hash)
    print(f"wrote {csv_path}")
    if not args.no_figures:
        from .figures import selection_bench_figure

        fig_path = selection_bench_figure(rows, THEOREM_BOUND, out / "select_bench.png")
        print(f"wrote {fig_path}")
    print(f"worst normalized ratio: {worst:.6f} (guarantee {THEOREM_BOUND:.6f})")
    if worst < THEOREM_BOUND - 1e-9:
        print("select-bench FAILED: greedy below the (1 - 1/e) guarantee", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _metrics_rows(result) -> list[dict]:
    rows = []
    for fr in result.frames:
        rows.append(
            {
                "frame_index": fr.frame_index,
                "is_keyframe": int(fr.is_keyframe),
                "local_map_size": fr.local_map_size,
                "table_lookups": fr.table_lookups,
                "selection_lookups": fr.selection_lookups,
                "matches_used": fr.matches_used,
                "true_matches_found": fr.true_matches_found,
                "false_matches": fr.false_matches,
                "true_matches_available": fr.true_matches_available,
                "selected_table_count": fr.selected_table_count,
                "pose_error_rot": fr.pose_error_rot,
                "pose_error_trans": fr.pose_error_trans,
                "track_loss": int(fr.track_loss),
                "match_ages": ";".join(str(a) for a in fr.match_ages),
            }
        )
    return rows


_METRICS_FIELDS = [
    "frame_index", "is_keyframe", "local_map_size", "table_lookups",
    "selection_lookups", "matches_used", "true_matches_found", "false_matches",
    "true_matches_available", "selected_table_count", "pose_error_rot",
    "pose_error_trans", "track_loss", "match_ages",
]


def cmd_simulate(args) -> int:
    if args.config is not None:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            print(f"simulate: cannot read config: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except json.JSONDecodeError as exc:
            print(f"simulate: config is not valid JSON: {exc}", file=sys.stderr)
            return EXIT_USAGE
        run_config = parse_run_config(raw)
    else:
        run_config = default_run_config(seeds=(1, 2, 3))
    if args.seed is not None:
        run_config = replace(run_config, seeds=(args.seed,))
    cfg_payload = {
        "world": _world_payload(run_config.world),
        "strategies": [
            {"kind": s.kind.value, "budget": s.budget,
             "selection": {"k": s.selection.k, "d_thres": s.selection.d_thres,
                           "damping": s.selection.damping}}
            for s in run_config.strategies
        ],
        "seeds": list(run_config.seeds),
    }
    cfg_hash = config_hash(cfg_payload)
    workers = _worker_cap(max(1, args.workers))
    log.info(
        "simulating %d seeds x %d strategies (workers=%d)",
        len(run_config.seeds), len(run_config.strategies), workers,
    )
    results = run_simulation_suite(run_config, max_workers=workers)
    out = Path(args.out)
    aggregate: dict = {"config": cfg_payload, "runs": {}}
    track_loss_runs = []
    for result in results:
        name = f"metrics_{result.strategy}_{result.seed}.csv"
        write_csv(out / name, _METRICS_FIELDS, _metrics_rows(result),
                  result.seed, cfg_hash, strategy=result.strategy)
        if result.selection_trace:
            trace_rows = [
                {"keyframe_id": r[0], "step": r[1], "table_index": r[2],
                 "gain": r[3], "d_acc": r[4]}
                for r in result.selection_trace
            ]
            write_csv(out / f"selection_trace_{result.strategy}_{result.seed}.csv",
                      ["keyframe_id", "step", "table_index", "gain", "d_acc"],
                      trace_rows, result.seed, cfg_hash, strategy=result.strategy)
        aggregate["runs"].setdefault(result.strategy, {})[str(result.seed)] = result.summary
        if result.summary["track_loss_frames"] > 0:
            track_loss_runs.append({"strategy": result.strategy, "seed": result.seed,
                                    "frames": result.summary["track_loss_frames"]})
    aggregate["strategy_means"] = _strategy_means(aggregate["runs"])
    aggregate["track_loss_runs"] = track_loss_runs
    write_json(out / "summary.json", aggregate, list(run_config.seeds), cfg_hash)
    print(f"wrote {len(results)} metric files and {out / 'summary.json'}")
    if track_loss_runs:
        print(f"track loss flagged in {len(track_loss_runs)} run(s); see summary.json")
    if not args.no_figures:
        from .figures import simulation_figures

        for path in simulation_figures(results, run_config.world.keyframe_interval, out):
            print(f"wrote {path}")
    return EXIT_OK


def _world_payload(world) -> dict:
    payload = {}
    for name in world.__dataclass_fields__:
        value = getattr(world, name)
        if name == "camera":
            value = {"fx": value.fx, "fy": value.fy, "cx": value.cx, "cy": value.cy}
        payload[name] = value
    return payload


def _strategy_means(runs: dict) -> dict:
    means = {}
    for strategy, by_seed in runs.items():
        summaries = list(by_seed.values())
        recall_values = [s["match_recall"] for s in summaries if s["match_recall"] is not None]
        means[strategy] = {
            "local_map_size_mean": float(np.mean([s["local_map_size_mean"] for s in summaries])),
            "table_lookups_mean": float(np.mean([s["table_lookups_mean"] for s in summaries])),
            "pose_error_trans_mean": float(np.mean([s["pose_error_trans_mean"] for s in summaries])),
            "pose_error_rot_mean": float(np.mean([s["pose_error_rot_mean"] for s in summaries])),
            "match_recall_mean": float(np.mean(recall_values)) if recall_values else None,
            "pooled_recall": _pooled_recall(summaries),
            "selected_tables_mean": float(np.mean([s["selected_tables_mean"] for s in summaries])),
            "track_loss_frames": int(sum(s["track_loss_frames"] for s in summaries)),
        }
    return means


def _pooled_recall(summaries) -> float | None:
    found = sum(s["true_matches_found"] for s in summaries)
    available = sum(s["true_matches_available"] for s in summaries)
    return (found / available) if available else None


def cmd_oracle_check(args) -> int:
    rng = np.random.default_rng([args.seed, 17])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failures: list[str] = []

    for table_count in (4, 8, 32):
        index = MihIndex(MihConfig(table_count=table_count, bucket_capacity=10))
        live: list = []
        next_id = 0
        queries_done = 0
        for op in range(args.ops):
            if not live or rng.random() < 0.6:
                descriptor = random_descriptor(rng)
                index.insert(next_id, descriptor)
                live.append(descriptor)
                next_id += 1
            else:
                probe = live[int(rng.integers(0, len(live)))]
                if rng.random() < 0.3:
                    probe = random_descriptor(rng)
                expected = oracle_query(index.dump(), probe, table_count)
                got = set(index.query(probe).union_ids)
                if args.inject_fault and queries_done == 0:
                    got.add(10**9)
                queries_done += 1
                if got != expected:
                    failures.append(
                        f"t={table_count} op={op}: query {sorted(got)[:6]}... "
                        f"!= oracle {sorted(expected)[:6]}..."
                    )
                    break
        dump_path = out / f"oracle_dump_t{table_count}.csv"
        write_dump_csv(
            dump_path, index.dump(),
            header_comment=metadata_line(args.seed, config_hash({"seed": args.seed, "ops": args.ops}))[2:],
        )

    assoc_failures = _associate_oracle_workload(args.seed)
    failures.extend(assoc_failures)

    if failures:
        print("oracle-check FAILED:", file=sys.stderr)
        print(failures[0], file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"oracle-check passed ({args.ops} ops per table count + association workload)")
    return EXIT_OK


def _associate_oracle_workload(seed: int) -> list[str]:
    from .covisibility import MapPointRecord
    from .simulate import Observation

    rng = np.random.default_rng([seed, 23])
    candidates = [
        MapPointRecord(i, rng.uniform(-5, 5, 3), random_descriptor(rng), 0)
        for i in range(300)
    ]
    observations = []
    for i in range(40):
        base = candidates[int(rng.integers(0, len(candidates)))]
        from .descriptors import PerturbationSpec, perturb

        descriptor = perturb(base.descriptor, PerturbationSpec(int(rng.integers(0, 80))), rng)
        observations.append(Observation(base.point_id, rng.uniform(0, 640, 2), descriptor))
    fast = associate(observations, candidates)
    slow = associate_bruteforce(observations, candidates)
    fast_ids = [m.point_id for m in fast.matches]
    slow_ids = [m.point_id for m in slow.matches]
    if fast_ids != slow_ids or fast.truth_flags != slow.truth_flags:
        return [f"association mismatch: {fast_ids[:8]} != {slow_ids[:8]}"]
    return []


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.verb == "recall":
            return cmd_recall(args)
        if args.verb == "select-bench":
            return cmd_select_bench(args)
        if args.verb == "simulate":
            return cmd_simulate(args)
        if args.verb == "oracle-check":
            return cmd_oracle_check(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    raise AssertionError(f"unhandled verb {args.verb}")


if __name__ == "__main__":
    sys.exit(main())
