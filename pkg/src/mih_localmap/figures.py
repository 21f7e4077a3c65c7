"""Matplotlib renderers for the report paths of the CLI.

Each renderer writes one PNG next to the delimited output it visualizes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def recall_curves_figure(curves, path) -> Path:
    """Retrieval probability vs perturbed bit count, one line per table count."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for curve in curves:
        eps = [p.epsilon for p in curve.points]
        analytic = [p.analytic for p in curve.points]
        estimates = [p.mc_estimate for p in curve.points]
        stderr = [p.mc_stderr for p in curve.points]
        (line,) = ax.plot(eps, analytic, label=f"t = {curve.table_count}")
        ax.errorbar(
            eps, estimates, yerr=[3 * s for s in stderr],
            fmt=".", color=line.get_color(), markersize=4, capsize=2, alpha=0.7,
        )
    ax.set_xlabel("perturbed bits")
    ax.set_ylabel("retrieval probability")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(title="hash tables", fontsize=8)
    ax.set_title("Analytic (lines) vs Monte Carlo (dots, 3 SE bars)")
    return _save(fig, path)


def selection_bench_figure(rows, bound: float, path) -> Path:
    """Normalized greedy/optimal ratios against the guarantee line."""
    ratios = [row["ratio"] for row in rows]
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.plot(range(len(ratios)), ratios, ".", markersize=4, label="instance ratio")
    ax.axhline(bound, color="tab:red", linestyle="--", label=f"guarantee {bound:.4f}")
    ax.set_xlabel("instance")
    ax.set_ylabel("normalized greedy / optimal")
    ax.set_ylim(min(0.6, min(ratios) - 0.02) if ratios else 0.6, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("Greedy table selection vs exhaustive optimum")
    return _save(fig, path)


def simulation_figures(results, keyframe_interval: int, out_dir) -> list[Path]:
    """Per-strategy local-map size, lookups, pose error, and match-age mass."""
    out_dir = Path(out_dir)
    by_strategy: dict[str, list] = {}
    for result in results:
        by_strategy.setdefault(result.strategy, []).append(result)
    paths = []

    fig, axes = plt.subplots(3, 1, figsize=(8.0, 9.0), sharex=True)
    for strategy, runs in by_strategy.items():
        frames = runs[0].frames[1:]
        x = [fr.frame_index for fr in frames]
        size = np.mean([[fr.local_map_size for fr in r.frames[1:]] for r in runs], axis=0)
        lookups = np.mean([[fr.table_lookups for fr in r.frames[1:]] for r in runs], axis=0)
        err = np.mean([[fr.pose_error_trans for fr in r.frames[1:]] for r in runs], axis=0)
        axes[0].plot(x, size, label=strategy)
        axes[1].plot(x, lookups, label=strategy)
        axes[2].plot(x, err, label=strategy)
    axes[0].set_ylabel("local map size")
    axes[1].set_ylabel("table lookups / frame")
    axes[2].set_ylabel("translation error [m]")
    axes[2].set_xlabel("frame")
    for ax in axes:
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    axes[0].set_title("Per-frame profile, averaged over seeds")
    paths.append(_save(fig, out_dir / "simulation_profile.png"))

    fig, ax = plt.subplots(figsize=(8.0, 4.0))
    width = 0.8 / max(len(by_strategy), 1)
    for offset, (strategy, runs) in enumerate(sorted(by_strategy.items())):
        histogram: dict[int, int] = {}
        for run in runs:
            for age_text, count in run.summary["match_age_histogram"].items():
                age = int(age_text)
                histogram[age] = histogram.get(age, 0) + count
        if not histogram:
            continue
        ages = sorted(histogram)
        ax.bar(
            [a + offset * width for a in ages],
            [histogram[a] for a in ages],
            width=width,
            label=strategy,
        )
    ax.axvline(keyframe_interval, color="tab:red", linestyle="--",
               label="one keyframe interval")
    ax.set_xlabel("match age [frames since first seen]")
    ax.set_ylabel("true matches")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("Match-age histogram, pooled over seeds")
    paths.append(_save(fig, out_dir / "match_age_histogram.png"))
    return paths
