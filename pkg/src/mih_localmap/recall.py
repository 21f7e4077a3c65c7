"""Analytic and Monte-Carlo retrieval probability of the multi-index store.

A query on a ``t``-table index over a 256-bit descriptor succeeds when at
least one of the ``t`` substrings is unperturbed.  Under the uniform
balls-into-bins perturbation model (each of ``epsilon`` perturbed bits lands
in a substring independently and uniformly), the failure probability is the
probability that ``epsilon`` balls occupy all ``t`` bins:

    coverage(t, epsilon) = sum_{j=0..t} (-1)^j C(t, j) ((t - j) / t)^epsilon

which equals ``t! * S(epsilon, t) / t^epsilon`` with ``S`` the number of
partitions of ``epsilon`` items into ``t`` non-empty groups.  The alternating
series is evaluated in exact integer arithmetic (Python bignums) and divided
by ``t^epsilon`` as an exact rational before conversion to float, so there is
no cancellation error and monotonicity in ``t`` and ``epsilon`` is exact.

The realistic model flips ``epsilon`` distinct bit positions; its Monte-Carlo
estimator runs end-to-end through a real index rather than assuming
independent substring assignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .descriptors import (
    DESCRIPTOR_BITS,
    PerturbationModel,
    PerturbationSpec,
    perturb,
    random_descriptor,
)
from .mih import MihConfig, MihIndex


@dataclass(frozen=True, slots=True)
class RecallQuery:
    table_count: int
    epsilon: int
    descriptor_bits: int = DESCRIPTOR_BITS

    def __post_init__(self) -> None:
        if self.table_count < 1:
            raise ValueError("table_count must be >= 1")
        if not 0 <= self.epsilon <= self.descriptor_bits:
            raise ValueError(f"epsilon must be in 0..{self.descriptor_bits}")


@dataclass(frozen=True, slots=True)
class RecallPoint:
    epsilon: int
    analytic: float
    mc_estimate: float
    mc_stderr: float
    mc_trials: int


@dataclass(frozen=True, slots=True)
class RecallCurve:
    table_count: int
    model: PerturbationModel
    points: tuple[RecallPoint, ...]


def _coverage_fraction(table_count: int, epsilon: int) -> Fraction:
    """Exact probability that epsilon uniform balls occupy all bins."""
    t = table_count
    if epsilon < t:
        return Fraction(0)
    numerator = 0
    for j in range(t + 1):
        term = math.comb(t, j) * (t - j) ** epsilon
        numerator += -term if j % 2 else term
    return Fraction(numerator, t**epsilon)


def coverage_probability(table_count: int, epsilon: int) -> float:
    """Probability that every table's substring is hit by a perturbed bit."""
    if table_count < 1:
        raise ValueError("table_count must be >= 1")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    p = float(_coverage_fraction(table_count, epsilon))
    return min(max(p, 0.0), 1.0)


def recall_analytic(query: RecallQuery) -> float:
    """Probability that at least one substring survives unperturbed."""
    p = float(1 - _coverage_fraction(query.table_count, query.epsilon))
    return min(max(p, 0.0), 1.0)


def _binomial_stderr(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / trials)


def agreement_tolerance(analytic: float, estimate: float, trials: int, sigmas: float = 4.0) -> float:
    """Allowed |analytic - estimate| for a binomial estimator over ``trials``.

    Uses the larger of the standard errors implied by the analytic value and
    by the estimate, so degenerate estimates (0 or 1) are still compared
    against the spread implied by the true probability.
    """
    return sigmas * max(
        _binomial_stderr(analytic, trials), _binomial_stderr(estimate, trials)
    )


def _mc_balls_into_bins(
    table_count: int, epsilon: int, trials: int, rng: np.random.Generator
) -> int:
    """Number of trials where at least one of ``table_count`` bins stays empty."""
    if epsilon == 0:
        return trials
    successes = 0
    # Chunk so the (chunk, epsilon) draw stays small.
    chunk = max(1, min(trials, 4_000_000 // epsilon))
    remaining = trials
    while remaining > 0:
        n = min(chunk, remaining)
        balls = rng.integers(0, table_count, size=(n, epsilon))
        offsets = np.arange(n)[:, None] * table_count
        counts = np.bincount(
            (balls + offsets).ravel(), minlength=n * table_count
        ).reshape(n, table_count)
        successes += int(np.count_nonzero((counts == 0).any(axis=1)))
        remaining -= n
    return successes


def _mc_distinct_through_index(
    table_count: int, epsilon: int, trials: int, rng: np.random.Generator
) -> int:
    """End-to-end trials through a real index: insert, perturb, query.

    The bucket capacity is set to the trial count so eviction can never
    interfere with the measurement.
    """
    index = MihIndex(MihConfig(table_count=table_count, bucket_capacity=max(trials, 1)))
    spec = PerturbationSpec(epsilon, PerturbationModel.DISTINCT_POSITIONS)
    successes = 0
    for trial in range(trials):
        descriptor = random_descriptor(rng)
        index.insert(trial, descriptor)
        result = index.query(perturb(descriptor, spec, rng))
        if trial in result.union_ids:
            successes += 1
    return successes


def recall_monte_carlo(
    query: RecallQuery,
    model: PerturbationModel,
    trials: int,
    seed,
) -> tuple[float, float]:
    """Estimate recall by simulation; returns (estimate, binomial stderr)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    if model is PerturbationModel.BALLS_INTO_BINS:
        successes = _mc_balls_into_bins(query.table_count, query.epsilon, trials, rng)
    else:
        successes = _mc_distinct_through_index(query.table_count, query.epsilon, trials, rng)
    estimate = successes / trials
    return estimate, _binomial_stderr(estimate, trials)


def sweep(
    t_values,
    epsilons,
    trials: int,
    seed: int,
    model: PerturbationModel = PerturbationModel.BALLS_INTO_BINS,
) -> list[RecallCurve]:
    """One curve per table count; sub-seeds derive from (seed, t, epsilon)."""
    epsilons = list(epsilons)
    curves = []
    for t in t_values:
        points = []
        for eps in epsilons:
            q = RecallQuery(t, eps)
            analytic = recall_analytic(q)
            estimate, stderr = recall_monte_carlo(q, model, trials, [seed, t, eps])
            points.append(RecallPoint(eps, analytic, estimate, stderr, trials))
        curves.append(RecallCurve(t, model, tuple(points)))
    return curves


def sweep_rows(curves) -> list[dict]:
    """Flatten curves to CSV-ready rows."""
    rows = []
    for curve in curves:
        for p in curve.points:
            rows.append(
                {
                    "t": curve.table_count,
                    "epsilon": p.epsilon,
                    "analytic": p.analytic,
                    "mc_estimate": p.mc_estimate,
                    "mc_stderr": p.mc_stderr,
                    "mc_trials": p.mc_trials,
                    "model": curve.model.value,
                }
            )
    return rows
