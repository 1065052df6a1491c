"""Ground truth, confusion counts, ROC/AUC, cost-benefit, fixed-sample baseline.

The decision under evaluation is binary: an experiment either ran on (it
stopped for success or hit the resource cap) or it was abandoned early on a
futility prediction.  Ground truth is whether the precision target would
have been met at the cap had the experiment run to completion -- knowable
here because the evaluation harness pre-draws complete datasets.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .conjugate import ModelDraw, NormalGammaParams, credible_interval_length, posterior_update, summarize
from .rehearsal import percentile, prefix_posterior_cils
from .stopping import ExperimentOutcome

__all__ = [
    "ConfusionCounts",
    "CostBenefitInputs",
    "ground_truth",
    "classify",
    "tally",
    "roc_curve",
    "auc",
    "cost_benefit_ratio",
    "frequentist_sample_size",
    "cil_threshold_from_percentile",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    """Counts over experiments; positive decision = "continue", positive
    truth = "the goal can be met"."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class CostBenefitInputs:
    """Success and trial counts for a candidate method and the baseline."""

    candidate_successes: float
    baseline_successes: float
    candidate_trials: float
    baseline_trials: float

    def __post_init__(self) -> None:
        if min(self.candidate_successes, self.baseline_successes) < 0:
            raise ValueError("success counts must be non-negative")
        if not (self.candidate_trials > 0 and self.baseline_trials > 0):
            raise ValueError("trial counts must be positive")
        if not (self.baseline_successes > 0):
            raise ValueError("baseline must have at least one success for a defined ratio")


def ground_truth(
    data: Sequence[float],
    prior: NormalGammaParams,
    cil_threshold: float,
    coverage: float = 0.95,
) -> bool:
    """Would the full dataset have met the precision target?"""
    post = posterior_update(prior, summarize(data))
    return credible_interval_length(post, coverage) <= cil_threshold


def classify(outcome: ExperimentOutcome, truth: bool) -> str:
    """Confusion cell for one finished experiment: 'tp', 'fp', 'fn' or 'tn'.

    Stopping early on the futility prediction is the negative decision;
    everything else (success stop, running to the cap) counts as having
    continued the experiment.
    """
    continued = not outcome.stopped_early
    if continued:
        return "tp" if truth else "fp"
    return "fn" if truth else "tn"


def tally(cells: Iterable[str]) -> ConfusionCounts:
    counts = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
    for cell in cells:
        counts[cell] += 1
    return ConfusionCounts(**counts)


def roc_curve(counts_by_setting: Iterable[ConfusionCounts]) -> list[tuple[float, float]]:
    """(fpr, tpr) points from per-setting confusion counts.

    Settings with a zero denominator on either rate are skipped (and
    logged), never interpolated.  Points are deduplicated, anchored with
    (0, 0) and (1, 1), and sorted by fpr then tpr.
    """
    points = {(0.0, 0.0), (1.0, 1.0)}
    for counts in counts_by_setting:
        if counts.total == 0:
            raise ValueError("each confusion count must cover at least one experiment")
        pos = counts.tp + counts.fn
        neg = counts.fp + counts.tn
        if pos == 0 or neg == 0:
            log.warning(
                "skipping ROC point with zero denominator (tp=%d fp=%d fn=%d tn=%d)",
                counts.tp, counts.fp, counts.fn, counts.tn,
            )
            continue
        points.add((counts.fp / neg, counts.tp / pos))
    return sorted(points)


def auc(points: Sequence[tuple[float, float]]) -> float:
    """Trapezoidal area under a sorted ROC curve anchored at (0,0) and (1,1)."""
    if len(points) < 2 or tuple(points[0]) != (0.0, 0.0) or tuple(points[-1]) != (1.0, 1.0):
        raise ValueError("points must start at (0, 0) and end at (1, 1)")
    area = 0.0
    for (x1, y1), (x2, y2) in zip(points, points[1:]):
        if x2 < x1:
            raise ValueError("points must be sorted by fpr")
        area += (x2 - x1) * (y1 + y2) / 2.0
    return area


def cost_benefit_ratio(inputs: CostBenefitInputs) -> float:
    """Relative per-trial success efficiency of the candidate over the baseline.

    (candidate successes/trials - baseline successes/trials) divided by the
    baseline rate; positive means the candidate converts trials into met
    targets more efficiently.
    """
    candidate = inputs.candidate_successes / inputs.candidate_trials
    baseline = inputs.baseline_successes / inputs.baseline_trials
    return (candidate - baseline) / baseline


def frequentist_sample_size(z: float, sigma: float, e: float) -> int:
    """Up-front sample size (z * sigma / e)**2, rounded to nearest."""
    if not (z > 0 and sigma > 0 and e > 0):
        raise ValueError("z, sigma and e must all be positive")
    return int(math.floor((z * sigma / e) ** 2 + 0.5))


def cil_threshold_from_percentile(
    prior: NormalGammaParams,
    data_model: ModelDraw,
    n_max: int,
    pct: float,
    reps: int,
    rng: np.random.Generator,
    coverage: float = 0.95,
) -> float:
    """A CIL target set as a percentile of the achievable-CIL distribution.

    Draws ``reps`` complete datasets of size ``n_max`` from the data model,
    computes each one's posterior CIL under ``prior``, and returns the
    ``pct`` percentile: low percentiles make hard targets, high ones easy.
    """
    if reps < 100:
        raise ValueError(f"reps must be at least 100, got {reps}")
    samples = rng.normal(data_model.mean, math.sqrt(data_model.variance), size=(reps, n_max))
    cils = prefix_posterior_cils(prior, samples, (n_max,), coverage)[:, 0]
    return percentile(np.sort(cils), pct)
