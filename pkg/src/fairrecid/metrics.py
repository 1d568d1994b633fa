"""Fairness and accuracy metrics over (score, label, group) triples.

Scores live in [0, 1] (model probabilities, or COMPAS deciles mapped through
(d - 1) / 9). Group 0 is white, group 1 is black throughout. All reductions
use a fixed left-to-right summation order so results are reproducible to the
bit regardless of how callers parallelize around this module.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyGroupError,
    InvalidBinCountError,
    InvalidThresholdError,
    MetricError,
    SingleClassError,
    UndefinedRateError,
)

DEFAULT_THRESHOLD = 0.5
DEFAULT_BINS = 10


@dataclass
class GroupedPredictions:
    """Aligned score / true-label / group vectors feeding every metric."""

    score: np.ndarray
    y_true: np.ndarray
    group: np.ndarray

    def __post_init__(self):
        self.score = np.asarray(self.score, dtype=np.float64)
        self.y_true = np.asarray(self.y_true, dtype=np.int64)
        self.group = np.asarray(self.group, dtype=np.int64)
        if not (len(self.score) == len(self.y_true) == len(self.group)):
            raise MetricError("score, y_true and group must have equal lengths")
        if len(self.score) == 0:
            raise MetricError("empty predictions")
        if self.score.min() < 0.0 or self.score.max() > 1.0:
            raise MetricError("scores must lie in [0, 1]")
        if not np.isin(self.y_true, (0, 1)).all():
            raise MetricError("y_true must be binary")
        if not np.isin(self.group, (0, 1)).all():
            raise MetricError("group must be binary")

    def __len__(self) -> int:
        return len(self.score)


def decile_to_score(deciles: np.ndarray) -> np.ndarray:
    """Map 1..10 deciles onto [0, 1] via (d - 1) / 9 (rank-preserving)."""
    d = np.asarray(deciles, dtype=np.float64)
    if np.nanmin(d) < 1 or np.nanmax(d) > 10:
        raise MetricError("deciles must lie in [1, 10]")
    return (d - 1.0) / 9.0


def decile_threshold(high_risk_decile: int = 5) -> float:
    """Score-space threshold equivalent to 'decile >= high_risk_decile'."""
    if not 1 <= high_risk_decile <= 10:
        raise InvalidThresholdError(
            f"high-risk decile must be in [1, 10], got {high_risk_decile}"
        )
    return (high_risk_decile - 1) / 9.0


def binarize(scores: np.ndarray, threshold: float) -> np.ndarray:
    """High-risk indicator: 1 iff score >= threshold (ties go high-risk)."""
    if not 0.0 <= threshold <= 1.0:
        raise InvalidThresholdError(f"threshold must be in [0, 1], got {threshold}")
    scores = np.asarray(scores, dtype=np.float64)
    return (scores >= threshold).astype(np.int64)


def high_risk_gap(gp: GroupedPredictions, threshold: float = DEFAULT_THRESHOLD) -> float:
    """Absolute difference in high-risk classification rates across groups."""
    pred = binarize(gp.score, threshold)
    rates = []
    for g in (0, 1):
        mask = gp.group == g
        if not mask.any():
            raise EmptyGroupError(f"group {g} is empty")
        rates.append(float(pred[mask].mean()))
    return abs(rates[0] - rates[1])


def error_rate_gaps(gp: GroupedPredictions,
                    threshold: float = DEFAULT_THRESHOLD) -> tuple[float, float]:
    """(FP-rate gap, FN-rate gap) across groups.

    FP rate = FP / (FP + TN) among true negatives; FN rate = FN / (FN + TP)
    among true positives. Raises if a group lacks the denominator.
    """
    pred = binarize(gp.score, threshold)
    fp_rates = []
    fn_rates = []
    for g in (0, 1):
        mask = gp.group == g
        if not mask.any():
            raise EmptyGroupError(f"group {g} is empty")
        y = gp.y_true[mask]
        p = pred[mask]
        negatives = int((y == 0).sum())
        positives = int((y == 1).sum())
        if negatives == 0:
            raise UndefinedRateError(f"group {g} has no true negatives; FP rate undefined")
        if positives == 0:
            raise UndefinedRateError(f"group {g} has no true positives; FN rate undefined")
        fp_rates.append(float(((p == 1) & (y == 0)).sum()) / negatives)
        fn_rates.append(float(((p == 0) & (y == 1)).sum()) / positives)
    return abs(fp_rates[0] - fp_rates[1]), abs(fn_rates[0] - fn_rates[1])


def auc(gp: GroupedPredictions) -> float:
    """Area under the ROC curve via the rank (Mann-Whitney) formulation.

    Equals the probability that a uniformly random positive outscores a
    uniformly random negative, counting ties as 1/2.
    """
    y = gp.y_true
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUC needs at least one positive and one negative")
    order = np.argsort(gp.score, kind="stable")
    sorted_scores = gp.score[order]
    ranks = np.empty(len(sorted_scores), dtype=np.float64)
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[i:j + 1] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_by_row = np.empty_like(ranks)
    rank_by_row[order] = ranks
    pos_rank_sum = float(rank_by_row[y == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def accuracy(gp: GroupedPredictions, threshold: float = DEFAULT_THRESHOLD) -> float:
    """Fraction of binarized scores that match the true label."""
    pred = binarize(gp.score, threshold)
    return float((pred == gp.y_true).mean())


@dataclass
class CalibrationCell:
    bin_low: float
    bin_high: float
    group: int
    count: int
    rate: float | None  # empirical P(Y=1 | score in bin, group); None if empty


@dataclass
class CalibrationTable:
    """Per (bin, group) empirical recidivism rates over equal-width bins."""

    n_bins: int
    cells: list[CalibrationCell]

    def rate(self, bin_index: int, group: int) -> float | None:
        return self.cells[bin_index * 2 + group].rate

    def count(self, bin_index: int, group: int) -> int:
        return self.cells[bin_index * 2 + group].count

    def max_group_difference(self, min_count: int = 0) -> float:
        """Largest |rate_white - rate_black| over bins with enough samples."""
        worst = 0.0
        for b in range(self.n_bins):
            c0, c1 = self.count(b, 0), self.count(b, 1)
            if c0 >= max(min_count, 1) and c1 >= max(min_count, 1):
                worst = max(worst, abs(self.rate(b, 0) - self.rate(b, 1)))
        return worst

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_low", "bin_high", "group", "count", "rate"])
            for c in self.cells:
                writer.writerow([
                    f"{c.bin_low:.4f}", f"{c.bin_high:.4f}", c.group, c.count,
                    "" if c.rate is None else f"{c.rate:.4f}",
                ])

    def to_jsonable(self) -> list[dict]:
        return [
            {
                "bin_low": round(c.bin_low, 4),
                "bin_high": round(c.bin_high, 4),
                "group": c.group,
                "count": c.count,
                "rate": None if c.rate is None else round(c.rate, 4),
            }
            for c in self.cells
        ]


def calibration_table(gp: GroupedPredictions, n_bins: int = DEFAULT_BINS) -> CalibrationTable:
    """Bin scores into n_bins equal-width bins and tabulate per-group rates.

    The last bin is closed on the right so a score of exactly 1.0 lands in
    bin n_bins - 1. Empty (bin, group) cells carry rate None.
    """
    if n_bins < 2:
        raise InvalidBinCountError(f"need at least 2 bins, got {n_bins}")
    idx = np.minimum((gp.score * n_bins).astype(np.int64), n_bins - 1)
    cells = []
    for b in range(n_bins):
        for g in (0, 1):
            mask = (idx == b) & (gp.group == g)
            count = int(mask.sum())
            rate = float(gp.y_true[mask].mean()) if count else None
            cells.append(CalibrationCell(
                bin_low=b / n_bins, bin_high=(b + 1) / n_bins,
                group=g, count=count, rate=rate,
            ))
    return CalibrationTable(n_bins=n_bins, cells=cells)


@dataclass
class FairnessReport:
    """All headline metrics for one model on one evaluation set."""

    model: str
    threshold: float
    high_risk_gap: float
    fp_gap: float
    fn_gap: float
    auc: float
    accuracy: float
    calibration: CalibrationTable

    def to_jsonable(self) -> dict:
        return {
            "model": self.model,
            "threshold": round(self.threshold, 4),
            "high_risk_gap": round(self.high_risk_gap, 4),
            "fp_gap": round(self.fp_gap, 4),
            "fn_gap": round(self.fn_gap, 4),
            "auc": round(self.auc, 4),
            "accuracy": round(self.accuracy, 4),
            "calibration": self.calibration.to_jsonable(),
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_jsonable(), sort_keys=True, indent=2) + "\n")


def fairness_report(gp: GroupedPredictions, model: str,
                    threshold: float = DEFAULT_THRESHOLD,
                    n_bins: int = DEFAULT_BINS) -> FairnessReport:
    """Compute every headline metric for one scored evaluation set."""
    fp_gap, fn_gap = error_rate_gaps(gp, threshold)
    return FairnessReport(
        model=model,
        threshold=threshold,
        high_risk_gap=high_risk_gap(gp, threshold),
        fp_gap=fp_gap,
        fn_gap=fn_gap,
        auc=auc(gp),
        accuracy=accuracy(gp, threshold),
        calibration=calibration_table(gp, n_bins),
    )
