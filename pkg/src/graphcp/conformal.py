"""Split-conformal calibration and prediction-set construction.

Calibration collects the true-label score of every calibration node, sorts
them, and takes the order statistic at rank ceil((1-alpha)(n+1)); when that
rank exceeds n the threshold saturates at +inf and every label is included.
The rank is computed with exact decimal arithmetic so that, e.g., n = 9 and
alpha = 0.1 yield rank 9, not 10 via float round-up.

A label enters a node's prediction set iff its score is <= the threshold.
Empty sets are legal (they count as size 0 and never cover).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ValidationError
from .scores import ScoreMatrix


@dataclass(frozen=True)
class CalibratedThreshold:
    """The calibrated score quantile plus the context that produced it."""

    q_hat: float
    alpha: float
    n_calib: int
    calib_idx: np.ndarray

    @property
    def saturated(self) -> bool:
        return math.isinf(self.q_hat)


@dataclass(frozen=True)
class PredictionSets:
    """Per-node label membership as a boolean (n_eval, K) matrix; row order
    follows ``eval_idx``."""

    mask: np.ndarray
    eval_idx: np.ndarray
    threshold: CalibratedThreshold

    def sizes(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    @property
    def num_classes(self) -> int:
        return self.mask.shape[1]


def conformal_rank(n: int, alpha: float) -> int:
    """ceil((1-alpha)(n+1)) with alpha read as the decimal the caller wrote."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha={alpha} must lie in (0, 1)")
    return math.ceil((n + 1) * (1 - Fraction(str(alpha))))


def _score_values(scores) -> np.ndarray:
    if isinstance(scores, ScoreMatrix):
        return scores.values
    return np.asarray(scores, dtype=np.float64)


def calibrate(scores, labels: np.ndarray, calib_idx: np.ndarray,
              alpha: float) -> CalibratedThreshold:
    """Threshold from the true-label scores of the calibration nodes."""
    values = _score_values(scores)
    labels = np.asarray(labels, dtype=np.int64)
    calib_idx = np.asarray(calib_idx, dtype=np.int64)
    if calib_idx.size == 0:
        raise ValidationError("empty calibration set")
    if calib_idx.min() < 0 or calib_idx.max() >= values.shape[0]:
        raise ValidationError("calibration index out of range")
    n = int(calib_idx.shape[0])
    rank = conformal_rank(n, alpha)
    if rank > n:
        q_hat = math.inf
    else:
        true_scores = values[calib_idx, labels[calib_idx]]
        q_hat = float(np.partition(true_scores, rank - 1)[rank - 1])
    idx = np.array(calib_idx, dtype=np.int64)
    idx.setflags(write=False)
    return CalibratedThreshold(q_hat=q_hat, alpha=alpha, n_calib=n, calib_idx=idx)


def predict_sets(scores, threshold: CalibratedThreshold,
                 eval_idx: np.ndarray) -> PredictionSets:
    """All labels scoring at or below the threshold, per evaluation node.

    Evaluation nodes must be disjoint from the calibration nodes that made
    the threshold (the split contract).
    """
    values = _score_values(scores)
    eval_idx = np.asarray(eval_idx, dtype=np.int64)
    if eval_idx.size == 0:
        raise ValidationError("empty evaluation set")
    if eval_idx.min() < 0 or eval_idx.max() >= values.shape[0]:
        raise ValidationError("evaluation index out of range")
    overlap = np.intersect1d(eval_idx, threshold.calib_idx)
    if overlap.size:
        raise ValidationError(
            f"evaluation set overlaps calibration set (e.g. node {overlap[0]})"
        )
    mask = values[eval_idx] <= threshold.q_hat
    idx = np.array(eval_idx, dtype=np.int64)
    mask.setflags(write=False)
    idx.setflags(write=False)
    return PredictionSets(mask=mask, eval_idx=idx, threshold=threshold)
