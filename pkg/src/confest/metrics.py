"""Quality metrics for confidence scores.

All logarithms are natural.  Confidences are clamped to ``[EPS, 1 - EPS]``
before any log is taken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EPS",
    "ScoredSet",
    "PrPoint",
    "PrCurve",
    "binary_cross_entropy",
    "target_entropy",
    "nce",
    "pr_curve",
    "auc",
]

EPS = 1e-12


@dataclass(frozen=True)
class ScoredSet:
    """Binary targets paired with confidences in ``[0, 1]``."""

    targets: np.ndarray
    confidences: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.targets)
        p = np.asarray(self.confidences, dtype=np.float64)
        if c.ndim != 1 or p.ndim != 1 or c.shape != p.shape:
            raise ValueError(f"targets and confidences must be equal-length vectors, "
                             f"got shapes {c.shape} and {p.shape}")
        if not np.isin(c, (0, 1)).all():
            raise ValueError("targets must be 0 or 1")
        if not ((p >= 0.0) & (p <= 1.0)).all():
            raise ValueError("confidences must lie in [0, 1]")
        object.__setattr__(self, "targets", c.astype(np.int64))
        object.__setattr__(self, "confidences", p)

    def __len__(self):
        return self.targets.shape[0]


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class PrCurve:
    points: tuple[PrPoint, ...]  # ascending threshold

    def rows(self) -> list[tuple]:
        return [(p.threshold, p.precision, p.recall, p.tp, p.fp, p.fn) for p in self.points]


def binary_cross_entropy(s: ScoredSet) -> float:
    if len(s) == 0:
        raise ValueError("binary cross-entropy of an empty set")
    p = np.clip(s.confidences, EPS, 1.0 - EPS)
    c = s.targets
    return float(-np.mean(c * np.log(p) + (1 - c) * np.log1p(-p)))


def target_entropy(targets) -> float:
    """Entropy of the empirical base rate of a binary target vector."""
    c = np.asarray(targets)
    if c.size == 0:
        raise ValueError("entropy of an empty target set")
    q = c.mean()
    if q == 0.0 or q == 1.0:
        return 0.0
    return float(-(q * np.log(q) + (1 - q) * np.log1p(-q)))


def nce(s: ScoredSet) -> float:
    """Normalised cross-entropy: ``(H(c) - H(c, p)) / H(c)``."""
    h = target_entropy(s.targets)
    if h == 0.0:
        raise ValueError("entropy zero, NCE undefined (targets are all 0 or all 1)")
    return (h - binary_cross_entropy(s)) / h


def pr_curve(s: ScoredSet) -> PrCurve:
    """Precision/recall at every distinct confidence used as a threshold.

    A token is predicted correct when its confidence is ``>=`` the
    threshold.  A threshold-0 point (everything accepted) is always present.
    """
    if len(s) == 0:
        raise ValueError("P-R curve of an empty set")
    n_pos = int(s.targets.sum())
    if n_pos == 0:
        raise ValueError("P-R curve needs at least one positive target")

    order = np.argsort(-s.confidences, kind="stable")
    p = s.confidences[order]
    c = s.targets[order]
    tp = np.cumsum(c)
    fp = np.cumsum(1 - c)
    # last index of each run of equal confidences (descending)
    last = np.flatnonzero(np.r_[p[1:] != p[:-1], True])
    thresholds = p[last]
    tp, fp = tp[last], fp[last]
    if thresholds[-1] > 0.0:
        thresholds = np.r_[thresholds, 0.0]
        tp = np.r_[tp, n_pos]
        fp = np.r_[fp, len(s) - n_pos]

    points = [
        PrPoint(float(t), int(a) / (int(a) + int(b)), int(a) / n_pos, int(a), int(b), n_pos - int(a))
        for t, a, b in zip(thresholds[::-1], tp[::-1], fp[::-1])
    ]
    return PrCurve(tuple(points))


def auc(curve: PrCurve) -> float:
    """Area under the P-R curve, average-precision (right-step) convention."""
    pts = curve.points
    if not pts:
        raise ValueError("AUC of an empty curve")
    n_pos = pts[0].tp + pts[0].fn
    if n_pos == 0:
        return 0.0
    # recall steps from integer counts, summed exactly, so a perfect ranking gives 1.0
    steps = [(pt.tp - (pts[k + 1].tp if k + 1 < len(pts) else 0)) * pt.precision
             for k, pt in enumerate(pts)]
    return math.fsum(steps) / n_pos
