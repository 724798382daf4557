"""Monotone piece-wise linear mapping (PWLM) of confidences.

The map is fitted on a held-out set: confidences are sorted and cut into
equal-population bins, each bin becomes a knot at (mean confidence, accuracy),
and adjacent bins that break monotonicity are pooled.  Knots at x=0 and x=1
make the map total on [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import atomic_write
from .metrics import ScoredSet

__all__ = [
    "DEFAULT_BINS",
    "DEFAULT_STRICT_MIX",
    "Pwlm",
    "fit_pwlm",
    "apply_pwlm",
    "save_pwlm",
    "load_pwlm",
]

DEFAULT_BINS = 20
# Weight of the identity map blended into the fitted knots.  Keeps the map
# strictly increasing, so scores further apart than about 1e-9 never collapse
# onto one value and rank statistics (P-R AUC) are preserved exactly.
DEFAULT_STRICT_MIX = 1e-6

_FORMAT = "confest-pwlm"
_VERSION = 1


@dataclass(frozen=True)
class Pwlm:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("a PWLM needs at least two (x, y) knots")
        if x[0] != 0.0 or x[-1] != 1.0:
            raise ValueError("knots must start at x=0 and end at x=1")
        if not (np.diff(x) > 0).all():
            raise ValueError("knot x values must be strictly increasing")
        if not (np.diff(y) >= 0).all():
            raise ValueError("knot y values must be non-decreasing")
        if y[0] < 0.0 or y[-1] > 1.0:
            raise ValueError("knot y values must lie in [0, 1]")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def knots(self) -> list[tuple[float, float]]:
        return list(zip(self.x.tolist(), self.y.tolist()))

    def __call__(self, p):
        return apply_pwlm(self, p)


def _pool(sums_x, sums_y, counts):
    """Merge adjacent bins until both knot x and knot y are strictly increasing."""
    blocks = []
    for sx, sy, n in zip(sums_x, sums_y, counts):
        blocks.append([sx, sy, n])
        while len(blocks) > 1:
            a, b = blocks[-2], blocks[-1]
            # compare the same rounded means that become knots
            if b[1] / b[2] <= a[1] / a[2] or b[0] / b[2] <= a[0] / a[2]:
                blocks[-2] = [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
                blocks.pop()
            else:
                break
    return blocks


def fit_pwlm(dev: ScoredSet, num_bins: int = DEFAULT_BINS,
             strict_mix: float = DEFAULT_STRICT_MIX) -> Pwlm:
    """Fit a PWLM mapping raw confidence to empirical accuracy on ``dev``.

    Parameters
    ----------
    dev : ScoredSet
        Held-out targets and raw confidences.
    num_bins : int
        Number of equal-population bins before pooling.
    strict_mix : float
        Weight ``w`` of the identity: each knot becomes
        ``(x, (1 - w) * accuracy + w * x)``.  ``0`` gives the plain fit
        with flat end segments.
    """
    if len(dev) == 0:
        raise ValueError("cannot fit a PWLM on an empty set")
    if num_bins < 1:
        raise ValueError(f"num_bins must be >= 1, got {num_bins}")
    if not 0.0 <= strict_mix < 1.0:
        raise ValueError("strict_mix must lie in [0, 1)")

    order = np.argsort(dev.confidences, kind="stable")
    p = dev.confidences[order]
    c = dev.targets[order].astype(np.float64)
    bins = np.array_split(np.arange(p.size), min(num_bins, p.size))
    blocks = _pool([p[b].sum() for b in bins], [c[b].sum() for b in bins], [b.size for b in bins])

    xs = [sx / n for sx, _, n in blocks]
    ys = [sy / n for _, sy, n in blocks]
    # the mean of a block can round outside [0, 1] by an ulp
    xs = list(np.clip(xs, 0.0, 1.0))
    if xs[0] > 0.0:
        xs.insert(0, 0.0)
        ys.insert(0, ys[0])
    else:
        xs[0] = 0.0
    if xs[-1] < 1.0:
        xs.append(1.0)
        ys.append(ys[-1])
    else:
        xs[-1] = 1.0
        if len(xs) == 1:
            # every dev confidence was 1.0
            xs.insert(0, 0.0)
            ys.insert(0, ys[0])

    x = np.array(xs)
    y = np.clip(np.array(ys), 0.0, 1.0)
    if strict_mix:
        y = (1.0 - strict_mix) * y + strict_mix * x
    return Pwlm(x, np.clip(np.maximum.accumulate(y), 0.0, 1.0))


def apply_pwlm(m: Pwlm, p):
    """Map confidences through ``m`` by linear interpolation between knots."""
    arr = np.asarray(p, dtype=np.float64)
    if not ((arr >= 0.0) & (arr <= 1.0)).all():
        raise ValueError("confidences must lie in [0, 1]")
    out = np.interp(arr, m.x, m.y)
    if arr.ndim == 0:
        return float(out)
    return out


def save_pwlm(m: Pwlm, path) -> None:
    with atomic_write(path) as fh:
        fh.write(f"{_FORMAT} {_VERSION}\n")
        fh.write(f"num_knots {m.x.size}\n")
        for x, y in m.knots:
            fh.write(f"{x!r} {y!r}\n")


def load_pwlm(path) -> Pwlm:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0].split() != [_FORMAT, str(_VERSION)]:
        raise ValueError(f"{path}: not a {_FORMAT} v{_VERSION} file")
    key, _, n = lines[1].partition(" ")
    if key != "num_knots" or not n.isdigit():
        raise ValueError(f"{path}:2: expected 'num_knots <count>'")
    rows = [ln.split() for ln in lines[2:]]
    if len(rows) != int(n) or any(len(r) != 2 for r in rows):
        raise ValueError(f"{path}: expected {n} lines of 'x y'")
    knots = np.array(rows, dtype=np.float64)
    return Pwlm(knots[:, 0], knots[:, 1])
