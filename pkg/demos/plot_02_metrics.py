"""
Scoring confidence estimates
============================

Normalised cross-entropy rewards calibrated probabilities, while the area
under the precision-recall curve only looks at the ranking.  An overconfident
scorer can rank well yet score a negative NCE.
"""

import numpy as np

from confest.metrics import ScoredSet, auc, nce, pr_curve

rng = np.random.default_rng(0)
targets = (rng.random(2000) < 0.85).astype(int)

# a well-behaved scorer: higher for correct tokens, roughly calibrated
good = np.clip(np.where(targets == 1, rng.beta(8, 1.5, targets.size),
                        rng.beta(2, 4, targets.size)), 0, 1)

# the same ranking squashed towards 1: still separable but overconfident
overconfident = 1 - (1 - good) ** 10

for name, conf in (("calibrated", good), ("overconfident", overconfident)):
    s = ScoredSet(targets, conf)
    print(f"{name:<14} AUC {auc(pr_curve(s)):.4f}  NCE {nce(s):+.4f}")

# the curve itself: one point per distinct threshold
curve = pr_curve(ScoredSet(np.array([1, 1, 0, 1, 0]), np.array([0.9, 0.8, 0.7, 0.6, 0.2])))
for pt in curve.points:
    print(f"threshold {pt.threshold:.1f}  precision {pt.precision:.3f}  recall {pt.recall:.3f}")
