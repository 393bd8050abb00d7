"""Strict and boundary-tolerant frame metrics on a hand-made prediction."""

import numpy as np

from phasediff.logic import default_rules
from phasediff.metrics import count_violations, frame_metrics, relaxed_metrics

true = np.repeat([0, 1, 2, 3, 4, 5, 6, 7], 10)
pred = true.copy()
pred[8:12] = [1, 1, 0, 0]  # a jittery boundary
pred[40:44] = 7  # an early Clips prediction

strict = frame_metrics(pred, true)
print(f"strict  acc {strict.accuracy:.3f}  jaccard {strict.macro_jaccard:.3f}")
relaxed = relaxed_metrics(pred, true, window=10)
print(f"relaxed acc {relaxed['accuracy']:.3f}  jaccard {relaxed['macro_jaccard']:.3f}")
print("rules broken:", count_violations(pred, default_rules()), "of", len(default_rules()))
