"""Frame-level evaluation: accuracy, macro precision/recall/Jaccard, relaxed variants, rule violations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .logic import eval_hard


@dataclass
class EvalReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_jaccard: float
    per_class: dict = field(default_factory=dict)  # class -> (precision, recall, jaccard)
    violations: float | None = None
    relaxed: dict | None = None

    def as_dict(self, prefix=""):
        out = {
            f"{prefix}accuracy": self.accuracy,
            f"{prefix}macro_precision": self.macro_precision,
            f"{prefix}macro_recall": self.macro_recall,
            f"{prefix}macro_jaccard": self.macro_jaccard,
        }
        if self.relaxed:
            out.update({f"{prefix}relaxed_{k}": v for k, v in self.relaxed.items()})
        if self.violations is not None:
            out[f"{prefix}violations"] = self.violations
        return out


def _ratio(a, b):
    return a / b if b else 0.0


def _macro(rows, col):
    # plain left-to-right sum in class order, so results are reproducible bit for bit
    return sum(r[col] for r in rows) / len(rows)


def frame_metrics(pred, true):
    """Strict metrics; macro means run over classes present in truth or prediction.

    A precision or recall whose denominator is zero counts as 0.
    """
    pred = np.asarray(pred).ravel()
    true = np.asarray(true).ravel()
    if pred.shape != true.shape:
        raise ValueError(f"prediction length {pred.size} != truth length {true.size}")
    if pred.size == 0:
        raise ValueError("empty label sequence")
    per_class = {}
    for c in np.union1d(pred, true):
        p, t = pred == c, true == c
        tp = int(np.sum(p & t))
        fp = int(np.sum(p & ~t))
        fn = int(np.sum(~p & t))
        per_class[int(c)] = (_ratio(tp, tp + fp), _ratio(tp, tp + fn), _ratio(tp, tp + fp + fn))
    vals = list(per_class.values())
    return EvalReport(
        accuracy=float(np.mean(pred == true)),
        macro_precision=_macro(vals, 0),
        macro_recall=_macro(vals, 1),
        macro_jaccard=_macro(vals, 2),
        per_class=per_class,
    )


def relaxed_labels(pred, true, window=10):
    """Prediction with boundary-tolerant hits rewritten to the true label.

    A frame within ``window`` of a true phase change counts as a hit when its
    predicted label equals the true label of any frame within +/- ``window``.
    Elsewhere an exact match is required.
    """
    pred = np.asarray(pred).ravel().copy()
    true = np.asarray(true).ravel()
    if pred.shape != true.shape:
        raise ValueError(f"prediction length {pred.size} != truth length {true.size}")
    T = len(true)
    if window <= 0:
        return pred
    changes = np.flatnonzero(true[1:] != true[:-1]) + 1
    near = np.zeros(T, dtype=bool)
    for b in changes:
        near[max(0, b - window) : min(T, b + window)] = True
    for i in np.flatnonzero(near & (pred != true)):
        if pred[i] in true[max(0, i - window) : i + window + 1]:
            pred[i] = true[i]
    return pred


def relaxed_metrics(pred, true, window=10):
    r = frame_metrics(relaxed_labels(pred, true, window), true)
    return {
        "accuracy": r.accuracy,
        "macro_precision": r.macro_precision,
        "macro_recall": r.macro_recall,
        "macro_jaccard": r.macro_jaccard,
    }


def count_violations(pred, formulas):
    """Number of formulas not satisfied from frame 0."""
    formulas = list(formulas)
    if not formulas:
        raise ValueError("count_violations needs at least one formula")
    pred = np.asarray(pred).ravel()
    if pred.size == 0:
        raise ValueError("empty prediction")
    return sum(0 if eval_hard(f, pred, 0) else 1 for f in formulas)


def evaluate_sequences(pairs, formulas=None, window=10):
    """Average per-sequence reports over (pred, true) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("nothing to evaluate")
    reports = [frame_metrics(p, t) for p, t in pairs]
    relaxed = [relaxed_metrics(p, t, window) for p, t in pairs]
    keys = ("accuracy", "macro_precision", "macro_recall", "macro_jaccard")
    out = EvalReport(**{k: float(np.mean([getattr(r, k) for r in reports])) for k in keys})
    out.relaxed = {k: float(np.mean([r[k] for r in relaxed])) for k in keys}
    if formulas:
        out.violations = float(np.mean([count_violations(p, formulas) for p, _ in pairs]))
    return out
