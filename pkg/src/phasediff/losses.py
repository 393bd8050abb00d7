"""Training objectives on framewise phase probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tc
from .logic import logic_loss

PROB_FLOOR = 1e-12
BOUNDARY_EPS = 1e-7
SMOOTH_CLIP = 16.0


@dataclass(frozen=True)
class LossWeights:
    ce: float = 0.5
    smo: float = 0.025
    bd: float = 0.1
    pl: float = 0.1

    def __post_init__(self):
        if min(self.ce, self.smo, self.bd, self.pl) < 0:
            raise ValueError("loss weights must be non-negative")


def _check_pair(P, Y0):
    if tuple(P.shape) != tuple(np.shape(Y0)):
        raise tc.ShapeError(f"probabilities {P.shape} vs labels {np.shape(Y0)}")


def ce_loss(P, Y0):
    """Cross-entropy normalised by T*C (not T)."""
    P = tc.as_value(P)
    _check_pair(P, Y0)
    T, C = P.shape
    logp = tc.log(tc.clamp(P, lo=PROB_FLOOR))
    return -(logp * np.asarray(Y0, dtype=np.float64)).sum() * (1.0 / (T * C))


def smooth_loss(P):
    """Mean squared change of log-probabilities between neighbours, each term capped at 16."""
    P = tc.as_value(P)
    T, C = P.shape
    if T < 2:
        raise ValueError("smooth_loss needs at least two frames")
    logp = tc.log(tc.clamp(P, lo=PROB_FLOOR))
    d = logp[1:] - logp[:-1]
    return tc.clamp(d * d, hi=SMOOTH_CLIP).sum() * (1.0 / ((T - 1) * C))


def change_points(labels):
    labels = np.asarray(labels)
    if labels.ndim == 2:
        labels = labels.argmax(axis=1)
    return (labels[1:] != labels[:-1]).astype(np.float64)


def boundary_targets(Y0, sigma=2.0):
    """Gaussian-smoothed change indicator, length T-1, unit height at each change.

    The kernel is exp(-d^2 / (2 sigma^2)) truncated at ceil(4 sigma) and
    the indicator is mirror-padded at both ends; overlapping bumps are
    capped at 1.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    B = change_points(Y0)
    if len(B) < 1:
        raise ValueError("boundary targets need at least two frames")
    r = int(math.ceil(4 * sigma))
    d = np.arange(-r, r + 1)
    kernel = np.exp(-(d**2) / (2.0 * sigma**2))
    padded = np.pad(B, r, mode="symmetric") if len(B) >= r else _pad_symmetric(B, r)
    out = np.convolve(padded, kernel, mode="valid")
    return np.clip(out, 0.0, 1.0)


def _pad_symmetric(x, r):
    # np.pad's symmetric mode refuses pads longer than the array
    idx = np.arange(-r, len(x) + r)
    n = len(x)
    period = 2 * n
    m = np.mod(idx, period)
    m = np.where(m >= n, period - 1 - m, m)
    return x[m]


def boundary_loss(P, targets):
    """BCE between 1 - <P_i, P_i+1> and the smoothed boundary targets."""
    P = tc.as_value(P)
    targets = np.asarray(targets, dtype=np.float64)
    T = P.shape[0]
    if T < 2:
        raise ValueError("boundary_loss needs at least two frames")
    if targets.shape != (T - 1,):
        raise tc.ShapeError(f"boundary targets {targets.shape} for {T} frames")
    same = (P[1:] * P[:-1]).sum(axis=1)
    b = tc.clamp(1.0 - same, BOUNDARY_EPS, 1.0 - BOUNDARY_EPS)
    bce = -(tc.log(b) * targets) - tc.log(1.0 - b) * (1.0 - targets)
    return bce.sum() * (1.0 / (T - 1))


def total_loss(P, Y0, targets, formulas, weights=LossWeights(), gamma=0.5):
    """Weighted sum of the four objectives; zero-weighted terms are skipped."""
    P = tc.as_value(P)
    terms = []
    if weights.ce:
        terms.append(ce_loss(P, Y0) * weights.ce)
    if weights.smo:
        terms.append(smooth_loss(P) * weights.smo)
    if weights.bd:
        terms.append(boundary_loss(P, targets) * weights.bd)
    if weights.pl and formulas:
        terms.append(logic_loss(formulas, P, gamma) * weights.pl)
    if not terms:
        return tc.Value(0.0)
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out
