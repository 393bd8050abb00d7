"""Soft (differentiable) and hard (boolean) evaluation of formulas.

Soft scores follow the sign convention ``score > 0`` means satisfied.  Each
node is evaluated for every start frame at once, giving a length-T trace;
``eval_soft(f, s, t)`` reads entry ``t`` of the root trace.  Disjunction and
eventually use the log-sum-exp soft maximum, conjunction and the two
windowed operators the matching soft minimum::

    softmin_g(v) = -g * log(sum(exp(-v / g)))       # -> min(v) as g -> 0+

The window end (weak until) or start (since) is the first frame at or after
``t`` where the right operand's score is strictly positive; that choice is
made from the score values and carries no gradient.
"""

from __future__ import annotations

import numpy as np

from .. import tensor as tc
from .formula import Formula

BIG = 1e4  # stands in for +/- infinity on True / False


def softmin(values, gamma):
    """Scalar soft minimum of a 1-D array or Value."""
    return -softmax(tc.neg(tc.as_value(values)), gamma)


def softmax(values, gamma):
    return tc.logsumexp(tc.as_value(values) * (1.0 / gamma), axis=-1) * gamma


def _pair_max(a, b, gamma):
    T = a.shape[0]
    stacked = tc.concat([a.reshape(T, 1), b.reshape(T, 1)], axis=1)
    return tc.logsumexp(stacked * (1.0 / gamma), axis=1) * gamma


def _first_positive(scores):
    """k[t] = min j >= t with scores[j] > 0, or -1 when none exists."""
    T = len(scores)
    k = np.full(T, -1)
    nxt = -1
    for j in range(T - 1, -1, -1):
        if scores[j] > 0:
            nxt = j
        k[j] = nxt
    return k


def soft_trace(formula, scores, gamma, memo=None):
    """Length-T Value of soft satisfaction scores for start frames 0..T-1.

    ``scores`` is a (T, C) Value or array.  Pass a dict as ``memo`` to share
    sub-results across several formulas evaluated on the same scores; pass
    ``memo=False`` to disable sharing entirely.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    scores = tc.as_value(scores)
    T = scores.shape[0]
    root = formula.root if isinstance(formula, Formula) else formula
    cache = {} if memo is None else memo
    j = np.arange(T)
    inv = 1.0 / gamma

    def ev(n):
        if cache is not False and n in cache:
            return cache[n]
        op = n.op
        if op == "const":
            out = tc.Value(np.full(T, BIG if n.arg else -BIG))
        elif op == "atom":
            out = scores[:, n.arg]
        elif op == "not":
            out = tc.neg(ev(n.children[0]))
        elif op == "or":
            out = _pair_max(ev(n.children[0]), ev(n.children[1]), gamma)
        elif op == "and":
            a, b = ev(n.children[0]), ev(n.children[1])
            out = tc.neg(_pair_max(tc.neg(a), tc.neg(b), gamma))
        elif op == "next":
            v = ev(n.children[0])
            out = tc.concat([v[1:], tc.Value([-BIG])], axis=0)
        elif op == "eventually":
            v = ev(n.children[0])
            window = j[None, :] >= j[:, None]
            out = tc.window_logsumexp(v * inv, window) * gamma
        elif op in ("wuntil", "since"):
            v1, v2 = ev(n.children[0]), ev(n.children[1])
            k = _first_positive(v2.data)
            if op == "wuntil":
                end = np.where(k >= 0, k, T - 1)
                window = (j[None, :] >= j[:, None]) & (j[None, :] <= end[:, None])
            else:
                window = (k[:, None] >= 0) & (j[None, :] >= k[:, None])
            out = tc.neg(tc.window_logsumexp(tc.neg(v1) * inv, window, empty=-BIG * inv) * gamma)
        else:
            raise ValueError(f"unknown operator {op!r}")
        if cache is not False:
            cache[n] = out
        return out

    return ev(root)


def eval_soft(formula, scores, t, gamma, memo=None):
    """Differentiable satisfaction score of ``formula`` from frame ``t``."""
    T = tc.as_value(scores).shape[0]
    if not 0 <= t < T:
        raise ValueError(f"start frame {t} outside [0, {T - 1}]")
    return soft_trace(formula, scores, gamma, memo)[t]


def eval_hard(formula, labels, t=0):
    """Exact boolean semantics on a hard label sequence (class indices).

    Written as a plain per-frame recursion, independent of the vectorised
    soft evaluator, so it can serve as its oracle.
    """
    labels = [int(x) for x in np.asarray(labels).ravel()]
    T = len(labels)
    if not 0 <= t < T:
        raise ValueError(f"start frame {t} outside [0, {T - 1}]")
    root = formula.root if isinstance(formula, Formula) else formula
    memo = {}

    def sat(n, i):
        key = (id(n), i)
        if key in memo:
            return memo[key]
        op = n.op
        if op == "const":
            r = bool(n.arg)
        elif op == "atom":
            r = labels[i] == n.arg
        elif op == "not":
            r = not sat(n.children[0], i)
        elif op == "or":
            r = sat(n.children[0], i) or sat(n.children[1], i)
        elif op == "and":
            r = sat(n.children[0], i) and sat(n.children[1], i)
        elif op == "next":
            r = i + 1 < T and sat(n.children[0], i + 1)
        elif op == "eventually":
            r = any(sat(n.children[0], m) for m in range(i, T))
        else:
            a, b = n.children
            k = next((m for m in range(i, T) if sat(b, m)), None)
            if op == "wuntil":
                r = all(sat(a, m) for m in range(i, T if k is None else k + 1))
            else:
                r = k is None or all(sat(a, m) for m in range(k, T))
        memo[key] = r
        return r

    return sat(root, t)


def probs_to_scores(probs):
    """Probabilities in [0, 1] to signed scores: 'asserted' iff p > 0.5."""
    return tc.as_value(probs) * 2.0 - 1.0


def logic_loss(formulas, probs, gamma=0.5):
    """Mean softplus(-score) over formulas, each scored from frame 0.

    All formulas share one memo table, so subformulas common to several
    rules are evaluated once.
    """
    formulas = list(formulas)
    if not formulas:
        raise ValueError("logic_loss needs at least one formula")
    scores = probs_to_scores(probs)
    memo = {}
    terms = [tc.softplus(tc.neg(soft_trace(f, scores, gamma, memo)[0])) for f in formulas]
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total * (1.0 / len(terms))
