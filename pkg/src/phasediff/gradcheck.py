"""Finite-difference checks for every differentiable component.

Each ``check_*`` function draws a random instance from ``seed`` and returns
the largest relative error between backprop and central differences.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from . import tensor as tc
from .denoiser import DenoiserConfig, decode, encode, init_params, param_shapes
from .formats import one_hot
from .logic import Interner, Formula, logic_loss, soft_trace
from .logic.evaluate import probs_to_scores
from .losses import LossWeights, boundary_loss, boundary_targets, ce_loss, smooth_loss, total_loss

STEP = 1e-6
_UNARY = ("not", "next", "eventually")
_BINARY = ("or", "and", "wuntil", "since")


def random_formula(rng, depth, num_classes, interner=None):
    """Random formula of depth at most ``depth`` over ``num_classes`` atoms."""
    interner = interner or Interner()

    def build(d):
        if d <= 1 or rng.random() < 0.2:
            if rng.random() < 0.1:
                return interner.make("const", (), bool(rng.integers(2)))
            return interner.make("atom", (), int(rng.integers(num_classes)))
        if rng.random() < 0.4:
            return interner.make(_UNARY[rng.integers(len(_UNARY))], (build(d - 1),))
        op = _BINARY[rng.integers(len(_BINARY))]
        return interner.make(op, (build(d - 1), build(d - 1)))

    return Formula(build(depth))


def selection_margin(formulas, scores, gamma):
    """Smallest |score| of any until/since right operand; inf if none."""
    memo = {}
    for f in formulas:
        soft_trace(f, scores, gamma, memo)
    margin = np.inf
    for node, trace in memo.items():
        if node.op in ("wuntil", "since"):
            margin = min(margin, float(np.min(np.abs(memo[node.children[1]].data))))
    return margin


def _random_probs_logits(rng, T, C):
    return rng.normal(scale=1.5, size=(T, C))


def _instance(seed, T=None, C=None):
    rng = np.random.default_rng(seed)
    T = T or int(rng.integers(6, 21))
    C = C or int(rng.integers(2, 5))
    labels = np.sort(rng.integers(0, C, size=T))
    return rng, T, C, labels


def check_ce(seed):
    rng, T, C, labels = _instance(seed)
    Y0 = one_hot(labels, C)
    z = _random_probs_logits(rng, T, C)
    return tc.grad_check(lambda v: ce_loss(tc.softmax(v.reshape(T, C), axis=1), Y0), z.ravel(), STEP)


def check_smooth(seed):
    rng, T, C, _ = _instance(seed)
    z = _random_probs_logits(rng, T, C)
    return tc.grad_check(lambda v: smooth_loss(tc.softmax(v.reshape(T, C), axis=1)), z.ravel(), STEP)


def check_boundary(seed):
    rng, T, C, labels = _instance(seed)
    bbar = boundary_targets(one_hot(labels, C), 2.0)
    z = _random_probs_logits(rng, T, C)
    return tc.grad_check(lambda v: boundary_loss(tc.softmax(v.reshape(T, C), axis=1), bbar), z.ravel(), STEP)


def _formulas_with_margin(rng, P, C, n, depth, gamma, margin=0.1):
    """Draw formulas until the until/since selection is at least ``margin`` from a flip."""
    scores = probs_to_scores(P)
    out = []
    while len(out) < n:
        f = random_formula(rng, depth, C)
        if selection_margin([f], scores, gamma) > margin:
            out.append(f)
    return out


def check_logic(seed, T=12, C=4, depth=3, gamma=0.5):
    rng = np.random.default_rng(seed)
    z = _random_probs_logits(rng, T, C)
    P = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    formulas = _formulas_with_margin(rng, P, C, 3, depth, gamma)
    return tc.grad_check(lambda v: logic_loss(formulas, v.reshape(T, C), gamma), P.ravel(), STEP)


def check_total(seed, T=20, C=4, gamma=0.5):
    rng, _, _, labels = _instance(seed, T, C)
    Y0 = one_hot(labels, C)
    bbar = boundary_targets(Y0, 2.0)
    z = _random_probs_logits(rng, T, C)
    P = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    formulas = _formulas_with_margin(rng, P, C, 3, 3, gamma)
    weights = LossWeights()
    return tc.grad_check(
        lambda v: total_loss(tc.softmax(v.reshape(T, C), axis=1), Y0, bbar, formulas, weights, gamma),
        z.ravel(),
        STEP,
    )


def check_denoiser(seed, T=8, C=3, D=4):
    """Encoder + decoder gradient w.r.t. every parameter."""
    rng = np.random.default_rng(seed)
    cfg = DenoiserConfig(D, C, enc_layers=2, dec_layers=2, hidden=4, dec_hidden=4, total_steps=50)
    params = init_params(cfg, seed)
    feats = rng.normal(size=(T, D))
    labels = rng.integers(0, C, size=T)
    Y0 = one_hot(labels, C)
    y_t = rng.normal(size=(T, C))
    t = int(rng.integers(1, cfg.total_steps + 1))
    mask = (rng.random(T) < 0.7).astype(float)
    shapes = param_shapes(cfg)

    def f(flat):
        leaves = OrderedDict()
        pos = 0
        for name, shape in shapes:
            size = int(np.prod(shape))
            leaves[name] = flat[pos : pos + size].reshape(shape)
            pos += size
        cond, aux = encode(leaves, feats)
        probs = decode(leaves, y_t, t, cond * mask[:, None], cfg.total_steps)
        return ce_loss(probs, Y0) + smooth_loss(probs) + ce_loss(aux, Y0)

    return tc.grad_check(f, params.flat(), STEP)


COMPONENTS = {
    "ce": check_ce,
    "smooth": check_smooth,
    "boundary": check_boundary,
    "logic": check_logic,
    "total": check_total,
    "denoiser": check_denoiser,
}
GROUPS = {
    "losses": ("ce", "smooth", "boundary", "total"),
    "logic": ("logic",),
    "denoiser": ("denoiser",),
    "all": tuple(COMPONENTS),
}


def run_suite(component="all", seed=0, n_seeds=1):
    """{component: max relative error over seeds seed..seed+n_seeds-1}."""
    names = GROUPS.get(component, (component,) if component in COMPONENTS else None)
    if names is None:
        raise KeyError(f"unknown component {component!r}; choose from {sorted(set(COMPONENTS) | set(GROUPS))}")
    return {name: max(COMPONENTS[name](s) for s in range(seed, seed + n_seeds)) for name in names}
