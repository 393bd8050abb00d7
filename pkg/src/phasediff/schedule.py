"""Noise schedule, forward corruption and the skipped-step reverse update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COSINE_OFFSET = 0.008
LAMBDA_FLOOR = 1e-5


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal fraction ``lam[t]`` for t = 0..total_steps."""

    total_steps: int
    lam: np.ndarray
    eta: float = 0.0

    def __post_init__(self):
        self.lam.setflags(write=False)


def make_schedule(total_steps=1000, kind="cosine", eta=0.0):
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    if kind != "cosine":
        raise ValueError(f"unknown schedule kind {kind!r}")
    s = COSINE_OFFSET
    t = np.arange(total_steps + 1, dtype=np.float64)
    f = np.cos((t / total_steps + s) / (1 + s) * np.pi / 2) ** 2
    lam = np.clip(f / f[0], LAMBDA_FLOOR, 1.0)
    lam[0] = 1.0
    return NoiseSchedule(total_steps, lam, float(eta))


def scale_labels(y0):
    """One-hot {0,1} labels to the {-1,+1} diffusion space."""
    y0 = np.asarray(y0, dtype=np.float64)
    if y0.ndim != 2 or not (np.all((y0 == 0) | (y0 == 1)) and np.all(y0.sum(axis=1) == 1)):
        raise ValueError("scale_labels expects one-hot rows")
    return 2.0 * y0 - 1.0


def unscale(probs):
    """Map probabilities into the [-1, 1] space the reverse update works in."""
    return 2.0 * np.asarray(probs, dtype=np.float64) - 1.0


def forward_diffuse(x0, t, eps, sched):
    """sqrt(lam_t) * x0 + sqrt(1 - lam_t) * eps.

    t = 0 is accepted (returns x0) so the zero-noise limit can be tested.
    """
    if not 0 <= t <= sched.total_steps:
        raise ValueError(f"diffusion step {t} outside [1, {sched.total_steps}]")
    lam = sched.lam[t]
    return np.sqrt(lam) * np.asarray(x0) + np.sqrt(1.0 - lam) * np.asarray(eps)


def ddim_step(y_t, x0_pred, t, t_prev, sched, noise=None):
    """One reverse hop from step ``t`` to ``t_prev`` given a clean-sequence estimate.

    ``x0_pred`` must already be in the scaled [-1, 1] space.  With
    ``sched.eta == 0`` the hop is deterministic and ``noise`` is ignored.
    """
    if not 0 <= t_prev < t <= sched.total_steps:
        raise ValueError(f"need 0 <= t_prev < t <= {sched.total_steps}, got t={t}, t_prev={t_prev}")
    lam_t, lam_p = sched.lam[t], sched.lam[t_prev]
    gamma = sched.eta * np.sqrt((1 - lam_p) / (1 - lam_t)) * np.sqrt(1 - lam_t / lam_p)
    resid_var = 1.0 - lam_p - gamma**2
    if resid_var < -1e-12:
        raise ValueError(f"eta={sched.eta} incompatible with schedule at t={t}->{t_prev}")
    resid_var = max(resid_var, 0.0)
    x0_pred = np.asarray(x0_pred, dtype=np.float64)
    direction = (np.asarray(y_t) - np.sqrt(lam_t) * x0_pred) / np.sqrt(1.0 - lam_t)
    out = np.sqrt(lam_p) * x0_pred + np.sqrt(resid_var) * direction
    if gamma > 0:
        out = out + gamma * np.asarray(noise)
    return out


def inference_grid(total_steps, steps):
    """Descending step pairs (t, t_prev): ``steps`` points spread over [1, S], then 0."""
    if not 1 <= steps <= total_steps:
        raise ValueError(f"inference steps must lie in [1, {total_steps}]")
    ts = np.unique(np.round(np.linspace(total_steps, 1, steps)).astype(int))[::-1]
    if len(ts) != steps:
        raise ValueError("inference grid collapsed; use fewer steps")
    ts = [int(v) for v in ts] + [0]
    return list(zip(ts[:-1], ts[1:]))
