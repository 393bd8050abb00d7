"""Frame masks that gate the conditioning features during training."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class MaskKind(enum.Enum):
    NONE = "N"
    GLOBAL = "G"
    TRANSITION = "T"
    RELATION = "R"


@dataclass(frozen=True)
class Mask:
    bits: np.ndarray
    kind: MaskKind

    def __len__(self):
        return len(self.bits)

    def apply(self, features):
        """Gate whole frames: broadcast the (T,) mask over the feature axis."""
        features = np.asarray(features)
        if features.shape[0] != len(self.bits):
            raise ValueError(f"mask of length {len(self.bits)} cannot gate {features.shape[0]} frames")
        return features * self.bits[:, None]


def mask_none(T):
    if T < 1:
        raise ValueError("T must be >= 1")
    return Mask(np.ones(T), MaskKind.NONE)


def mask_global(T):
    if T < 1:
        raise ValueError("T must be >= 1")
    return Mask(np.zeros(T), MaskKind.GLOBAL)


def mask_transition(soft_boundary):
    """Keep frame i iff its smoothed boundary score is below 0.5."""
    b = np.asarray(soft_boundary, dtype=np.float64)
    if b.ndim != 1 or np.any(b < 0) or np.any(b > 1):
        raise ValueError("soft boundary values must be a 1-D vector in [0, 1]")
    return Mask((b < 0.5).astype(np.float64), MaskKind.TRANSITION)


def mask_relation(labels, chosen_class, num_classes=None):
    """Drop every frame labelled ``chosen_class``.

    ``labels`` may be class indices (T,) or one-hot rows (T, C).
    """
    labels = np.asarray(labels)
    if labels.ndim == 2:
        num_classes = labels.shape[1]
        labels = labels.argmax(axis=1)
    if num_classes is not None and not 0 <= chosen_class < num_classes:
        raise ValueError(f"class {chosen_class} out of range for {num_classes} classes")
    if chosen_class < 0:
        raise ValueError(f"class {chosen_class} out of range")
    return Mask((labels != chosen_class).astype(np.float64), MaskKind.RELATION)


def frame_boundary(bbar):
    """Spread the (T-1,) between-frame boundary targets onto the T frames.

    A frame takes the larger of the two transitions it touches, so frames on
    both sides of a change are marked.
    """
    bbar = np.asarray(bbar, dtype=np.float64)
    return np.maximum(np.concatenate([[0.0], bbar]), np.concatenate([bbar, [0.0]]))


_KINDS = (MaskKind.NONE, MaskKind.GLOBAL, MaskKind.TRANSITION, MaskKind.RELATION)


def sample_mask(y0, soft_boundary, rng, kinds=_KINDS):
    """Uniform draw over ``kinds``; relation masks pick a class present in ``y0``.

    ``soft_boundary`` is per frame (length T).
    """
    y0 = np.asarray(y0)
    labels = y0.argmax(axis=1) if y0.ndim == 2 else y0
    T = len(labels)
    kinds = tuple(MaskKind(k) if not isinstance(k, MaskKind) else k for k in kinds)
    kind = kinds[int(rng.integers(len(kinds)))]
    if kind is MaskKind.NONE:
        return mask_none(T)
    if kind is MaskKind.GLOBAL:
        return mask_global(T)
    if kind is MaskKind.TRANSITION:
        return mask_transition(soft_boundary)
    present = np.unique(labels)
    return mask_relation(labels, int(present[rng.integers(len(present))]))
