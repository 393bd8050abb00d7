import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasediff.losses import boundary_targets
from phasediff.masking import (
    MaskKind,
    frame_boundary,
    mask_global,
    mask_none,
    mask_relation,
    mask_transition,
    sample_mask,
)


def test_none_and_global():
    assert mask_none(5).bits.tolist() == [1] * 5
    assert mask_none(5).kind is MaskKind.NONE
    assert mask_global(3).bits.tolist() == [0] * 3
    feats = np.arange(12.0).reshape(3, 4)
    np.testing.assert_array_equal(mask_none(3).apply(feats), feats)
    assert not mask_global(3).apply(feats).any()
    with pytest.raises(ValueError):
        mask_none(0)


def test_transition_thresholding():
    assert mask_transition([0, 0, 0.9, 0.2]).bits.tolist() == [1, 1, 0, 1]
    assert mask_transition(np.zeros(6)).bits.tolist() == [1] * 6
    assert mask_transition([0.5]).bits.tolist() == [0]
    with pytest.raises(ValueError):
        mask_transition([0.2, 1.2])
    with pytest.raises(ValueError):
        mask_transition([-0.1])


def test_transition_bands_on_three_segments():
    labels = np.repeat([0, 1, 2], [20, 15, 25])
    Y0 = np.eye(3)[labels]
    # oracle: unit Gaussian bumps centred between frames 19|20 and 34|35;
    # gaps within 2 of a change score >= exp(-1/2) > 0.5, so six frames drop per change
    sigma = 2.0
    gaps = np.arange(59)
    bbar = np.clip(sum(np.exp(-((gaps - c) ** 2) / (2 * sigma**2)) * (np.abs(gaps - c) <= 8) for c in (19, 34)), 0, 1)
    np.testing.assert_allclose(boundary_targets(Y0, sigma), bbar, atol=1e-12)
    per_frame = np.maximum(np.r_[0, bbar], np.r_[bbar, 0])
    bits = mask_transition(frame_boundary(bbar)).bits
    np.testing.assert_array_equal(bits, (per_frame < 0.5).astype(float))
    dropped = np.flatnonzero(bits == 0)
    assert dropped.tolist() == list(range(17, 23)) + list(range(32, 38))


def test_relation_mask():
    labels = np.array([0, 0, 1, 1])
    assert mask_relation(labels, 1, 2).bits.tolist() == [1, 1, 0, 0]
    assert mask_relation(labels, 2, 3).bits.tolist() == [1, 1, 1, 1]
    assert mask_relation(np.zeros(3, int), 0, 1).bits.tolist() == [0, 0, 0]
    assert mask_relation(np.eye(2)[labels], 0).bits.tolist() == [0, 0, 1, 1]
    with pytest.raises(ValueError):
        mask_relation(labels, 2, 2)
    with pytest.raises(ValueError):
        mask_relation(labels, -1)


def test_sample_mask_uniform_and_deterministic():
    labels = np.repeat([0, 2, 3], 10)
    fb = frame_boundary(boundary_targets(np.eye(4)[labels]))
    rng = np.random.default_rng(0)
    draws = [sample_mask(labels, fb, rng) for _ in range(10_000)]
    for kind in MaskKind:
        freq = sum(d.kind is kind for d in draws) / len(draws)
        assert 0.23 <= freq <= 0.27
    for d in draws:
        if d.kind is MaskKind.RELATION:
            dropped = set(labels[d.bits == 0])
            assert len(dropped) == 1 and dropped <= {0, 2, 3}

    def seq(seed):
        r = np.random.default_rng(seed)
        return [sample_mask(labels, fb, r).bits.tobytes() for _ in range(50)]

    assert seq(5) == seq(5)


def test_sample_mask_restricted_kinds():
    labels = np.zeros(4, int)
    rng = np.random.default_rng(1)
    kinds = {sample_mask(labels, np.zeros(4), rng, kinds="NG").kind for _ in range(100)}
    assert kinds == {MaskKind.NONE, MaskKind.GLOBAL}


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=2, max_size=40), st.integers(0, 2**31 - 1))
def test_every_mask_has_length_T_and_gating_is_idempotent(labels, seed):
    labels = np.array(labels)
    T = len(labels)
    fb = frame_boundary(boundary_targets(np.eye(4)[labels]))
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(T, 3))
    masks = [mask_none(T), mask_global(T), mask_transition(fb), mask_relation(labels, int(labels[0]), 4)]
    masks.append(sample_mask(labels, fb, rng))
    for m in masks:
        assert len(m.bits) == T
        once = m.apply(feats)
        np.testing.assert_array_equal(m.apply(once), once)
    np.testing.assert_array_equal(mask_transition(fb).bits, 1 - (fb >= 0.5))


def test_apply_rejects_length_mismatch():
    with pytest.raises(ValueError):
        mask_none(3).apply(np.ones((4, 2)))
