import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from croprefine.regiongrow import (
    argmax_labels,
    find_anchors,
    grow_region,
    refine_labels,
    resolve,
)
from oracles import region_grow_oracle


def random_softmax(rng, h=16, w=16, k=4, concentration=0.5):
    raw = rng.gamma(concentration, size=(h, w, k))
    return raw / raw.sum(axis=-1, keepdims=True)


class TestArgmax:
    def test_simple(self):
        probs = np.array([[[0.7, 0.2, 0.1]]])
        assert argmax_labels(probs)[0, 0] == 1

    def test_tie_lowest_code(self):
        probs = np.array([[[0.5, 0.5]]])
        assert argmax_labels(probs)[0, 0] == 1

    def test_invalid_unknown(self):
        probs = np.full((2, 2, 3), 1 / 3)
        valid = np.array([[True, False], [True, True]])
        out = argmax_labels(probs, valid)
        assert out[0, 1] == 0 and out[0, 0] == 1

    def test_matches_exhaustive_search(self):
        rng = np.random.default_rng(0)
        probs = random_softmax(rng)
        out = argmax_labels(probs)
        for i in range(16):
            for j in range(16):
                best = max(range(4), key=lambda c: (probs[i, j, c], -c))
                assert out[i, j] == best + 1


class TestAnchors:
    def test_above_threshold(self):
        probs = np.array([[[0.91, 0.09]]])
        assert find_anchors(probs, 0)[0, 0]

    def test_exact_threshold_excluded(self):
        probs = np.array([[[0.90, 0.10]]])
        assert not find_anchors(probs, 0)[0, 0]

    def test_no_anchor_no_region(self):
        probs = np.full((4, 4, 2), 0.5)
        anchors = find_anchors(probs, 0)
        assert not anchors.any()
        assert not grow_region(probs, anchors, 0).any()

    def test_invalid_theta(self):
        with pytest.raises(ValueError):
            find_anchors(np.zeros((1, 1, 2)), 0, theta_anchor=0.5)


class TestGrow:
    def test_grows_connected_region(self):
        probs = np.zeros((8, 8, 2))
        probs[..., 0] = 0.35
        probs[..., 1] = 0.65
        probs[4, 4, 0] = 0.95
        probs[4, 4, 1] = 0.05
        anchors = find_anchors(probs, 0)
        grown = grow_region(probs, anchors, 0)
        assert grown.all()

    def test_disconnected_not_labeled(self):
        probs = np.zeros((1, 5, 2))
        probs[0, :, 0] = [0.95, 0.1, 0.5, 0.5, 0.5]
        probs[..., 1] = 1 - probs[..., 0]
        anchors = find_anchors(probs, 0)
        grown = grow_region(probs, anchors, 0)
        assert grown[0, 0] and not grown[0, 2:].any()

    def test_anchor_always_included(self):
        probs = np.zeros((3, 3, 2))
        probs[1, 1, 0] = 0.95
        anchors = find_anchors(probs, 0)
        # even with theta_grow above the anchor's own probability
        grown = grow_region(probs, anchors, 0, theta_grow=0.99)
        assert grown[1, 1]


class TestResolve:
    def test_clash_unknown(self):
        masks = np.zeros((8, 2, 2), dtype=bool)
        masks[3, 0, 0] = True
        masks[7, 0, 0] = True
        assert resolve(masks)[0, 0] == 0

    def test_single_claim(self):
        masks = np.zeros((8, 2, 2), dtype=bool)
        masks[2, 1, 1] = True
        assert resolve(masks)[1, 1] == 3

    def test_unclaimed_unknown(self):
        masks = np.zeros((3, 2, 2), dtype=bool)
        assert not resolve(masks).any()


class TestPipeline:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_matches_oracle(self, seed):
        rng = np.random.default_rng(seed)
        probs = random_softmax(rng)
        np.testing.assert_array_equal(refine_labels(probs), region_grow_oracle(probs))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_anchor_uniqueness(self, seed):
        rng = np.random.default_rng(seed)
        probs = random_softmax(rng)
        anchor_count = sum(find_anchors(probs, k).astype(int) for k in range(4))
        assert (anchor_count <= 1).all()

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_support_bound(self, seed):
        rng = np.random.default_rng(seed)
        probs = random_softmax(rng)
        refined = refine_labels(probs)
        known = refined != 0
        codes = refined[known].astype(int) - 1
        supports = probs[known, :][np.arange(codes.size), codes]
        assert (supports >= 0.3).all()

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_monotone_in_theta_grow(self, seed):
        rng = np.random.default_rng(seed)
        probs = random_softmax(rng)
        for k in range(4):
            anchors = find_anchors(probs, k)
            tight = grow_region(probs, anchors, k, theta_grow=0.4)
            loose = grow_region(probs, anchors, k, theta_grow=0.2)
            assert (loose | tight == loose).all()

    def test_anchor_preserved_unless_clashed(self):
        rng = np.random.default_rng(9)
        probs = random_softmax(rng)
        refined = refine_labels(probs)
        masks = [grow_region(probs, find_anchors(probs, k), k) for k in range(4)]
        claims = np.sum(masks, axis=0)
        for k in range(4):
            anchors = find_anchors(probs, k)
            preserved = anchors & (claims == 1)
            assert (refined[preserved] == k + 1).all()
