"""Confusion-matrix scoring and the channel diversity statistic."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rangedam.errors import EvaluationError, ShapeError, ValidationError
from rangedam.metrics import ConfusionMatrix, channel_cosine_distance, merge

from oracles import cosine_distance_double_loop, iou_set_counting, miou_set_counting


class TestAccumulate:
    def test_diagonal_counts(self):
        cm = ConfusionMatrix(3)
        cm.accumulate([1, 1, 2], [1, 1, 2])
        assert cm.counts[1, 1] == 2 and cm.counts[2, 2] == 1
        assert cm.total() == 3

    def test_all_ignored_leaves_matrix_unchanged(self):
        cm = ConfusionMatrix(3)
        cm.accumulate([255, 255], [0, 1])
        assert cm.total() == 0

    def test_cross_counts(self):
        cm = ConfusionMatrix(2)
        cm.accumulate([0, 1], [1, 0])
        assert cm.counts[0, 1] == 1 and cm.counts[1, 0] == 1

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            ConfusionMatrix(2).accumulate([0, 1], [0])

    def test_out_of_range_id(self):
        with pytest.raises(ValidationError):
            ConfusionMatrix(2).accumulate([5], [0])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_order_independence(self, seed):
        rng = np.random.default_rng(seed)
        gt = rng.integers(0, 4, 100)
        pred = rng.integers(0, 4, 100)
        cm1 = ConfusionMatrix(4).accumulate(gt, pred)
        perm = rng.permutation(100)
        cm2 = ConfusionMatrix(4).accumulate(gt[perm], pred[perm])
        np.testing.assert_array_equal(cm1.counts, cm2.counts)

    def test_merge_equals_joint_accumulation(self):
        rng = np.random.default_rng(1)
        gt = rng.integers(0, 3, 60)
        pred = rng.integers(0, 3, 60)
        joint = ConfusionMatrix(3).accumulate(gt, pred)
        a = ConfusionMatrix(3).accumulate(gt[:30], pred[:30])
        b = ConfusionMatrix(3).accumulate(gt[30:], pred[30:])
        np.testing.assert_array_equal(merge(a, b).counts, joint.counts)


class TestIoU:
    def test_perfect_prediction(self):
        cm = ConfusionMatrix(3).accumulate([0, 1, 2, 2], [0, 1, 2, 2])
        assert cm.miou() == 1.0
        for k in range(3):
            assert cm.iou(k) == 1.0

    def test_disjoint_prediction_is_zero(self):
        cm = ConfusionMatrix(2).accumulate([0, 0], [1, 1])
        assert cm.iou(0) == 0.0

    def test_hand_counted_two_class_case(self):
        """gt=[0,0,1,1], pred=[0,1,1,1]: IoU_0 = 1/2, IoU_1 = 2/3, mIoU = 7/12."""
        cm = ConfusionMatrix(2).accumulate([0, 0, 1, 1], [0, 1, 1, 1])
        assert cm.iou(0) == pytest.approx(1 / 2)
        assert cm.iou(1) == pytest.approx(2 / 3)
        assert cm.miou() == pytest.approx(7 / 12)

    def test_absent_class_undefined(self):
        cm = ConfusionMatrix(3).accumulate([0], [0])
        with pytest.raises(EvaluationError):
            cm.iou(2)
        assert np.isnan(cm.per_class_iou()[2])

    def test_empty_matrix_has_no_miou(self):
        with pytest.raises(EvaluationError):
            ConfusionMatrix(4).miou()

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(1, 80))
    def test_matches_set_counting_oracle(self, seed, k, n):
        rng = np.random.default_rng(seed)
        gt = rng.integers(0, k, n)
        pred = rng.integers(0, k, n)
        cm = ConfusionMatrix(k).accumulate(gt, pred)
        expected = miou_set_counting(gt, pred, k)
        assert cm.miou() == pytest.approx(expected, abs=1e-15)
        for cls in range(k):
            oracle = iou_set_counting(gt, pred, cls)
            if oracle is None:
                assert np.isnan(cm.per_class_iou()[cls])
            else:
                assert cm.iou(cls) == pytest.approx(oracle, abs=1e-15)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_relabeling_invariance(self, seed):
        """Permuting class ids consistently in gt and pred leaves mIoU unchanged."""
        rng = np.random.default_rng(seed)
        k = 4
        gt = rng.integers(0, k, 50)
        pred = rng.integers(0, k, 50)
        perm = rng.permutation(k)
        base = ConfusionMatrix(k).accumulate(gt, pred).miou()
        relabeled = ConfusionMatrix(k).accumulate(perm[gt], perm[pred]).miou()
        assert relabeled == pytest.approx(base, abs=1e-12)


class TestChannelCosineDistance:
    def test_identical_channels_exactly_zero(self):
        m = np.tile(np.random.default_rng(0).normal(size=(1, 4, 5)), (6, 1, 1))
        assert channel_cosine_distance(m) == 0.0

    def test_two_orthogonal_channels_exactly_quarter(self):
        """(0 + 0.5 + 0.5 + 0) / 4 = 0.25 for two orthogonal channels."""
        m = np.zeros((2, 1, 2))
        m[0, 0, 0] = 3.0
        m[1, 0, 1] = 7.0
        assert channel_cosine_distance(m) == 0.25

    def test_zero_norm_channel_contributes_half_per_pair(self):
        """Pairs touching a zero channel use cos = 0: (0.5+0.5+0.5+0)/4."""
        m = np.zeros((2, 2, 2))
        m[1] = 1.0
        assert channel_cosine_distance(m) == pytest.approx(0.375)

    def test_single_channel_is_zero(self):
        m = np.random.default_rng(1).normal(size=(1, 3, 3))
        assert channel_cosine_distance(m) == 0.0

    def test_no_channels_rejected(self):
        with pytest.raises(ValidationError):
            channel_cosine_distance(np.zeros((0, 2, 2)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_double_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        c = int(rng.integers(1, 9))
        m = rng.normal(size=(c, int(rng.integers(1, 6)), int(rng.integers(1, 6))))
        assert channel_cosine_distance(m) == pytest.approx(
            cosine_distance_double_loop(m), abs=1e-12
        )

    def test_range_and_scaling_invariance(self):
        rng = np.random.default_rng(2)
        m = rng.normal(size=(5, 4, 4))
        dist = channel_cosine_distance(m)
        assert 0.0 <= dist <= 1.0
        # power-of-two per-channel scaling is bit-exact, so the distance is too
        scales = 2.0 ** rng.integers(-3, 4, size=5)
        assert channel_cosine_distance(m * scales[:, None, None]) == dist
        # arbitrary positive scaling agrees to rounding
        scales = rng.uniform(0.1, 10.0, size=5)
        assert channel_cosine_distance(m * scales[:, None, None]) == pytest.approx(
            dist, abs=1e-12
        )

    def test_channel_permutation_invariance(self):
        rng = np.random.default_rng(3)
        m = rng.normal(size=(6, 3, 4))
        base = channel_cosine_distance(m)
        assert channel_cosine_distance(m[rng.permutation(6)]) == pytest.approx(base, abs=1e-13)
