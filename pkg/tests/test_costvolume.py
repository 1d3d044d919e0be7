"""Cost volume formation, filtering, and the three selection rules."""

import numpy as np
import pytest

from stereokit import costvolume as cv
from stereokit import tensor as T
from stereokit.tensor import Tape, Tensor


def rand_feats(rng, h=6, w=10, c=4, dtype=np.float64):
    return Tensor(rng.normal(size=(h, w, c)).astype(dtype))


class TestFormCostVolume:
    def test_identical_features_zero_at_d0(self):
        rng = np.random.default_rng(0)
        f = rand_feats(rng)
        raw = cv.form_cost_volume(f, Tensor(f.data.copy()), 3)
        np.testing.assert_array_equal(raw.data[:, :, 0, :], 0.0)

    def test_shifted_features_zero_at_d1(self):
        rng = np.random.default_rng(1)
        f = rand_feats(rng)
        shifted = np.empty_like(f.data)
        shifted[:, 1:, :] = f.data[:, :-1, :]
        shifted[:, 0, :] = f.data[:, 0, :]
        # featR[x] = featL[x-1], so candidate d=1 matches in the interior
        raw = cv.form_cost_volume(Tensor(shifted), f, 2)
        np.testing.assert_allclose(raw.data[:, 1:, 1, :], 0.0, atol=1e-12)

    def test_shape_rule(self):
        rng = np.random.default_rng(2)
        raw = cv.form_cost_volume(rand_feats(rng, 8, 16, 32), rand_feats(rng, 8, 16, 32), 4)
        assert raw.shape == (8, 16, 4, 32)

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError):
            cv.form_cost_volume(rand_feats(rng, 4, 4), rand_feats(rng, 4, 5), 2)

    def test_gradients_including_border_clamp(self):
        rng = np.random.default_rng(4)
        fl0 = rng.normal(size=(3, 5, 2))
        fr0 = rng.normal(size=(3, 5, 2))

        def loss_wrt_left(fl):
            return T.sum_all(T.square(cv.form_cost_volume(fl, Tensor(fr0), 3)))

        def loss_wrt_right(fr):
            return T.sum_all(T.square(cv.form_cost_volume(Tensor(fl0), fr, 3)))

        assert T.finite_diff_check(loss_wrt_left, Tensor(fl0)) < 1e-6
        assert T.finite_diff_check(loss_wrt_right, Tensor(fr0)) < 1e-6


class TestCoarseCandidates:
    def test_divisibility_enforced(self):
        assert cv.coarse_candidates(31, 3) == 4
        assert cv.coarse_candidates(191, 3) == 24
        with pytest.raises(ValueError, match="divisible"):
            cv.coarse_candidates(30, 3)


class TestFilterCostVolume:
    def test_output_shape_and_zero_weights(self):
        rng = np.random.default_rng(5)
        params = cv.build_filter(rng, channels=8)
        raw = Tensor(rng.normal(size=(4, 6, 3, 8)).astype(np.float32))
        filtered = cv.filter_cost_volume(raw, params)
        assert filtered.shape == (4, 6, 3)

        for w, b, _, _ in params.convs:
            w.value.data[...] = 0.0
            b.value.data[...] = 0.0
        params.head_w.value.data[...] = 0.0
        params.head_b.value.data[...] = 0.0
        filtered = cv.filter_cost_volume(raw, params)
        np.testing.assert_array_equal(filtered.data, 0.0)

    def test_gradient_through_filtering(self):
        rng = np.random.default_rng(6)
        params = cv.build_filter(rng, channels=3)
        for p in params.params():
            p.value.data = p.value.data.astype(np.float64)
            p.value.grad = np.zeros_like(p.value.data)
        raw0 = rng.normal(size=(3, 4, 2, 3))

        def loss(raw):
            return T.sum_all(T.square(cv.filter_cost_volume(raw, params)))

        assert T.finite_diff_check(loss, Tensor(raw0)) < 1e-5


class TestHardArgmin:
    def test_min_and_tie_rule(self):
        costs = Tensor(np.array([[[3.0, 1.0, 2.0], [1.0, 1.0, 5.0]]]))
        d = cv.hard_argmin(costs, level=3)
        np.testing.assert_array_equal(d.values.data, [[1.0, 0.0]])
        assert d.level == 3

    def test_invariant_to_per_pixel_offset(self):
        rng = np.random.default_rng(7)
        costs = rng.normal(size=(4, 5, 6))
        shiftd = costs + rng.normal(size=(4, 5, 1))
        a = cv.hard_argmin(Tensor(costs), 0).values.data
        b = cv.hard_argmin(Tensor(shiftd), 0).values.data
        np.testing.assert_array_equal(a, b)


class TestSoftArgmin:
    def test_uniform_costs_give_midpoint(self):
        costs = Tensor(np.zeros((2, 2, 4)))
        d = cv.soft_argmin(costs, level=3)
        np.testing.assert_allclose(d.values.data, 1.5, atol=1e-7)

    def test_documented_peaked_value(self):
        # direct summation of the softmax-weighted mean for [0,10,10,10]
        costs = np.array([0.0, 10.0, 10.0, 10.0])
        e = np.exp(-costs - (-costs).max())
        expected = (np.arange(4) * e).sum() / e.sum()
        assert expected == pytest.approx(2.72e-4, rel=2e-3)
        d = cv.soft_argmin(Tensor(costs.reshape(1, 1, 4)), level=0)
        assert d.values.data[0, 0] == pytest.approx(expected, rel=1e-6)

    def test_range_and_shift_invariance(self):
        rng = np.random.default_rng(8)
        costs = rng.normal(size=(5, 7, 9)) * 5
        d = cv.soft_argmin(Tensor(costs), 0).values.data
        assert (d >= 0).all() and (d <= 8).all()
        shifted = cv.soft_argmin(Tensor(costs + rng.normal(size=(5, 7, 1))), 0).values.data
        np.testing.assert_allclose(d, shifted, atol=1e-6)

    def test_agrees_with_hard_argmin_under_margin(self):
        rng = np.random.default_rng(9)
        base = rng.uniform(25.0, 30.0, size=(4, 6, 24))
        mins = rng.integers(0, 24, size=(4, 6))
        ys, xs = np.mgrid[0:4, 0:6]
        base[ys, xs, mins] = rng.uniform(0.0, 5.0, size=(4, 6))  # margin >= 20
        soft = cv.soft_argmin(Tensor(base), 0).values.data
        hard = cv.hard_argmin(Tensor(base), 0).values.data
        np.testing.assert_allclose(soft, hard, atol=1e-6)

    def test_appending_huge_cost_slice_changes_nothing(self):
        rng = np.random.default_rng(10)
        costs = rng.normal(size=(3, 4, 5))
        ext = np.concatenate([costs, np.full((3, 4, 1), 1e4)], axis=2)
        a = cv.soft_argmin(Tensor(costs), 0).values.data
        b = cv.soft_argmin(Tensor(ext), 0).values.data
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_differentiable(self):
        rng = np.random.default_rng(11)
        costs0 = rng.normal(size=(2, 3, 4))

        def loss(c):
            return T.sum_all(T.square(cv.soft_argmin(c, 0).values))

        assert T.finite_diff_check(loss, Tensor(costs0)) < 1e-6


class TestSampleDisparity:
    def test_degenerate_distribution(self):
        costs = np.zeros((100, 100, 4))
        costs[:, :, 2] = -1000.0
        d = cv.sample_disparity(Tensor(costs), rng_seed=0, level=0).values.data
        assert (d == 2).mean() > 0.999

    def test_uniform_frequencies(self):
        costs = Tensor(np.zeros((100, 100, 4)))
        d = cv.sample_disparity(costs, rng_seed=1, level=0).values.data
        for k in range(4):
            assert (d == k).mean() == pytest.approx(0.25, abs=0.02)

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(12)
        costs = Tensor(rng.normal(size=(8, 8, 5)))
        a = cv.sample_disparity(costs, rng_seed=7, level=0).values.data
        b = cv.sample_disparity(costs, rng_seed=7, level=0).values.data
        np.testing.assert_array_equal(a, b)

    def test_no_tape_pollution(self):
        costs = Tensor(np.zeros((2, 2, 3), dtype=np.float32))
        with Tape() as tape:
            cv.sample_disparity(costs, rng_seed=0, level=0)
        assert len(tape) == 0
