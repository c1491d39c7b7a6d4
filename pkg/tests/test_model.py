import json

import numpy as np
import pytest

from elimbandits.model import (BanditInstance, RngStream, Statistics,
                               sample_reward, unstructured_instance)


class ZeroRng:
    """Noise stub: forces z = 0."""

    def normal(self):
        return 0.0


def two_arm_instance():
    return BanditInstance(np.eye(2), np.array([1.0, 0.5]), "linear")


class TestSampleReward:
    def test_zero_noise_mean(self):
        inst = BanditInstance(np.array([[1.0, 0.0], [0.0, 1.0]]),
                              np.array([1.0, 0.0]))
        assert sample_reward(inst, 0, ZeroRng()) == 1.0

    def test_worked_example_second_arm_mean(self):
        # theta = (1, 1 - eps) with eps = 0.2, phi_2 = (0, 1)
        inst = BanditInstance(np.array([[1.0, 0.0], [0.0, 1.0]]),
                              np.array([1.0, 0.8]))
        assert sample_reward(inst, 1, ZeroRng()) == pytest.approx(0.8)

    def test_law_of_large_numbers(self):
        inst = BanditInstance(np.array([[1.0], [0.0]]), np.array([0.0]))
        rng = RngStream(12345)
        draws = np.array([sample_reward(inst, 0, rng) for _ in range(100_000)])
        assert -0.02 <= draws.mean() <= 0.02
        assert 0.97 <= draws.var() <= 1.03

    def test_index_out_of_range(self):
        inst = two_arm_instance()
        with pytest.raises(IndexError):
            sample_reward(inst, 2, ZeroRng())
        with pytest.raises(IndexError):
            sample_reward(inst, -1, ZeroRng())


class TestUpdate:
    def test_single_pull(self):
        stats = Statistics(two_arm_instance())
        stats.update(0, 0.7)
        assert stats.t == 1
        assert stats.counts.tolist() == [1, 0]
        np.testing.assert_allclose(stats.design, np.diag([1.0, 0.0]))
        np.testing.assert_allclose(stats.response, [0.7, 0.0])

    def test_two_pulls_identity_design(self):
        stats = Statistics(two_arm_instance())
        stats.update(0, 1.0).update(1, 0.5)
        np.testing.assert_allclose(stats.design, np.eye(2))
        np.testing.assert_allclose(stats.response, [1.0, 0.5])

    def test_counts_sum_to_t_random_trajectory(self):
        rng = np.random.default_rng(0)
        feats = rng.normal(size=(6, 3))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        inst = BanditInstance(feats, rng.normal(size=3))
        stats = Statistics(inst)
        pulls = rng.integers(0, 6, 1000)
        for k in pulls:
            stats.update(int(k), float(rng.normal()))
        assert stats.t == 1000
        assert stats.counts.sum() == 1000
        expected = np.bincount(pulls, minlength=6)
        assert stats.counts.tolist() == expected.tolist()

    def test_design_reconstruction_after_1e4_updates(self):
        rng = np.random.default_rng(1)
        feats = rng.normal(size=(5, 3))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        inst = BanditInstance(feats, np.zeros(3))
        stats = Statistics(inst)
        for _ in range(10_000):
            stats.update(int(rng.integers(5)), float(rng.normal()))
        oracle = np.tensordot(stats.counts.astype(float),
                              feats[:, :, None] * feats[:, None, :], axes=1)
        assert np.max(np.abs(stats.design - oracle)) <= 1e-12


class TestEstimate:
    def test_identity_design(self):
        stats = Statistics(two_arm_instance())
        stats.update(0, 1.0).update(1, 0.5)
        np.testing.assert_allclose(stats.theta_hat, [1.0, 0.5], atol=1e-6)

    def test_zero_observations(self):
        stats = Statistics(two_arm_instance())
        np.testing.assert_array_equal(stats.theta_hat, [0.0, 0.0])

    def test_matches_dense_solve(self):
        rng = np.random.default_rng(2)
        feats = rng.normal(size=(8, 4))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        inst = BanditInstance(feats, rng.normal(size=4))
        stats = Statistics(inst)
        for _ in range(20):
            stats.update(int(rng.integers(8)), float(rng.normal()))
        ref = np.linalg.solve(stats.design + 1e-8 * np.eye(4), stats.response)
        err = np.max(np.abs(stats.theta_hat - ref)) / max(1.0, np.max(np.abs(ref)))
        assert err <= 1e-8

    def test_unstructured_matches_empirical_means(self):
        inst = unstructured_instance([0.3, -0.2, 0.5])
        stats = Statistics(inst)
        rng = np.random.default_rng(3)
        for _ in range(200):
            k = int(rng.integers(3))
            stats.update(k, float(rng.normal()))
        np.testing.assert_allclose(stats.theta_hat, stats.emp_means, atol=1e-6)


class TestLlr:
    def test_zero_at_estimate(self):
        stats = Statistics(two_arm_instance())
        stats.update(0, 1.0).update(1, 0.5)
        assert stats.llr_to(stats.theta_hat) == 0.0

    def test_identity_design_quadratic(self):
        stats = Statistics(two_arm_instance())
        stats.update(0, 1.0).update(1, 0.5)
        lam = np.array([0.75, 0.75])
        # theta_hat ~ (1, .5); 0.5 * (0.25^2 + 0.25^2) = 0.0625
        assert stats.llr_to(lam) == pytest.approx(0.0625, abs=1e-6)

    def test_doubling_counts_doubles_value(self):
        rng = np.random.default_rng(4)
        feats = rng.normal(size=(4, 2))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        inst = BanditInstance(feats, rng.normal(size=2))
        counts = np.array([3, 5, 2, 7])
        sums = counts * (feats @ inst.theta)
        single = Statistics.from_pull_data(inst, counts, sums)
        double = Statistics.from_pull_data(inst, 2 * counts, 2 * sums)
        lam = rng.normal(size=2)
        assert double.llr_to(lam) == pytest.approx(2 * single.llr_to(lam), rel=1e-12)

    def test_equals_count_weighted_kl_sum(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            K, d = int(rng.integers(3, 7)), int(rng.integers(2, 5))
            feats = rng.normal(size=(K, d))
            feats /= np.linalg.norm(feats, axis=1, keepdims=True)
            inst = BanditInstance(feats, rng.normal(size=d))
            counts = rng.integers(0, 20, K)
            sums = counts * (feats @ inst.theta) + rng.normal(size=K)
            stats = Statistics.from_pull_data(inst, counts, sums)
            lam = rng.normal(size=d)
            gaps = feats @ stats.theta_hat - feats @ lam
            by_arms = 0.5 * float(counts @ (gaps * gaps))
            assert stats.llr_to(lam) == pytest.approx(by_arms, abs=1e-9, rel=1e-9)


class TestRngStream:
    def test_same_seed_same_sequence(self):
        a = RngStream(99)
        b = RngStream(99)
        xs = [a.normal() for _ in range(50)]
        ys = [b.normal() for _ in range(50)]
        assert xs == ys
        assert a.n_draws == 50


class TestSerialization:
    def test_round_trip(self):
        inst = unstructured_instance([0.1, -0.25, 1.0 / 3.0])
        text = inst.to_json()
        back = BanditInstance.from_json(text)
        assert back.structure == inst.structure
        np.testing.assert_array_equal(back.features, inst.features)
        np.testing.assert_array_equal(back.theta, inst.theta)

    def test_canonical_field_order(self):
        inst = two_arm_instance()
        keys = list(json.loads(inst.to_json()).keys())
        assert keys == ["K", "d", "structure", "features", "theta"]

    def test_unstructured_requires_basis(self):
        with pytest.raises(ValueError):
            BanditInstance(np.array([[1.0, 0.0], [1.0, 1.0]]),
                           np.array([0.0, 0.0]), "unstructured")
