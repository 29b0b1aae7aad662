import numpy as np
import pytest
from pydantic import ValidationError

from augment.classical import (
    AugmentPolicy,
    augment_dataset,
    default_joint_range,
    joint_noise,
    sample_scale,
    sample_shift,
    scale,
    shift,
    time_interpolate,
)
from data.skeleton import SkeletonSequence
from errors import ContractViolation


@pytest.fixture
def sequence():
    frames = np.random.default_rng(0).normal(size=(10, 9))
    return SkeletonSequence(frames=frames, label=1, subject=2, source="seq")


class TestTransforms:
    def test_scale(self, sequence):
        np.testing.assert_array_equal(scale(sequence, 2.0).frames, sequence.frames * 2.0)

    def test_shift_moves_every_joint(self, sequence):
        moved = shift(sequence, [1.0, -2.0, 0.5])
        delta = moved.joints() - sequence.joints()
        np.testing.assert_allclose(delta, np.broadcast_to([1.0, -2.0, 0.5], delta.shape))

    def test_interpolation_at_knots_is_exact(self, sequence):
        out = time_interpolate(sequence, np.random.default_rng(0), positions=np.arange(10.0))
        np.testing.assert_array_equal(out.frames, sequence.frames)

    def test_interpolation_reproduces_linear_motion(self):
        t = np.arange(8, dtype=np.float64)[:, None]
        seq = SkeletonSequence(frames=t * np.array([[1.0, 2.0, -1.0]]) + 3.0, label=0, subject=1)
        out = time_interpolate(seq, np.random.default_rng(5))
        assert out.length == 8
        ratios = (out.frames - 3.0) / np.array([1.0, 2.0, -1.0])
        np.testing.assert_allclose(ratios[:, 0], ratios[:, 1])
        assert np.all(np.diff(ratios[:, 0]) >= 0)
        assert ratios[0, 0] >= 0 and ratios[-1, 0] <= 7

    def test_interpolation_of_a_cubic_matches_natural_spline(self):
        t = np.arange(8, dtype=np.float64)
        cubic = t ** 3
        seq = SkeletonSequence(frames=np.stack([cubic, -cubic, 0.5 * cubic], axis=1), label=0, subject=1)

        # Natural spline on unit knots: M_{i-1} + 4 M_i + M_{i+1} = 6 Δ²y_i with M_0 = M_n = 0.
        inner = len(t) - 2
        system = 4.0 * np.eye(inner) + np.eye(inner, k=1) + np.eye(inner, k=-1)
        curvature = np.zeros(len(t))
        curvature[1:-1] = np.linalg.solve(system, 6.0 * np.diff(cubic, 2))

        positions = np.array([0.5, 1.5, 2.5, 3.25, 3.5, 4.5, 5.5, 6.5])
        left = np.floor(positions).astype(int)
        u = positions - left
        expected = (
            (1.0 - u) * cubic[left]
            + u * cubic[left + 1]
            + ((1.0 - u) ** 3 - (1.0 - u)) * curvature[left] / 6.0
            + (u ** 3 - u) * curvature[left + 1] / 6.0
        )

        out = time_interpolate(seq, np.random.default_rng(0), positions=positions)
        np.testing.assert_allclose(out.frames[:, 0], expected, rtol=0.0, atol=1e-10)
        np.testing.assert_allclose(out.frames[:, 1], -expected, rtol=0.0, atol=1e-10)

    def test_short_sequences_are_left_alone(self):
        seq = SkeletonSequence(frames=np.ones((3, 3)), label=0, subject=1)
        assert time_interpolate(seq, np.random.default_rng(0)) is seq

    def test_joint_noise_is_constant_per_joint(self, sequence):
        policy = AugmentPolicy(sigma_noise=1.0, joint_min=2, joint_max=2)
        out = joint_noise(sequence, policy, np.random.default_rng(1))
        delta = out.joints() - sequence.joints()
        moved = np.flatnonzero(np.any(delta[0] != 0.0, axis=1))
        assert len(moved) == 2
        np.testing.assert_allclose(delta, np.broadcast_to(delta[0], delta.shape), atol=1e-12)

    def test_joint_noise_range_must_fit(self, sequence):
        with pytest.raises(ContractViolation):
            joint_noise(sequence, AugmentPolicy(joint_min=1, joint_max=4), np.random.default_rng(0))


class TestSamplers:
    def test_scale_moments(self):
        draws = sample_scale(AugmentPolicy(sigma_scale=0.2), np.random.default_rng(0), size=100_000)
        assert abs(draws.mean() - 1.0) < 4 * 0.2 / np.sqrt(draws.size)
        assert draws.std() == pytest.approx(0.2, rel=0.01)

    def test_shift_moments(self):
        policy = AugmentPolicy(sigma_shift=0.5)
        rng = np.random.default_rng(1)
        draws = np.stack([sample_shift(policy, rng) for _ in range(20_000)])
        assert np.all(np.abs(draws.mean(axis=0)) < 4 * 0.5 / np.sqrt(len(draws)))
        np.testing.assert_allclose(draws.std(axis=0), 0.5, rtol=0.03)


class TestPolicy:
    def test_empty_joint_range(self):
        with pytest.raises(ValidationError):
            AugmentPolicy(joint_min=5, joint_max=2)

    @pytest.mark.parametrize("sigma", [-0.1, float("inf"), float("nan")])
    def test_sigma_must_be_finite_and_non_negative(self, sigma):
        with pytest.raises(ValidationError):
            AugmentPolicy(sigma_scale=sigma)

    def test_default_joint_ranges(self):
        assert default_joint_range("shrec17-14-clean") == (1, 8)
        assert default_joint_range("msr3d-clean") == (1, 4)


class TestAugmentDataset:
    def test_counts_labels_and_names(self, toy_dataset):
        policy = AugmentPolicy(joint_min=1, joint_max=2, multiplier=3, seed=1)
        augmented = augment_dataset(toy_dataset, policy)
        assert len(augmented) == 3 * len(toy_dataset)
        assert augmented.name == "toy-clean-cad"
        assert list(augmented.labels()) == [s.label for s in toy_dataset for _ in range(3)]
        assert augmented[1].source.endswith("#aug1")
        assert augmented.length == toy_dataset.length

    def test_include_originals(self, toy_dataset):
        policy = AugmentPolicy(joint_min=1, joint_max=2, multiplier=2, include_originals=True)
        augmented = augment_dataset(toy_dataset, policy)
        assert len(augmented) == 3 * len(toy_dataset)
        assert augmented[0] is toy_dataset[0]

    def test_reproducible_per_seed(self, toy_dataset):
        policy = AugmentPolicy(joint_min=1, joint_max=2, seed=3)
        first = augment_dataset(toy_dataset, policy)
        second = augment_dataset(toy_dataset, policy)
        other = augment_dataset(toy_dataset, policy.model_copy(update={"seed": 4}))
        assert first.checksum() == second.checksum()
        assert first.checksum() != other.checksum()

    def test_streams_are_per_sample(self, toy_dataset):
        policy = AugmentPolicy(joint_min=1, joint_max=2, multiplier=2, seed=3)
        full = augment_dataset(toy_dataset, policy)
        head = augment_dataset(toy_dataset.subset([0, 1]), policy)
        assert full.sample_checksums()[:4] == head.sample_checksums()

    def test_zero_sigmas_with_pinned_knots_are_identity(self, toy_dataset):
        policy = AugmentPolicy(
            sigma_scale=0.0, sigma_shift=0.0, sigma_noise=0.0, joint_min=1, joint_max=2,
            multiplier=1, pin_knots=True,
        )
        augmented = augment_dataset(toy_dataset, policy)
        for original, copy in zip(toy_dataset, augmented):
            np.testing.assert_array_equal(copy.frames, original.frames)

    def test_joint_range_beyond_dataset(self, toy_dataset):
        with pytest.raises(ContractViolation):
            augment_dataset(toy_dataset, AugmentPolicy(joint_min=1, joint_max=8))
