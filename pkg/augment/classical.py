"""
Classical augmentation: scale, shift, time interpolation and joint noise.

Each augmented copy applies the four transforms in that order with fresh
Gaussian draws. Randomness comes from one counter-based stream per source
sample, default_rng([seed, index]), so the output does not depend on how
samples are scheduled.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.interpolate import CubicSpline

import config
from data.skeleton import LabeledDataset, SkeletonSequence
from errors import ContractViolation

logger = logging.getLogger(__name__)


class AugmentPolicy(BaseModel):
    sigma_scale: float = Field(default=0.1, ge=0.0, allow_inf_nan=False)
    sigma_shift: float = Field(default=0.1, ge=0.0, allow_inf_nan=False)
    sigma_noise: float = Field(default=0.1, ge=0.0, allow_inf_nan=False)
    joint_min: int = Field(default=1, ge=1)
    joint_max: int = Field(default=4, ge=1)
    multiplier: int = Field(default=config.AUG_MULTIPLIER, ge=1)
    seed: int = 0
    interpolate: bool = True
    pin_knots: bool = False
    include_originals: bool = False

    @model_validator(mode="after")
    def _check_joint_range(self):
        if self.joint_min > self.joint_max:
            raise ValueError(f"joint range {self.joint_min}:{self.joint_max} is empty")
        return self

    @property
    def joint_range(self) -> Tuple[int, int]:
        return self.joint_min, self.joint_max


def default_joint_range(dataset_name: str) -> Tuple[int, int]:
    """1–8 joints for SHREC'17, 1–4 for MSR Action3D and anything else."""
    if dataset_name.startswith("shrec"):
        return config.SHREC_NOISE_JOINTS
    return config.MSR_NOISE_JOINTS


def sample_scale(policy: AugmentPolicy, rng: np.random.Generator, size=None):
    return rng.normal(1.0, policy.sigma_scale, size=size)


def sample_shift(policy: AugmentPolicy, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, policy.sigma_shift, size=3)


def scale(seq: SkeletonSequence, s: float) -> SkeletonSequence:
    """Multiply every coordinate by s."""
    return seq.with_frames(seq.frames * s)


def shift(seq: SkeletonSequence, d: np.ndarray) -> SkeletonSequence:
    """Add the displacement (dx, dy, dz) to every joint at every frame."""
    d = np.asarray(d, dtype=np.float64).reshape(1, 1, 3)
    return seq.with_frames((seq.joints() + d).reshape(seq.frames.shape))


def time_interpolate(
    seq: SkeletonSequence, rng: np.random.Generator, positions: Optional[np.ndarray] = None
) -> SkeletonSequence:
    """
    Resample the sequence with a natural cubic spline at sorted uniform positions.

    positions overrides the random draw. Sequences shorter than 4 frames are
    returned unchanged with a warning.
    """
    length = seq.length
    if length < 4:
        logger.warning("Skipping time interpolation for '%s': %d frames < 4", seq.source, length)
        return seq
    if positions is None:
        positions = np.sort(rng.uniform(0.0, length - 1, size=length))
    positions = np.asarray(positions, dtype=np.float64)
    knots = np.arange(length, dtype=np.float64)
    resampled = CubicSpline(knots, seq.frames, axis=0, bc_type="natural")(positions)
    on_knot = np.isclose(positions, np.round(positions), rtol=0.0, atol=0.0)
    resampled[on_knot] = seq.frames[np.round(positions[on_knot]).astype(int)]
    return seq.with_frames(resampled)


def joint_noise(seq: SkeletonSequence, policy: AugmentPolicy, rng: np.random.Generator) -> SkeletonSequence:
    """
    Offset a random subset of joints by one constant Gaussian 3-vector each.

    The count is uniform over policy.joint_range; the offset is the same at
    every frame.
    """
    joints = seq.joint_count
    if policy.joint_max > joints:
        raise ContractViolation(f"joint range {policy.joint_range} exceeds J={joints}")
    count = int(rng.integers(policy.joint_min, policy.joint_max + 1))
    chosen = rng.choice(joints, size=count, replace=False)
    offsets = np.zeros((joints, 3))
    offsets[chosen] = rng.normal(0.0, policy.sigma_noise, size=(count, 3))
    return seq.with_frames((seq.joints() + offsets[None, :, :]).reshape(seq.frames.shape))


def augment_sample(
    seq: SkeletonSequence, policy: AugmentPolicy, rng: np.random.Generator, copy_index: int
) -> SkeletonSequence:
    """scale → shift → time_interpolate → joint_noise with fresh draws."""
    out = scale(seq, sample_scale(policy, rng))
    out = shift(out, sample_shift(policy, rng))
    if policy.interpolate:
        pinned = np.arange(seq.length, dtype=np.float64) if policy.pin_knots else None
        out = time_interpolate(out, rng, positions=pinned)
    out = joint_noise(out, policy, rng)
    return out.with_frames(out.frames, source=f"{seq.source}#aug{copy_index}")


def augment_dataset(dataset: LabeledDataset, policy: AugmentPolicy) -> LabeledDataset:
    """
    Emit policy.multiplier augmented copies of every sample (originals excluded
    unless policy.include_originals).

    Raises:
        ContractViolation: If the policy's joint range does not fit the dataset
    """
    if policy.joint_max > dataset.num_joints:
        raise ContractViolation(f"joint range {policy.joint_range} exceeds J={dataset.num_joints}")
    samples = []
    for index, seq in enumerate(dataset):
        rng = np.random.default_rng([policy.seed, index])
        if policy.include_originals:
            samples.append(seq)
        for copy_index in range(policy.multiplier):
            samples.append(augment_sample(seq, policy, rng, copy_index))
    logger.info("✓ Augmented %d samples into %d", len(dataset), len(samples))
    return dataset.with_samples(samples, name=f"{dataset.name}-cad")
