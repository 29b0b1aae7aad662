"""
Desk-scale toy dataset: planar sinusoid trajectories embedded as skeletons.

Class 0 traces a circle, class 1 a 1:2 Lissajous figure, class 2 a tilted
line oscillation. Each sample draws its own amplitude, phase and speed.
Two joints × (x, y, z) give six channels, all of them moving.
"""

from typing import Tuple

import numpy as np

from data.skeleton import LabeledDataset, from_arrays

TOY_CLASSES = 3
TOY_LENGTH = 40


def _trajectory(label: int, t: np.ndarray, amplitude: float, phase: float, speed: float) -> np.ndarray:
    angle = speed * t + phase
    if label == 0:
        x, y = np.cos(angle), np.sin(angle)
    elif label == 1:
        x, y = np.sin(angle), np.sin(2.0 * angle)
    else:
        x, y = np.sin(angle), 0.5 * np.sin(angle)
    x, y = amplitude * x, amplitude * y
    joint0 = np.stack([x, y, 0.5 * y], axis=1)
    joint1 = np.stack([0.5 * x + 1.0, 0.5 * y - 1.0, 0.25 * x], axis=1)
    return np.concatenate([joint0, joint1], axis=1)


def make_toy_dataset(
    n_per_class: int = 20,
    length: int = TOY_LENGTH,
    seed: int = 0,
    num_classes: int = TOY_CLASSES,
    jitter: float = 0.01,
    name: str = "toy",
) -> LabeledDataset:
    """n_per_class sequences of each class, T = length, J = 2."""
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    frames, labels, subjects = [], [], []
    for label in range(num_classes):
        for i in range(n_per_class):
            amplitude = rng.uniform(0.8, 1.2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            speed = 2.0 * np.pi / length * rng.uniform(0.8, 1.2)
            path = _trajectory(label % 3, t, amplitude, phase, speed)
            frames.append(path + rng.normal(0.0, jitter, size=path.shape))
            labels.append(label)
            subjects.append(i % 10 + 1)
    return from_arrays(np.array(frames), labels, num_classes, name, subjects=subjects, source_prefix=f"{name}:")


def make_toy_split(
    n_per_class: int = 20, length: int = TOY_LENGTH, seed: int = 0
) -> Tuple[LabeledDataset, LabeledDataset]:
    """Independent train and validation draws (60 / 60 samples by default)."""
    train = make_toy_dataset(n_per_class, length, seed=seed, name="toy-train")
    val = make_toy_dataset(n_per_class, length, seed=seed + 1_000_003, name="toy-val")
    return train, val
