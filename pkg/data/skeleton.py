"""
Skeleton sequence containers.

A SkeletonSequence is one motion sample: T frames of J joints × (x, y, z),
stored flat as a T × (J·3) float array. A LabeledDataset is an immutable
collection of sequences sharing J (and, once padded, T).
"""

import hashlib
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import ContractViolation


@dataclass(frozen=True, eq=False)
class SkeletonSequence:
    frames: np.ndarray
    label: int
    subject: int
    source: str = ""
    original_length: Optional[int] = None
    key: str = ""

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] % 3 != 0:
            raise ContractViolation(f"frames must be T × (J·3) with T ≥ 1, got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ContractViolation(f"non-finite coordinates in sequence '{self.source}'")
        if self.label < 0:
            raise ContractViolation(f"negative label {self.label}")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        if self.original_length is None:
            object.__setattr__(self, "original_length", frames.shape[0])

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    @property
    def joint_count(self) -> int:
        return self.frames.shape[1] // 3

    def joints(self) -> np.ndarray:
        """Frames viewed as T × J × 3."""
        return self.frames.reshape(self.length, self.joint_count, 3)

    def with_frames(self, frames: np.ndarray, **changes) -> "SkeletonSequence":
        return replace(self, frames=frames, **changes)

    def checksum(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.frames, dtype="<f8").tobytes())
        digest.update(f"{self.label}|{self.subject}|{self.original_length}".encode("utf-8"))
        return digest.hexdigest()


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    samples: Tuple[SkeletonSequence, ...]
    num_classes: int
    num_joints: int
    name: str = "dataset"
    length: Optional[int] = field(default=None)

    def __post_init__(self):
        samples = tuple(self.samples)
        object.__setattr__(self, "samples", samples)
        if self.num_classes < 2:
            raise ContractViolation(f"a dataset needs K ≥ 2 classes, got {self.num_classes}")
        for sample in samples:
            if sample.joint_count != self.num_joints:
                raise ContractViolation(
                    f"sample '{sample.source}' has {sample.joint_count} joints, dataset has {self.num_joints}"
                )
            if sample.label >= self.num_classes:
                raise ContractViolation(f"label {sample.label} outside [0, {self.num_classes})")
        lengths = {sample.length for sample in samples}
        if self.length is None and len(lengths) == 1:
            object.__setattr__(self, "length", lengths.pop())
        elif self.length is not None and lengths and lengths != {self.length}:
            raise ContractViolation(f"dataset declares T={self.length} but holds lengths {sorted(lengths)}")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, index: int) -> SkeletonSequence:
        return self.samples[index]

    @property
    def is_uniform(self) -> bool:
        return self.length is not None

    @property
    def width(self) -> int:
        return self.num_joints * 3

    def frames_array(self) -> np.ndarray:
        """All frames stacked as N × T × (J·3); needs a uniform length."""
        if not self.is_uniform:
            raise ContractViolation(f"dataset '{self.name}' has mixed lengths; pad it first")
        if not self.samples:
            return np.zeros((0, self.length or 0, self.width))
        return np.stack([sample.frames for sample in self.samples])

    def labels(self) -> np.ndarray:
        return np.array([sample.label for sample in self.samples], dtype=np.int64)

    def subjects(self) -> np.ndarray:
        return np.array([sample.subject for sample in self.samples], dtype=np.int64)

    def class_counts(self) -> Dict[int, int]:
        counts: Dict[int, int] = {}
        for sample in self.samples:
            counts[sample.label] = counts.get(sample.label, 0) + 1
        return counts

    def subset(self, indices: Sequence[int], name: Optional[str] = None) -> "LabeledDataset":
        return self.with_samples([self.samples[i] for i in indices], name=name)

    def with_samples(self, samples: Sequence[SkeletonSequence], name: Optional[str] = None) -> "LabeledDataset":
        lengths = {sample.length for sample in samples}
        return LabeledDataset(
            samples=tuple(samples),
            num_classes=self.num_classes,
            num_joints=self.num_joints,
            name=name or self.name,
            length=lengths.pop() if len(lengths) == 1 else None,
        )

    def filter_classes(self, keep: Sequence[int], name: Optional[str] = None) -> "LabeledDataset":
        keep = set(keep)
        return self.with_samples([s for s in self.samples if s.label in keep], name=name)

    def sample_checksums(self) -> List[str]:
        return [sample.checksum() for sample in self.samples]

    def checksum(self) -> str:
        digest = hashlib.sha256(f"{self.name}|{self.num_classes}|{self.num_joints}".encode("utf-8"))
        for value in self.sample_checksums():
            digest.update(value.encode("ascii"))
        return digest.hexdigest()


def from_arrays(
    frames: np.ndarray,
    labels: Sequence[int],
    num_classes: int,
    name: str,
    subjects: Optional[Sequence[int]] = None,
    source_prefix: str = "",
) -> LabeledDataset:
    """Build a uniform-length dataset from an N × T × (J·3) array."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3:
        raise ContractViolation(f"expected N × T × (J·3) frames, got {frames.shape}")
    subjects = subjects if subjects is not None else [0] * len(frames)
    samples = [
        SkeletonSequence(
            frames=frames[i],
            label=int(labels[i]),
            subject=int(subjects[i]),
            source=f"{source_prefix}{i}",
        )
        for i in range(len(frames))
    ]
    return LabeledDataset(
        samples=tuple(samples),
        num_classes=num_classes,
        num_joints=frames.shape[2] // 3,
        name=name,
        length=frames.shape[1] if len(frames) else None,
    )
