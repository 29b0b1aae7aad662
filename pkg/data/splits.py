"""
Train/validation splits.

Three modes:
    predefined  SHREC'17 list files decide membership (by sample key)
    subject     listed subjects train, the rest validate (default: odd subjects train)
    ratio       seeded random fraction trains
"""

import os
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from data.loaders import read_shrec_list, shrec_key
from data.skeleton import LabeledDataset
from errors import SplitError


class SplitSpec(BaseModel):
    mode: Literal["predefined", "subject", "ratio"] = "subject"
    train_list: Optional[str] = None
    val_list: Optional[str] = None
    train_subjects: Optional[List[int]] = None
    ratio: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_mode_parameters(self):
        if self.mode == "predefined" and not (self.train_list and self.val_list):
            raise ValueError("predefined split needs train_list and val_list")
        if self.mode == "ratio" and self.ratio is None:
            raise ValueError("ratio split needs 0 < ratio < 1")
        return self


def _predefined(dataset: LabeledDataset, spec: SplitSpec) -> Tuple[List[int], List[int]]:
    for path in (spec.train_list, spec.val_list):
        if not os.path.isfile(path):
            raise SplitError(f"Missing split list file: {path}")
    train_keys = {shrec_key(*row[:4]) for row in read_shrec_list(spec.train_list)}
    val_keys = {shrec_key(*row[:4]) for row in read_shrec_list(spec.val_list)}
    overlap = train_keys & val_keys
    if overlap:
        raise SplitError(f"{len(overlap)} samples appear in both list files")
    train, val, unassigned = [], [], []
    for index, sample in enumerate(dataset):
        if sample.key in train_keys:
            train.append(index)
        elif sample.key in val_keys:
            val.append(index)
        else:
            unassigned.append(sample.key or sample.source)
    if unassigned:
        raise SplitError(f"{len(unassigned)} samples are in neither list file, e.g. {unassigned[0]}")
    return train, val


def _by_subject(dataset: LabeledDataset, spec: SplitSpec) -> Tuple[List[int], List[int]]:
    present = set(int(s) for s in dataset.subjects())
    if spec.train_subjects is None:
        train_subjects = {s for s in present if s % 2 == 1}
    else:
        train_subjects = set(spec.train_subjects)
        unknown = train_subjects - present
        if unknown:
            raise SplitError(f"Unknown subjects in split: {sorted(unknown)}")
    train = [i for i, sample in enumerate(dataset) if sample.subject in train_subjects]
    val = [i for i, sample in enumerate(dataset) if sample.subject not in train_subjects]
    return train, val


def _by_ratio(dataset: LabeledDataset, spec: SplitSpec) -> Tuple[List[int], List[int]]:
    order = np.random.default_rng(spec.seed).permutation(len(dataset))
    cut = int(round(spec.ratio * len(dataset)))
    return sorted(order[:cut].tolist()), sorted(order[cut:].tolist())


def split(dataset: LabeledDataset, spec: SplitSpec) -> Tuple[LabeledDataset, LabeledDataset]:
    """
    Partition a dataset into disjoint, covering (train, validation) sets.

    Raises:
        SplitError: If the spec cannot be applied or a side comes out empty
    """
    if spec.mode == "predefined":
        train, val = _predefined(dataset, spec)
    elif spec.mode == "subject":
        train, val = _by_subject(dataset, spec)
    else:
        train, val = _by_ratio(dataset, spec)
    if not train or not val:
        raise SplitError(f"{spec.mode} split leaves an empty side ({len(train)} train / {len(val)} val)")
    return (
        dataset.subset(train, name=f"{dataset.name}-train"),
        dataset.subset(val, name=f"{dataset.name}-val"),
    )
