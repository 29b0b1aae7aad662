"""
Affinity, diversity and seed statistics.

affinity   acc(augmented val) − acc(clean val) under a clean-trained recognizer;
           0 means no distribution shift, negative means shift
diversity  validation loss − training loss of a recognizer trained on the
           augmented set, read at its best validation epoch
"""

import math
from typing import Dict, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from data.skeleton import LabeledDataset
from errors import ContractViolation
from recognition.models import Recognizer
from recognition.training import TrainedRecognizer, evaluate


class AffinityDiversityReport(BaseModel):
    affinity: float = Field(allow_inf_nan=False)
    affinity_shift: float = Field(allow_inf_nan=False)
    diversity: float = Field(allow_inf_nan=False)
    accuracy_mean: float
    accuracy_std_error: float = Field(ge=0.0)
    seeds: List[int]
    provenance: Dict[str, str] = {}

    @field_validator("seeds")
    @classmethod
    def _non_empty(cls, seeds):
        if not seeds:
            raise ValueError("a report needs at least one seed")
        return seeds


def affinity(recognizer: Recognizer, clean_val: LabeledDataset, augmented_val: LabeledDataset) -> float:
    """
    acc(augmented_val) − acc(clean_val); higher is better, 0 is no shift.

    Raises:
        ContractViolation: If the two sets disagree on K
    """
    if clean_val.num_classes != augmented_val.num_classes:
        raise ContractViolation(
            f"clean K={clean_val.num_classes} vs augmented K={augmented_val.num_classes}"
        )
    if augmented_val is clean_val:
        return 0.0
    clean = evaluate(recognizer, clean_val).accuracy
    augmented = evaluate(recognizer, augmented_val).accuracy
    return augmented - clean


def diversity(trained: TrainedRecognizer) -> float:
    """Validation minus training loss at the best validation epoch."""
    if not trained.history:
        raise ContractViolation("diversity needs a recorded training history")
    best = trained.best()
    return best.val_loss - best.train_loss


def seed_stats(accuracies: Sequence[float]) -> Tuple[float, float]:
    """
    Mean and standard error (sample std / √n) of per-seed accuracies.

    Raises:
        ContractViolation: If the list is empty
    """
    values = np.asarray(list(accuracies), dtype=np.float64)
    if values.size == 0:
        raise ContractViolation("seed_stats needs at least one accuracy")
    if values.size == 1:
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def build_report(
    affinity_value: float,
    diversity_value: float,
    accuracies: Sequence[float],
    seeds: Sequence[int],
    provenance: Dict[str, str] = None,
) -> AffinityDiversityReport:
    """Bundle the metrics; the clean-minus-augmented orientation is stored as affinity_shift."""
    mean, std_error = seed_stats(accuracies)
    return AffinityDiversityReport(
        affinity=affinity_value,
        affinity_shift=-affinity_value,
        diversity=diversity_value,
        accuracy_mean=mean,
        accuracy_std_error=std_error,
        seeds=list(seeds),
        provenance=provenance or {},
    )
