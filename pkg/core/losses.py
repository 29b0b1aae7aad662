"""
Scalar losses composed from the tape primitives.
"""

import numpy as np

from core.tensor import DiffValue, abs_, as_value, exp, log, log_sum_exp, mean, slice_
from errors import ContractViolation


def sparse_ce_loss(logits: DiffValue, labels: np.ndarray) -> DiffValue:
    """
    Mean over the batch of −log softmax(logits)[label].

    Stabilized by max-subtraction inside log_sum_exp.

    Raises:
        ContractViolation: If a label is outside [0, K)
    """
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ContractViolation(f"logits {logits.shape} vs labels {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ContractViolation(f"labels must lie in [0, {logits.shape[1]})")
    picked = slice_(logits, (np.arange(logits.shape[0]), labels))
    lse = log_sum_exp(logits, axis=1)
    return mean(slice_(lse, (slice(None), 0)) - picked)


def bce_with_logits(logits: DiffValue, target: float) -> DiffValue:
    """
    Binary cross-entropy of σ(logits) against a constant target in {0, 1}.

    Uses max(z, 0) − z·t + log(1 + exp(−|z|)), with max(z, 0) = (z + |z|)/2.
    """
    z = as_value(logits)
    magnitude = abs_(z)
    positive_part = (z + magnitude) * 0.5
    return mean(positive_part - z * float(target) + log(1.0 + exp(-magnitude)))


def l1_loss(prediction: DiffValue, target) -> DiffValue:
    """Mean absolute difference over all elements."""
    return mean(abs_(as_value(prediction) - as_value(target)))
