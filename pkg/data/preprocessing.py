"""
Clean-data preparation: Savitzky–Golay smoothing followed by last-row padding.
"""

import logging
from typing import Optional

import numpy as np
from scipy import signal

import config
from data.skeleton import LabeledDataset, SkeletonSequence
from errors import ContractViolation

logger = logging.getLogger(__name__)


def _fit_weights(offsets: np.ndarray, order: int) -> np.ndarray:
    """Least-squares weights returning the fitted polynomial's value at offset 0."""
    vander = np.vander(offsets.astype(np.float64), order + 1, increasing=True)
    return np.linalg.pinv(vander)[0]


def savgol_coefficients(window: int, order: int) -> np.ndarray:
    """Central smoothing coefficients for an odd window."""
    return signal.savgol_coeffs(window, order, use="dot")


def savgol_matrix(length: int, window: int, order: int) -> np.ndarray:
    """
    T × T smoothing operator.

    Interior rows hold the central coefficients; near the edges the
    polynomial is fitted on the truncated window that is actually available.
    """
    half = window // 2
    central = savgol_coefficients(window, order) if window <= length else None
    matrix = np.zeros((length, length))
    for i in range(length):
        lo, hi = max(0, i - half), min(length - 1, i + half)
        span = hi - lo + 1
        if span == window and central is not None:
            matrix[i, lo:hi + 1] = central
        else:
            matrix[i, lo:hi + 1] = _fit_weights(np.arange(lo, hi + 1) - i, min(order, span - 1))
    return matrix


def savgol_smooth(
    seq: SkeletonSequence, window: int = config.SAVGOL_WINDOW, order: int = config.SAVGOL_ORDER
) -> SkeletonSequence:
    """
    Smooth every coordinate channel independently over time.

    Raises:
        ContractViolation: If window is even, order ≥ window, or window ≥ 2T
    """
    if window < 1 or window % 2 == 0:
        raise ContractViolation(f"window must be a positive odd integer, got {window}")
    if order < 0 or order >= window:
        raise ContractViolation(f"order must satisfy 0 ≤ order < window, got {order}")
    if window >= 2 * seq.length:
        raise ContractViolation(f"window {window} too long for a sequence of {seq.length} frames")
    smoothed = savgol_matrix(seq.length, window, order) @ seq.frames
    return seq.with_frames(smoothed)


def pad_last_row(seq: SkeletonSequence, target_length: int) -> SkeletonSequence:
    """
    Repeat the last frame until the sequence has target_length frames.

    Raises:
        ContractViolation: If target_length is shorter than the sequence
    """
    if target_length < seq.length:
        raise ContractViolation(f"cannot pad {seq.length} frames down to {target_length}")
    if target_length == seq.length:
        return seq
    tail = np.repeat(seq.frames[-1:], target_length - seq.length, axis=0)
    return seq.with_frames(np.vstack([seq.frames, tail]), original_length=seq.original_length)


def smooth_dataset(
    dataset: LabeledDataset, window: int = config.SAVGOL_WINDOW, order: int = config.SAVGOL_ORDER
) -> LabeledDataset:
    return dataset.with_samples([savgol_smooth(sample, window, order) for sample in dataset])


def pad_dataset(dataset: LabeledDataset, target_length: Optional[int] = None) -> LabeledDataset:
    """Pad every sample to target_length (default: the longest sample)."""
    if not len(dataset):
        return dataset
    target = target_length or max(sample.length for sample in dataset)
    return dataset.with_samples([pad_last_row(sample, target) for sample in dataset])


def prepare_clean(
    dataset: LabeledDataset,
    window: int = config.SAVGOL_WINDOW,
    order: int = config.SAVGOL_ORDER,
    target_length: Optional[int] = None,
) -> LabeledDataset:
    """Smooth first, then pad: the clean data (CD) pipeline."""
    clean = pad_dataset(smooth_dataset(dataset, window, order), target_length)
    logger.info("✓ Prepared %d clean sequences (T=%s)", len(clean), clean.length)
    return clean.with_samples(list(clean.samples), name=f"{dataset.name}-clean")
