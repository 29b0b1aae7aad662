"""
Central finite-difference gradient checks.
"""

from typing import Callable, Dict

import numpy as np

from core.tensor import DiffValue


def numerical_gradient(loss_fn: Callable[[], DiffValue], value: DiffValue, h: float = 1e-5) -> np.ndarray:
    """d loss / d value by central differences, perturbing value.data in place."""
    grad = np.zeros_like(value.data)
    flat = value.data.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        upper = loss_fn().item()
        flat[i] = original - h
        lower = loss_fn().item()
        flat[i] = original
        grad.reshape(-1)[i] = (upper - lower) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """‖a − n‖∞ / max(‖a‖∞, ‖n‖∞), floored to avoid dividing by zero."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def check_gradients(
    loss_fn: Callable[[], DiffValue], values: Dict[str, DiffValue], h: float = 1e-5
) -> Dict[str, float]:
    """Relative error of the tape gradient for each named value."""
    loss = loss_fn()
    loss.backward()
    analytic = {name: value.grad.copy() for name, value in values.items()}
    return {
        name: relative_error(analytic[name], numerical_gradient(loss_fn, value, h))
        for name, value in values.items()
    }
