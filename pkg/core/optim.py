"""
Adam optimizer over a ParamSet.
"""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from core.params import ParamSet
from errors import ContractViolation


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ParamSet, state: AdamState) -> None:
    """
    One bias-corrected Adam update, in place; gradients are cleared afterwards.

    Raises:
        ContractViolation: If any parameter has no gradient
    """
    missing = [name for name, value in params.items() if value.grad is None]
    if missing:
        raise ContractViolation(f"parameters without gradient: {missing}")

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for name, value in params.items():
        grad = value.grad
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(value.data)
            v = np.zeros_like(value.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name], state.v[name] = m, v
        value.data = value.data - state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    params.zero_grad()
