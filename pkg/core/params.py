"""
Named collections of trainable parameters and their initializers.
"""

from typing import Dict, Iterator, Tuple

import numpy as np

from core.tensor import DiffValue, parameter
from errors import ContractViolation


class ParamSet:
    """name -> trainable DiffValue, plus the seed used to initialize it."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.entries: Dict[str, DiffValue] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __getitem__(self, name: str) -> DiffValue:
        return self.entries[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def items(self) -> Iterator[Tuple[str, DiffValue]]:
        return iter(self.entries.items())

    def add(self, name: str, data: np.ndarray) -> DiffValue:
        if name in self.entries:
            raise ContractViolation(f"duplicate parameter name '{name}'")
        value = parameter(data)
        self.entries[name] = value
        return value

    def scope(self, prefix: str) -> Dict[str, DiffValue]:
        """Entries under 'prefix.' keyed by their short names."""
        head = prefix + "."
        return {name[len(head):]: value for name, value in self.entries.items() if name.startswith(head)}

    def zero_grad(self) -> None:
        for value in self.entries.values():
            value.grad = None

    def num_parameters(self) -> int:
        return sum(value.size for value in self.entries.values())

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: value.data.copy() for name, value in self.entries.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        missing = set(self.entries) ^ set(arrays)
        if missing:
            raise ContractViolation(f"parameter names differ: {sorted(missing)}")
        for name, data in arrays.items():
            if data.shape != self.entries[name].shape:
                raise ContractViolation(
                    f"shape mismatch for '{name}': {data.shape} vs {self.entries[name].shape}"
                )
            self.entries[name].data = np.array(data, dtype=np.float64)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(value.data)) for value in self.entries.values())


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def init_dense(params: ParamSet, prefix: str, n_in: int, n_out: int, rng: np.random.Generator) -> None:
    params.add(f"{prefix}.W", glorot_uniform(rng, n_in, n_out))
    params.add(f"{prefix}.b", np.zeros(n_out))


def init_gru(params: ParamSet, prefix: str, n_in: int, hidden: int, rng: np.random.Generator) -> None:
    for gate in ("z", "r", "h"):
        params.add(f"{prefix}.W_{gate}", glorot_uniform(rng, n_in, hidden))
        params.add(f"{prefix}.U_{gate}", glorot_uniform(rng, hidden, hidden))
        params.add(f"{prefix}.b_{gate}", np.zeros(hidden))


def init_lstm(params: ParamSet, prefix: str, n_in: int, hidden: int, rng: np.random.Generator) -> None:
    for gate in ("i", "f", "o", "g"):
        params.add(f"{prefix}.W_{gate}", glorot_uniform(rng, n_in, hidden))
        params.add(f"{prefix}.U_{gate}", glorot_uniform(rng, hidden, hidden))
        params.add(f"{prefix}.b_{gate}", np.zeros(hidden))


def init_attention(params: ParamSet, prefix: str, hidden: int, attn_dim: int, rng: np.random.Generator) -> None:
    params.add(f"{prefix}.W", glorot_uniform(rng, hidden, attn_dim))
    params.add(f"{prefix}.v", glorot_uniform(rng, attn_dim, 1))


def init_conv(
    params: ParamSet, prefix: str, in_channels: int, filters: int, kernel: Tuple[int, int],
    rng: np.random.Generator,
) -> None:
    kh, kw = kernel
    params.add(
        f"{prefix}.K",
        glorot_uniform(rng, in_channels * kh * kw, filters * kh * kw, shape=(filters, in_channels, kh, kw)),
    )
    params.add(f"{prefix}.b", np.zeros(filters))
