"""
The two recognizers used to score augmented data.

    lstm  LSTM over frames → self-attention → dense latent (tanh) → dense K
    cnn   1×T×(J·3) image → [conv 3×3 → relu → pool-2 over time] × 2 → flatten
          → dense latent (tanh) → dense K

The latent layer (512 wide by default) is the one exported for embeddings.
"""

from typing import Literal, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

import config
from core.layers import (
    conv2d_forward,
    dense_forward,
    flatten,
    max_pool_time,
    run_sequence,
    self_attention_forward,
    time_steps,
)
from core.params import ParamSet, init_attention, init_conv, init_dense, init_lstm
from core.tensor import DiffValue, as_value, relu, reshape
from errors import ContractViolation


class RecognizerSpec(BaseModel):
    kind: Literal["lstm", "cnn"] = "lstm"
    num_classes: int = Field(ge=2)
    length: int = Field(ge=1)
    width: int = Field(ge=3)
    hidden: int = Field(default=config.LSTM_HIDDEN, ge=1)
    attention: int = Field(default=128, ge=1)
    latent: int = Field(default=config.LATENT_DIM, ge=1)
    filters: Tuple[int, int] = (8, 16)
    seed: int = 0

    @model_validator(mode="after")
    def _check_dims(self):
        if self.width % 3 != 0:
            raise ValueError(f"width {self.width} is not J·3")
        if self.kind == "cnn" and self.length < 4:
            raise ValueError(f"cnn needs T ≥ 4 for two pooling stages, got {self.length}")
        if min(self.filters) < 1:
            raise ValueError(f"filter counts must be ≥ 1, got {self.filters}")
        return self

    def pooled_length(self) -> int:
        return (self.length // 2) // 2


class Recognizer:
    def __init__(self, spec: RecognizerSpec, params: ParamSet):
        self.spec = spec
        self.params = params

    @property
    def latent_dim(self) -> int:
        return self.spec.latent

    def frozen(self) -> "Recognizer":
        params = ParamSet(seed=self.params.seed)
        for name, value in self.params.items():
            params.entries[name] = DiffValue(value.data)
        return Recognizer(self.spec, params)

    def _check_input(self, x: DiffValue) -> None:
        expected = (self.spec.length, self.spec.width)
        if x.ndim != 3 or x.shape[1:] != expected:
            raise ContractViolation(f"recognizer expects [B×{expected[0]}×{expected[1]}], got {x.shape}")

    def _features(self, x: DiffValue) -> DiffValue:
        if self.spec.kind == "lstm":
            states = run_sequence(time_steps(x), "lstm", self.params.scope("lstm"))
            context, _ = self_attention_forward(states, self.params.scope("attn"))
            return context
        batch = x.shape[0]
        image = reshape(x, (batch, 1, self.spec.length, self.spec.width))
        for block in ("conv1", "conv2"):
            p = self.params.scope(block)
            image = max_pool_time(relu(conv2d_forward(image, p["K"], p["b"], padding=1)))
        return flatten(image)

    def latent(self, x: Union[DiffValue, np.ndarray]) -> DiffValue:
        """Activation of the penultimate dense layer, [B×latent]."""
        x = as_value(x)
        self._check_input(x)
        p = self.params.scope("latent")
        return dense_forward(self._features(x), p["W"], p["b"], activation="tanh")

    def logits(self, x: Union[DiffValue, np.ndarray]) -> DiffValue:
        p = self.params.scope("out")
        return dense_forward(self.latent(x), p["W"], p["b"])

    __call__ = logits


def build(spec: RecognizerSpec) -> Recognizer:
    """Initialize an untrained recognizer; parameters depend only on spec (and its seed)."""
    rng = np.random.default_rng(spec.seed)
    params = ParamSet(seed=spec.seed)
    if spec.kind == "lstm":
        init_lstm(params, "lstm", spec.width, spec.hidden, rng)
        init_attention(params, "attn", spec.hidden, spec.attention, rng)
        feature_dim = spec.hidden
    else:
        first, second = spec.filters
        init_conv(params, "conv1", 1, first, (3, 3), rng)
        init_conv(params, "conv2", first, second, (3, 3), rng)
        feature_dim = second * spec.pooled_length() * spec.width
        if feature_dim == 0:
            raise ContractViolation(f"cnn input {spec.length}×{spec.width} pools away to nothing")
    init_dense(params, "latent", feature_dim, spec.latent, rng)
    init_dense(params, "out", spec.latent, spec.num_classes, rng)
    return Recognizer(spec, params)
