"""
Generator and discriminator networks of the sequence CycleGAN.

Generator: one GRU layer over the input frames (teacher forcing: step t
sees the true frame x_t, plus optional Gaussian noise) and one fully
connected layer with no activation mapping h_t back to a frame.

Discriminator: the same GRU + fc body, read out at the last step, followed
by one more fc layer to a scalar logit.
"""

from typing import Optional, Union

import numpy as np

from core.layers import dense_forward, run_sequence, time_steps
from core.params import ParamSet, init_dense, init_gru
from core.tensor import DiffValue, add, as_value, slice_, stack
from errors import ContractViolation


class GeneratorNet:
    """GRU(width → hidden) + fc(hidden → width)."""

    def __init__(self, params: ParamSet):
        self.params = params
        try:
            self.width, self.hidden = params["gru.W_z"].shape
            fc_shape = params["fc.W"].shape
        except KeyError as e:
            raise ContractViolation(f"network parameters missing {e}") from e
        if fc_shape != (self.hidden, self.width):
            raise ContractViolation(f"fc shape {fc_shape} does not map {self.hidden} back to {self.width}")

    @classmethod
    def initialize(cls, width: int, hidden: int, rng: np.random.Generator, seed: int = 0):
        if width < 1 or hidden < 1:
            raise ContractViolation(f"width and hidden must be ≥ 1, got {width}, {hidden}")
        params = ParamSet(seed=seed)
        init_gru(params, "gru", width, hidden, rng)
        init_dense(params, "fc", hidden, width, rng)
        cls._init_extra(params, width, hidden, rng)
        return cls(params)

    @staticmethod
    def _init_extra(params: ParamSet, width: int, hidden: int, rng: np.random.Generator) -> None:
        pass

    def frozen(self):
        """Same weights as constants, so forward passes record no tape."""
        params = ParamSet(seed=self.params.seed)
        for name, value in self.params.items():
            params.entries[name] = DiffValue(value.data)
        return type(self)(params)

    def _hidden_states(self, x: DiffValue):
        if x.ndim != 3 or x.shape[2] != self.width:
            raise ContractViolation(f"expected [B×T×{self.width}] input, got {x.shape}")
        return run_sequence(time_steps(x), "gru", self.params.scope("gru"))


class DiscriminatorNet(GeneratorNet):
    """Generator-shaped body plus head fc(width → 1)."""

    def __init__(self, params: ParamSet):
        super().__init__(params)
        if "head.W" not in params or params["head.W"].shape != (self.width, 1):
            raise ContractViolation("discriminator head must map the frame width to one logit")

    @staticmethod
    def _init_extra(params: ParamSet, width: int, hidden: int, rng: np.random.Generator) -> None:
        init_dense(params, "head", width, 1, rng)


def generator_forward(
    net: GeneratorNet,
    x: Union[DiffValue, np.ndarray],
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> DiffValue:
    """
    Translate a batch of sequences frame by frame.

    Args:
        net: Generator weights
        x: Input batch [B×T×(J·3)]
        noise_sigma: Std of the Gaussian noise added to every input frame
        rng: Noise source; required when noise_sigma > 0

    Returns:
        Translated batch with the same shape as x
    """
    x = as_value(x)
    if noise_sigma > 0.0:
        if rng is None:
            raise ContractViolation("noise injection needs an rng")
        x = add(x, rng.normal(0.0, noise_sigma, size=x.shape))
    fc = net.params.scope("fc")
    frames = [dense_forward(h_t, fc["W"], fc["b"]) for h_t in net._hidden_states(x)]
    return stack(frames, axis=1)


def discriminator_forward(net: DiscriminatorNet, x: Union[DiffValue, np.ndarray]) -> DiffValue:
    """One logit per sequence, shape [B], read from the final hidden state."""
    h_last = net._hidden_states(as_value(x))[-1]
    fc, head = net.params.scope("fc"), net.params.scope("head")
    features = dense_forward(h_last, fc["W"], fc["b"])
    return slice_(dense_forward(features, head["W"], head["b"]), (slice(None), 0))
