"""
Neural layers built on the DiffValue primitives.

Layers are plain functions over DiffValues; parameters are passed in as
arrays or as the short-name dicts returned by ParamSet.scope().
"""

from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.tensor import (
    DiffValue,
    as_value,
    concat,
    matmul,
    maximum,
    relu,
    reshape,
    sigmoid,
    slice_,
    softmax,
    stack,
    tanh,
)
from errors import ContractViolation

Params = Dict[str, DiffValue]

_ACTIVATIONS = {
    "none": lambda v: v,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
}


def dense_forward(x: DiffValue, W: DiffValue, b: DiffValue, activation: str = "none") -> DiffValue:
    """x·W + b followed by an elementwise activation."""
    x = as_value(x)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ContractViolation(f"dense shape mismatch: x{x.shape} W{W.shape} b{b.shape}")
    if activation not in _ACTIVATIONS:
        raise ContractViolation(f"unknown activation '{activation}'")
    return _ACTIVATIONS[activation](matmul(x, W) + b)


def _check_recurrent(x_t: DiffValue, h_prev: DiffValue, p: Params, gates: str) -> None:
    if x_t.ndim != 2 or h_prev.ndim != 2 or x_t.shape[0] != h_prev.shape[0]:
        raise ContractViolation(f"recurrent input shapes x{x_t.shape} h{h_prev.shape}")
    hidden = h_prev.shape[1]
    for gate in gates:
        try:
            W, U, b = p[f"W_{gate}"], p[f"U_{gate}"], p[f"b_{gate}"]
        except KeyError as e:
            raise ContractViolation(f"missing recurrent parameter {e}") from e
        if W.shape != (x_t.shape[1], hidden) or U.shape != (hidden, hidden) or b.shape != (hidden,):
            raise ContractViolation(
                f"gate '{gate}' shapes W{W.shape} U{U.shape} b{b.shape} for input {x_t.shape[1]}, hidden {hidden}"
            )


def gru_cell_forward(x_t: DiffValue, h_prev: DiffValue, p: Params) -> DiffValue:
    """
    One GRU step.

        z = σ(x W_z + h U_z + b_z)
        r = σ(x W_r + h U_r + b_r)
        h̃ = tanh(x W_h + (r∘h) U_h + b_h)
        h_t = (1 − z)∘h + z∘h̃
    """
    x_t, h_prev = as_value(x_t), as_value(h_prev)
    _check_recurrent(x_t, h_prev, p, "zrh")
    z = sigmoid(matmul(x_t, p["W_z"]) + matmul(h_prev, p["U_z"]) + p["b_z"])
    r = sigmoid(matmul(x_t, p["W_r"]) + matmul(h_prev, p["U_r"]) + p["b_r"])
    candidate = tanh(matmul(x_t, p["W_h"]) + matmul(r * h_prev, p["U_h"]) + p["b_h"])
    return (1.0 - z) * h_prev + z * candidate


def lstm_cell_forward(
    x_t: DiffValue, state: Tuple[DiffValue, DiffValue], p: Params
) -> Tuple[DiffValue, DiffValue]:
    """One LSTM step; returns (h_t, c_t)."""
    h_prev, c_prev = as_value(state[0]), as_value(state[1])
    x_t = as_value(x_t)
    _check_recurrent(x_t, h_prev, p, "ifog")
    i = sigmoid(matmul(x_t, p["W_i"]) + matmul(h_prev, p["U_i"]) + p["b_i"])
    f = sigmoid(matmul(x_t, p["W_f"]) + matmul(h_prev, p["U_f"]) + p["b_f"])
    o = sigmoid(matmul(x_t, p["W_o"]) + matmul(h_prev, p["U_o"]) + p["b_o"])
    g = tanh(matmul(x_t, p["W_g"]) + matmul(h_prev, p["U_g"]) + p["b_g"])
    c = f * c_prev + i * g
    return o * tanh(c), c


def time_steps(x: Union[DiffValue, np.ndarray]) -> List[DiffValue]:
    """Split [B×T×d] into T inputs of shape [B×d]."""
    x = as_value(x)
    if x.ndim != 3:
        raise ContractViolation(f"sequence input must be [B×T×d], got {x.shape}")
    return [slice_(x, (slice(None), t, slice(None))) for t in range(x.shape[1])]


def run_sequence(
    steps: Sequence[DiffValue], cell: str, p: Params, h0: Optional[DiffValue] = None
) -> List[DiffValue]:
    """Fold a GRU or LSTM cell over per-step inputs; returns every h_t."""
    if len(steps) == 0:
        raise ContractViolation("sequence must have T ≥ 1")
    if cell not in ("gru", "lstm"):
        raise ContractViolation(f"unknown cell '{cell}'")
    batch = steps[0].shape[0]
    hidden = p["U_z" if cell == "gru" else "U_i"].shape[0]
    h = h0 if h0 is not None else DiffValue(np.zeros((batch, hidden)))
    c = DiffValue(np.zeros((batch, hidden)))
    outputs = []
    for x_t in steps:
        if cell == "gru":
            h = gru_cell_forward(x_t, h, p)
        else:
            h, c = lstm_cell_forward(x_t, (h, c), p)
        outputs.append(h)
    return outputs


def sequence_forward(
    x: Union[DiffValue, np.ndarray], cell: str, p: Params, h0: Optional[DiffValue] = None
) -> DiffValue:
    """All hidden states [B×T×H] for input [B×T×d]."""
    return stack(run_sequence(time_steps(x), cell, p, h0), axis=1)


def self_attention_forward(
    h: Union[DiffValue, Sequence[DiffValue]], p: Params
) -> Tuple[DiffValue, DiffValue]:
    """
    Additive single-head attention over time.

    s_t = v·tanh(W h_t), α = softmax(s), context = Σ α_t h_t.
    Returns (context [B×H], weights [B×T]).
    """
    states = time_steps(h) if isinstance(h, (DiffValue, np.ndarray)) else list(h)
    if not states:
        raise ContractViolation("attention needs T ≥ 1")
    if p["W"].shape[0] != states[0].shape[1] or p["v"].shape != (p["W"].shape[1], 1):
        raise ContractViolation(f"attention shapes W{p['W'].shape} v{p['v'].shape}")
    scores = concat([matmul(tanh(matmul(h_t, p["W"])), p["v"]) for h_t in states], axis=1)
    weights = softmax(scores, axis=1)
    context = None
    for t, h_t in enumerate(states):
        term = slice_(weights, (slice(None), slice(t, t + 1))) * h_t
        context = term if context is None else context + term
    return context, weights


def _zero_pad(x: DiffValue, padding: int) -> DiffValue:
    if padding == 0:
        return x
    b, c, height, width = x.shape
    rows = DiffValue(np.zeros((b, c, padding, width)))
    x = concat([rows, x, rows], axis=2)
    cols = DiffValue(np.zeros((b, c, height + 2 * padding, padding)))
    return concat([cols, x, cols], axis=3)


def conv2d_forward(
    x: Union[DiffValue, np.ndarray], K: DiffValue, b: DiffValue, stride: int = 1, padding: int = 0
) -> DiffValue:
    """
    Cross-correlation of x [B×C×H×W] with kernels K [F×C×kh×kw] plus bias b [F].

    Implemented as an im2col gather followed by one matmul.
    """
    x = as_value(x)
    if x.ndim != 4 or K.ndim != 4 or x.shape[1] != K.shape[1] or b.shape != (K.shape[0],):
        raise ContractViolation(f"conv shape mismatch: x{x.shape} K{K.shape} b{b.shape}")
    if stride < 1 or padding < 0:
        raise ContractViolation(f"invalid stride {stride} / padding {padding}")
    xp = _zero_pad(x, padding)
    batch, channels, height, width = xp.shape
    filters, _, kh, kw = K.shape
    if height < kh or width < kw:
        raise ContractViolation(f"kernel {kh}×{kw} larger than padded input {height}×{width}")
    out_h = (height - kh) // stride + 1
    out_w = (width - kw) // stride + 1

    rb, roh, row = (a.reshape(-1) for a in np.meshgrid(
        np.arange(batch), np.arange(out_h), np.arange(out_w), indexing="ij"))
    cc, ck, cj = (a.reshape(-1) for a in np.meshgrid(
        np.arange(channels), np.arange(kh), np.arange(kw), indexing="ij"))
    patches = slice_(xp, (
        rb[:, None],
        cc[None, :],
        (roh * stride)[:, None] + ck[None, :],
        (row * stride)[:, None] + cj[None, :],
    ))

    patch_len = channels * kh * kw
    flat = np.arange(filters)[None, :] * patch_len + np.arange(patch_len)[:, None]
    kernel_matrix = slice_(K, np.unravel_index(flat, K.shape))
    out = matmul(patches, kernel_matrix) + b

    gb, gf, gh, gw = np.meshgrid(
        np.arange(batch), np.arange(filters), np.arange(out_h), np.arange(out_w), indexing="ij")
    return slice_(out, (gb * out_h * out_w + gh * out_w + gw, gf))


def max_pool_time(x: DiffValue, size: int = 2) -> DiffValue:
    """Max-pool by 2 along axis 2 of [B×F×H×W]; a trailing odd row is dropped."""
    if size != 2:
        raise ContractViolation("only pool size 2 is supported")
    rows = (x.shape[2] // 2) * 2
    if rows == 0:
        raise ContractViolation(f"cannot pool a time axis of length {x.shape[2]}")
    even = slice_(x, (slice(None), slice(None), slice(0, rows, 2), slice(None)))
    odd = slice_(x, (slice(None), slice(None), slice(1, rows, 2), slice(None)))
    return maximum(even, odd)


def flatten(x: DiffValue) -> DiffValue:
    return reshape(x, (x.shape[0], int(np.prod(x.shape[1:]))))
