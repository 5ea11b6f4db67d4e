"""Single-direction LSTM forward pass and manual backward pass.

Gate order in the stacked 4H parameter blocks is fixed: input, forget, cell
candidate, output.  The recurrence starts from zero hidden and cell state:

    z_t = W_in x_t + W_rec h_{t-1} + b
    i, f, o = sigmoid of their blocks;  g = tanh of the cell block
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

A reversed pass consumes the inputs back-to-front but reports hidden states
in original order; the cache keeps everything in processing order for the
backward pass.  All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, ValidationError


@dataclass
class LstmDirectionParams:
    """Weights of one LSTM direction; rows stack the four gates."""

    W_in: np.ndarray  # (4H, D)
    W_rec: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def hidden_size(self) -> int:
        return self.b.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.W_in.shape[1]


@dataclass
class LstmCache:
    """Forward-pass intermediates, all in processing order."""

    inputs: np.ndarray  # (T, D)
    i_gate: np.ndarray  # (T, H)
    f_gate: np.ndarray
    g_gate: np.ndarray
    o_gate: np.ndarray
    cell: np.ndarray
    tanh_cell: np.ndarray
    hidden: np.ndarray
    reverse: bool


def _sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def lstm_forward(
    inputs: np.ndarray, params: LstmDirectionParams, reverse: bool = False
) -> tuple[np.ndarray, LstmCache]:
    """Run the recurrence over a (T, D) input matrix.

    Returns the (T, H) hidden states in original order plus the cache needed
    by :func:`lstm_backward`.  Raises :class:`NonFiniteError` if any hidden
    state diverges, which only happens when parameters or inputs are already
    non-finite (the activations themselves are bounded).
    """
    if inputs.ndim != 2 or inputs.shape[0] < 1:
        raise ValidationError(f"inputs must be T x D with T >= 1, got {inputs.shape}")
    if inputs.shape[1] != params.input_size:
        raise ValidationError(
            f"input width {inputs.shape[1]} != parameter input size {params.input_size}"
        )
    T = inputs.shape[0]
    H = params.hidden_size
    xs = inputs[::-1] if reverse else inputs

    i_gate = np.empty((T, H))
    f_gate = np.empty((T, H))
    g_gate = np.empty((T, H))
    o_gate = np.empty((T, H))
    cell = np.empty((T, H))
    tanh_cell = np.empty((T, H))
    hidden = np.empty((T, H))

    h = np.zeros(H)
    c = np.zeros(H)
    for s in range(T):
        z = params.W_in @ xs[s] + params.W_rec @ h + params.b
        i = _sigmoid(z[:H])
        f = _sigmoid(z[H : 2 * H])
        g = np.tanh(z[2 * H : 3 * H])
        o = _sigmoid(z[3 * H :])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        i_gate[s], f_gate[s], g_gate[s], o_gate[s] = i, f, g, o
        cell[s], tanh_cell[s], hidden[s] = c, tc, h

    if not np.all(np.isfinite(hidden)):
        raise NonFiniteError("LSTM hidden state is non-finite; inputs or parameters diverged")

    out = hidden[::-1].copy() if reverse else hidden
    cache = LstmCache(
        inputs=xs,
        i_gate=i_gate,
        f_gate=f_gate,
        g_gate=g_gate,
        o_gate=o_gate,
        cell=cell,
        tanh_cell=tanh_cell,
        hidden=hidden,
        reverse=reverse,
    )
    return out, cache


def lstm_backward(
    d_hidden: np.ndarray, params: LstmDirectionParams, cache: LstmCache
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Backpropagate upstream hidden-state gradients through the recurrence.

    ``d_hidden`` is (T, H) in original order.  Returns the (T, D) input
    gradients in original order and the parameter gradients keyed
    ``W_in`` / ``W_rec`` / ``b``.
    """
    T, H = cache.hidden.shape
    if d_hidden.shape != (T, H):
        raise ValidationError(f"upstream gradient shape {d_hidden.shape} != {(T, H)}")
    d_h_seq = d_hidden[::-1] if cache.reverse else d_hidden

    d_W_in = np.zeros_like(params.W_in)
    d_W_rec = np.zeros_like(params.W_rec)
    d_b = np.zeros_like(params.b)
    d_x = np.empty_like(cache.inputs)

    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for s in range(T - 1, -1, -1):
        i = cache.i_gate[s]
        f = cache.f_gate[s]
        g = cache.g_gate[s]
        o = cache.o_gate[s]
        tc = cache.tanh_cell[s]
        c_prev = cache.cell[s - 1] if s > 0 else np.zeros(H)
        h_prev = cache.hidden[s - 1] if s > 0 else np.zeros(H)

        dh = d_h_seq[s] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        df = dc * c_prev
        dg = dc * i

        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ]
        )
        d_W_in += np.outer(dz, cache.inputs[s])
        d_W_rec += np.outer(dz, h_prev)
        d_b += dz
        d_x[s] = params.W_in.T @ dz
        dh_next = params.W_rec.T @ dz
        dc_next = dc * f

    d_inputs = d_x[::-1].copy() if cache.reverse else d_x
    return d_inputs, {"W_in": d_W_in, "W_rec": d_W_rec, "b": d_b}
