"""Composition functions: from D code-embedding vectors to one symbol embedding.

Each code dimension j owns a (K x width) embedding table. A symbol's code
selects (or, during relaxed training, mixes) one row per dimension, and a
composition function maps the resulting D vectors to the output embedding:

* linear: sum the D vectors and project, out = (sum_j x_j) @ proj
* lstm: run a recurrent cell over the D vectors in order, sum the hidden
  states, and project, out = (sum_j h_j) @ proj

The recurrent cell feeds the input vector x directly into every gate with
no input weight matrices; only the hidden state is multiplied by a square
recurrence matrix:

    f = sigmoid(x + u_forget h_prev + b_forget)
    i = sigmoid(x + u_input  h_prev + b_input)
    o = sigmoid(x + u_output h_prev + b_output)
    m = f * m_prev + i * tanh(x + u_cell h_prev + b_cell)
    h = o * tanh(m)

Forward passes record a tape of intermediates; backward passes replay the
tape and return exact analytic gradients for every parameter and every
input vector. All forwards accept arbitrary leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .numerics import as_float_array, sgd_step, sigmoid

__all__ = [
    "CodeEmbeddingTables",
    "LinearComposerParams",
    "LstmComposerParams",
    "apply_gradients",
    "compose_linear",
    "compose_lstm",
    "composer_backward",
    "composer_forward",
    "composer_param_count",
    "embed_code_dimension",
    "init_composer_params",
    "init_tables",
    "lstm_step",
]

VARIANTS = ("linear", "lstm")


@dataclass
class CodeEmbeddingTables:
    """Per-dimension embedding tables, one (K x width) matrix per code dimension."""

    values: np.ndarray  # (D, K, width)

    def __post_init__(self):
        values = as_float_array(self.values, "tables")
        if values.ndim != 3:
            raise ValueError(f"tables must have shape (D, K, width), got {values.shape}")
        self.values = values

    @property
    def num_dims(self) -> int:
        return self.values.shape[0]

    @property
    def cardinality(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass
class LinearComposerParams:
    proj: np.ndarray  # (width, d_out)


@dataclass
class LstmComposerParams:
    u_forget: np.ndarray  # (width, width)
    u_input: np.ndarray
    u_output: np.ndarray
    u_cell: np.ndarray
    b_forget: np.ndarray  # (width,)
    b_input: np.ndarray
    b_output: np.ndarray
    b_cell: np.ndarray
    proj: np.ndarray  # (width, d_out)


def init_tables(num_dims: int, cardinality: int, width: int, rng: np.random.Generator) -> CodeEmbeddingTables:
    scale = 1.0 / np.sqrt(width)
    return CodeEmbeddingTables(rng.normal(0.0, scale, size=(num_dims, cardinality, width)))


def init_composer_params(variant: str, width: int, d_out: int, rng: np.random.Generator):
    """Scaled-Gaussian weights, zero biases."""
    if variant == "linear":
        return LinearComposerParams(proj=rng.normal(0.0, 1.0 / np.sqrt(d_out), size=(width, d_out)))
    if variant == "lstm":
        scale = 1.0 / np.sqrt(width)
        return LstmComposerParams(
            u_forget=rng.normal(0.0, scale, size=(width, width)),
            u_input=rng.normal(0.0, scale, size=(width, width)),
            u_output=rng.normal(0.0, scale, size=(width, width)),
            u_cell=rng.normal(0.0, scale, size=(width, width)),
            b_forget=np.zeros(width),
            b_input=np.zeros(width),
            b_output=np.zeros(width),
            b_cell=np.zeros(width),
            proj=rng.normal(0.0, 1.0 / np.sqrt(d_out), size=(width, d_out)),
        )
    raise ValueError(f"unknown composer variant {variant!r}")


def composer_param_count(variant: str, width: int, d_out: int) -> int:
    """Exact parameter count of a composer: width*d_out for linear,
    4*(width**2 + width) + width*d_out for the recurrent variant."""
    if variant == "linear":
        return width * d_out
    if variant == "lstm":
        return 4 * (width * width + width) + width * d_out
    raise ValueError(f"unknown composer variant {variant!r}")


def zero_gradients(params):
    return type(params)(**{f.name: np.zeros_like(getattr(params, f.name)) for f in fields(params)})


def apply_gradients(params, grads, learning_rate: float):
    """Field-wise SGD update returning a new params object of the same type."""
    updated = {
        f.name: sgd_step(getattr(params, f.name), getattr(grads, f.name), learning_rate)
        for f in fields(params)
    }
    return type(params)(**updated)


def _outer_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # sum of outer products over all leading axes: out[i, j] = sum a[..., i] b[..., j]
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def embed_code_dimension(code_vector, table) -> np.ndarray:
    """Mix table rows by a one-hot or soft weight vector: out = code_vector @ table.

    An exact one-hot input reproduces plain row indexing.
    """
    vec = as_float_array(code_vector, "code_vector")
    tab = as_float_array(table, "table")
    if tab.ndim != 2 or vec.shape[-1] != tab.shape[0]:
        raise ValueError(
            f"weight vector of length {vec.shape[-1]} does not match table with {tab.shape[0]} rows"
        )
    return vec @ tab


# ---------------------------------------------------------------------------
# linear variant


@dataclass
class LinearTape:
    xs_sum: np.ndarray  # (..., width)
    num_dims: int


def linear_forward(code_vectors, params: LinearComposerParams) -> tuple[np.ndarray, LinearTape]:
    xs = as_float_array(code_vectors, "code_vectors")
    if xs.ndim < 2:
        raise ValueError("code_vectors must have shape (..., D, width)")
    if xs.shape[-1] != params.proj.shape[0]:
        raise ValueError(
            f"code vector width {xs.shape[-1]} does not match projection rows {params.proj.shape[0]}"
        )
    xs_sum = xs.sum(axis=-2)
    return xs_sum @ params.proj, LinearTape(xs_sum=xs_sum, num_dims=xs.shape[-2])


def linear_backward(
    tape: LinearTape, params: LinearComposerParams, upstream
) -> tuple[np.ndarray, LinearComposerParams]:
    g = as_float_array(upstream, "upstream")
    d_proj = _outer_sum(tape.xs_sum, g)
    d_sum = g @ params.proj.T
    d_xs = np.repeat(d_sum[..., None, :], tape.num_dims, axis=-2)
    return d_xs, LinearComposerParams(proj=d_proj)


def compose_linear(code_vectors, params: LinearComposerParams) -> np.ndarray:
    """Sum the D code-embedding vectors and project: (sum_j x_j) @ proj."""
    out, _ = linear_forward(code_vectors, params)
    return out


# ---------------------------------------------------------------------------
# recurrent variant


def _check_saturation(gates: np.ndarray, tanhs: np.ndarray):
    # Sigmoid outputs must stay strictly inside (0, 1) and tanh strictly
    # inside (-1, 1); hitting the boundary means float64 saturated and the
    # hand-derived gradients below would silently be garbage.
    if not (np.all(gates > 0.0) and np.all(gates < 1.0)):
        raise ArithmeticError("recurrent gate saturated to 0 or 1; inputs too large")
    if not np.all(np.abs(tanhs) < 1.0):
        raise ArithmeticError("tanh output saturated to +/-1; inputs too large")


def _gates(x, h_prev, params: LstmComposerParams):
    f = sigmoid(x + h_prev @ params.u_forget.T + params.b_forget)
    i = sigmoid(x + h_prev @ params.u_input.T + params.b_input)
    o = sigmoid(x + h_prev @ params.u_output.T + params.b_output)
    cand = np.tanh(x + h_prev @ params.u_cell.T + params.b_cell)
    return f, i, o, cand


def lstm_step(x, h_prev, m_prev, params: LstmComposerParams) -> tuple[np.ndarray, np.ndarray]:
    """One recurrent cell update; returns the new (hidden, memory) pair."""
    x = as_float_array(x, "x")
    h_prev = as_float_array(h_prev, "h_prev")
    m_prev = as_float_array(m_prev, "m_prev")
    width = params.u_forget.shape[0]
    if x.shape[-1] != width or h_prev.shape[-1] != width or m_prev.shape[-1] != width:
        raise ValueError(f"all step inputs must have trailing width {width}")
    f, i, o, cand = _gates(x, h_prev, params)
    m = f * m_prev + i * cand
    tanh_m = np.tanh(m)
    _check_saturation(np.stack([f, i, o]), np.stack([cand, tanh_m]))
    return o * tanh_m, m


@dataclass
class LstmTape:
    h_prev: np.ndarray  # (D, ..., width): hidden state entering each step
    m_prev: np.ndarray
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    cand: np.ndarray
    tanh_m: np.ndarray
    h_sum: np.ndarray  # (..., width)


def lstm_forward(code_vectors, params: LstmComposerParams) -> tuple[np.ndarray, LstmTape]:
    xs = as_float_array(code_vectors, "code_vectors")
    if xs.ndim < 2:
        raise ValueError("code_vectors must have shape (..., D, width)")
    width = params.u_forget.shape[0]
    if xs.shape[-1] != width:
        raise ValueError(f"code vector width {xs.shape[-1]} does not match cell width {width}")
    num_dims = xs.shape[-2]
    lead = xs.shape[:-2]

    h = np.zeros(lead + (width,))
    m = np.zeros(lead + (width,))
    h_sum = np.zeros(lead + (width,))
    rec = {name: [] for name in ("h_prev", "m_prev", "f", "i", "o", "cand", "tanh_m")}
    for j in range(num_dims):
        x = xs[..., j, :]
        f, i, o, cand = _gates(x, h, params)
        m_new = f * m + i * cand
        tanh_m = np.tanh(m_new)
        rec["h_prev"].append(h)
        rec["m_prev"].append(m)
        rec["f"].append(f)
        rec["i"].append(i)
        rec["o"].append(o)
        rec["cand"].append(cand)
        rec["tanh_m"].append(tanh_m)
        h = o * tanh_m
        m = m_new
        h_sum = h_sum + h

    stacked = {name: np.stack(vals, axis=0) for name, vals in rec.items()}
    _check_saturation(
        np.stack([stacked["f"], stacked["i"], stacked["o"]]),
        np.stack([stacked["cand"], stacked["tanh_m"]]),
    )
    return h_sum @ params.proj, LstmTape(h_sum=h_sum, **stacked)


def lstm_backward(
    tape: LstmTape, params: LstmComposerParams, upstream
) -> tuple[np.ndarray, LstmComposerParams]:
    """Backpropagation through time over the D code dimensions."""
    g = as_float_array(upstream, "upstream")
    num_dims = tape.f.shape[0]
    grads = zero_gradients(params)
    grads.proj = _outer_sum(tape.h_sum, g)
    g_h_sum = g @ params.proj.T

    d_xs = np.empty(g_h_sum.shape[:-1] + (num_dims, g_h_sum.shape[-1]))
    dh_next = np.zeros_like(g_h_sum)
    dm_next = np.zeros_like(g_h_sum)
    bias_axes = tuple(range(g_h_sum.ndim - 1))
    for j in reversed(range(num_dims)):
        f, i, o = tape.f[j], tape.i[j], tape.o[j]
        cand, tanh_m = tape.cand[j], tape.tanh_m[j]
        h_prev, m_prev = tape.h_prev[j], tape.m_prev[j]

        dh = g_h_sum + dh_next  # every step's hidden state feeds the sum
        da_o = dh * tanh_m * o * (1.0 - o)
        dm = dh * o * (1.0 - tanh_m**2) + dm_next
        da_f = dm * m_prev * f * (1.0 - f)
        da_i = dm * cand * i * (1.0 - i)
        da_c = dm * i * (1.0 - cand**2)
        dm_next = dm * f

        d_xs[..., j, :] = da_f + da_i + da_o + da_c
        dh_next = (
            da_f @ params.u_forget
            + da_i @ params.u_input
            + da_o @ params.u_output
            + da_c @ params.u_cell
        )
        grads.u_forget += _outer_sum(da_f, h_prev)
        grads.u_input += _outer_sum(da_i, h_prev)
        grads.u_output += _outer_sum(da_o, h_prev)
        grads.u_cell += _outer_sum(da_c, h_prev)
        grads.b_forget += da_f.sum(axis=bias_axes)
        grads.b_input += da_i.sum(axis=bias_axes)
        grads.b_output += da_o.sum(axis=bias_axes)
        grads.b_cell += da_c.sum(axis=bias_axes)
    return d_xs, grads


def compose_lstm(code_vectors, params: LstmComposerParams) -> np.ndarray:
    """Run the cell over the D code dimensions, sum hidden states, project."""
    out, _ = lstm_forward(code_vectors, params)
    return out


# ---------------------------------------------------------------------------
# variant dispatch


def composer_forward(variant: str, code_vectors, params):
    if variant == "linear":
        return linear_forward(code_vectors, params)
    if variant == "lstm":
        return lstm_forward(code_vectors, params)
    raise ValueError(f"unknown composer variant {variant!r}")


def composer_backward(variant: str, tape, params, upstream):
    """Gradients of (upstream . output) w.r.t. the code vectors and all parameters.

    Requires the tape produced by the matching forward pass.
    """
    if variant == "linear":
        if not isinstance(tape, LinearTape):
            raise ValueError("linear backward requires the tape from linear_forward")
        return linear_backward(tape, params, upstream)
    if variant == "lstm":
        if not isinstance(tape, LstmTape):
            raise ValueError("lstm backward requires the tape from lstm_forward")
        return lstm_backward(tape, params, upstream)
    raise ValueError(f"unknown composer variant {variant!r}")
