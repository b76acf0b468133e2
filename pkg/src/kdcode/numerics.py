"""Low-level numeric kernels shared by the rest of the package.

Everything operates on float64 numpy arrays. All backward passes in this
package are hand-derived, so this module also provides the central-difference
gradient that every analytic gradient is validated against.
"""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

__all__ = [
    "as_float_array",
    "finite_diff_gradient",
    "make_rng",
    "one_hot",
    "sgd_step",
    "sigmoid",
    "stable_softmax",
]


def as_float_array(values, name: str = "values") -> np.ndarray:
    """Coerce to a float64 array, rejecting NaN and Inf entries."""
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite (no NaN/Inf)")
    return arr


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator backed by the counter-based Philox bit generator.

    The same seed and the same call sequence always reproduce the same
    sample stream, which is what makes every run in this package replayable.
    """
    return np.random.Generator(np.random.Philox(int(seed)))


def stable_softmax(logits, temperature: float = 1.0, axis: int = -1) -> np.ndarray:
    """Softmax of ``logits / temperature`` along ``axis``.

    Uses max-subtraction so the exponentials never overflow for finite
    input. The temperature only rescales the logits, so
    ``stable_softmax(x, t)`` and ``stable_softmax(x / t, 1.0)`` run through
    the identical code path and return bitwise-equal results. Ties in the
    input produce equal probabilities; argmax consumers resolve them to the
    lowest index.
    """
    if not np.isfinite(temperature) or temperature <= 0.0:
        raise ValueError(f"temperature must be a positive finite real, got {temperature!r}")
    arr = as_float_array(logits, "logits")
    scaled = arr / temperature
    shifted = scaled - np.max(scaled, axis=axis, keepdims=True)
    weights = np.exp(shifted)
    return weights / np.sum(weights, axis=axis, keepdims=True)


def sgd_step(params, grads, learning_rate: float) -> np.ndarray:
    """One plain gradient-descent update: ``params - learning_rate * grads``.

    A zero learning rate is allowed and returns the parameters unchanged.
    """
    if not np.isfinite(learning_rate) or learning_rate < 0.0:
        raise ValueError(f"learning_rate must be a nonnegative finite real, got {learning_rate!r}")
    p = np.asarray(params, dtype=np.float64)
    g = np.asarray(grads, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"params shape {p.shape} does not match grads shape {g.shape}")
    return p - learning_rate * g


def finite_diff_gradient(
    fn: Callable[[np.ndarray], float], point, step: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function.

    Returns an array of the same shape as ``point`` whose entry ``k`` is
    ``(fn(point + step*e_k) - fn(point - step*e_k)) / (2 * step)``.
    """
    if not np.isfinite(step) or step <= 0.0:
        raise ValueError(f"step must be a positive finite real, got {step!r}")
    x = as_float_array(point, "point").copy()
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        f_plus = float(fn(x))
        flat[k] = orig - step
        f_minus = float(fn(x))
        flat[k] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise ValueError(f"function value is not finite near coordinate {k}")
        gflat[k] = (f_plus - f_minus) / (2.0 * step)
    return grad


def one_hot(indices, num_classes: int) -> np.ndarray:
    """Float64 one-hot encoding along a trailing axis of size ``num_classes``."""
    idx = np.asarray(indices)
    if num_classes < 1:
        raise ValueError("num_classes must be at least 1")
    if idx.size and (idx.min() < 0 or idx.max() >= num_classes):
        raise ValueError("indices out of range for one_hot")
    out = np.zeros(idx.shape + (num_classes,), dtype=np.float64)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def sigmoid(x) -> np.ndarray:
    """Numerically stable logistic function 1 / (1 + exp(-x))."""
    arr = np.asarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
