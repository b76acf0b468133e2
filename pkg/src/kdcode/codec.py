"""Discrete code representation and the relaxed training contract.

A code system assigns every one of N symbols a D-dimensional code whose
components each take one of K values. During training the codes live as
trainable real logits of shape (N, D, K); a temperature-scaled softmax
relaxes each code component into a probability vector, and a
straight-through rule recovers exact one-hot codes in the forward pass
while routing gradients through the soft relaxation. This module owns
that forward/backward contract, the annealing schedule, and the code-space
arithmetic (minimum dimension count, utilization, collision odds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .numerics import as_float_array, one_hot, stable_softmax

__all__ = [
    "CodeBook",
    "CodeLogits",
    "CollisionEstimate",
    "KdSpec",
    "TemperatureSchedule",
    "argmax_codes",
    "code_space_utilization",
    "collision_free_probability",
    "collision_free_probability_detail",
    "extract_codes",
    "format_code",
    "init_code_logits",
    "min_code_dim",
    "parse_code",
    "random_codebook",
    "ste_backward",
    "ste_forward",
    "temperature_at",
]

# Above this many symbols the exact birthday product is replaced by its
# exponential approximation.
EXACT_COLLISION_LIMIT = 10**6

LOGIT_INIT_SCALE = 0.01


def _space_at_least(k: int, d: int, threshold: int) -> bool:
    """True when K**D >= threshold, without materializing huge powers."""
    cap = 1
    for _ in range(d):
        cap *= k
        if cap >= threshold:
            return True
    return cap >= threshold


@dataclass(frozen=True)
class KdSpec:
    """Dimensions of a code system: K values per dimension, D dimensions, N symbols.

    A code that identifies symbols must satisfy K**D >= N so every symbol
    can hold its own code; K**D == N is the fully-utilized (compact)
    regime, K**D >> N the slack (redundant) regime. Setting
    ``allow_shared_codes`` opts into the quantization regime where K**D < N
    and many symbols deliberately share a code (each code then acts as a
    cluster assignment rather than an identity).
    """

    K: int
    D: int
    N: int
    allow_shared_codes: bool = False

    def __post_init__(self):
        if self.K < 2:
            raise ValueError(f"K must be at least 2, got {self.K}")
        if self.D < 1:
            raise ValueError(f"D must be at least 1, got {self.D}")
        if self.N < 1:
            raise ValueError(f"N must be at least 1, got {self.N}")
        if not self.allow_shared_codes and not _space_at_least(self.K, self.D, self.N):
            raise ValueError(
                f"code space K**D = {self.K}**{self.D} cannot cover N = {self.N} symbols; "
                f"a code system requires K**D >= N (equality is the compact-code boundary); "
                f"pass allow_shared_codes=True for deliberate quantization"
            )

    @property
    def covers_all_symbols(self) -> bool:
        return _space_at_least(self.K, self.D, self.N)


@dataclass
class CodeBook:
    """The learned symbol -> code lookup table.

    ``codes`` has shape (N, D) with integer entries in [0, K). ``labels``
    optionally names the symbols, in table order.
    """

    spec: KdSpec
    codes: np.ndarray
    labels: list[str] | None = None

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        if codes.shape != (self.spec.N, self.spec.D):
            raise ValueError(
                f"codes shape {codes.shape} does not match spec (N={self.spec.N}, D={self.spec.D})"
            )
        if codes.size and (codes.min() < 0 or codes.max() >= self.spec.K):
            raise ValueError(f"code components must lie in [0, {self.spec.K})")
        self.codes = codes
        if self.labels is not None:
            if len(self.labels) != self.spec.N:
                raise ValueError(
                    f"got {len(self.labels)} labels for {self.spec.N} symbols"
                )
            if len(set(self.labels)) != len(self.labels):
                raise ValueError("symbol labels must be unique")

    def with_labels(self, labels: list[str]) -> "CodeBook":
        return CodeBook(self.spec, self.codes.copy(), list(labels))

    def code_strings(self) -> list[str]:
        return [format_code(row) for row in self.codes]


@dataclass
class CodeLogits:
    """Trainable real-valued code scores of shape (N, D, K).

    The discrete code of symbol i is the per-dimension argmax over the K
    axis; see :func:`extract_codes`.
    """

    spec: KdSpec
    values: np.ndarray

    def __post_init__(self):
        values = as_float_array(self.values, "logits")
        expected = (self.spec.N, self.spec.D, self.spec.K)
        if values.shape != expected:
            raise ValueError(f"logits shape {values.shape} does not match spec {expected}")
        self.values = values


@dataclass(frozen=True)
class TemperatureSchedule:
    """Annealing schedule t -> t0 / (1 + decay_rate * t), or a constant t0."""

    t0: float = 1.0
    decay_rate: float = 1.0
    mode: str = "scheduled"

    def __post_init__(self):
        if not np.isfinite(self.t0) or self.t0 <= 0:
            raise ValueError(f"t0 must be a positive finite real, got {self.t0!r}")
        if not np.isfinite(self.decay_rate) or self.decay_rate < 0:
            raise ValueError(f"decay_rate must be nonnegative, got {self.decay_rate!r}")
        if self.mode not in ("scheduled", "constant"):
            raise ValueError(f"mode must be 'scheduled' or 'constant', got {self.mode!r}")

    def at(self, step: int) -> float:
        """Temperature at iteration ``step`` (0-based); always positive."""
        if step < 0:
            raise ValueError(f"step must be nonnegative, got {step}")
        if self.mode == "constant":
            return self.t0
        return self.t0 / (1.0 + self.decay_rate * step)


def temperature_at(schedule: TemperatureSchedule, step: int) -> float:
    return schedule.at(step)


def min_code_dim(n_symbols: int, k: int) -> int:
    """Smallest D >= 1 with K**D >= N, exact for N up to 2**63."""
    if k < 2:
        raise ValueError(f"K must be at least 2, got {k}")
    if n_symbols < 1:
        raise ValueError(f"N must be at least 1, got {n_symbols}")
    d = 1
    cap = k
    while cap < n_symbols:
        cap *= k
        d += 1
    return d


class CollisionEstimate(NamedTuple):
    probability: float
    method: str


def collision_free_probability_detail(n_symbols: int, k: int, d: int) -> CollisionEstimate:
    """Probability that N uniformly random codes from the K**D space are all distinct.

    For N up to ``EXACT_COLLISION_LIMIT`` this is the exact birthday product
    prod_{i<N}(1 - i/M) accumulated in log space; beyond that it switches
    to the approximation exp(-N(N-1)/(2M)). The returned ``method`` names
    the branch taken.
    """
    if k < 2:
        raise ValueError(f"K must be at least 2, got {k}")
    if d < 1:
        raise ValueError(f"D must be at least 1, got {d}")
    if n_symbols < 1:
        raise ValueError(f"N must be at least 1, got {n_symbols}")
    if not _space_at_least(k, d, n_symbols):
        return CollisionEstimate(0.0, "pigeonhole")
    log_space = d * math.log(k)
    if n_symbols <= EXACT_COLLISION_LIMIT:
        if n_symbols == 1:
            return CollisionEstimate(1.0, "exact-product")
        i = np.arange(1, n_symbols, dtype=np.float64)
        # i/M computed via exp(log i - log M) so astronomically large spaces
        # simply underflow the ratio to zero instead of overflowing.
        ratios = np.exp(np.log(i) - log_space)
        with np.errstate(divide="ignore"):
            terms = np.log1p(-ratios)
        return CollisionEstimate(float(np.exp(terms.sum())), "exact-product")
    space = math.exp(log_space)  # inf is fine: exponent underflows to 0
    exponent = -(float(n_symbols) * (n_symbols - 1)) / (2.0 * space)
    return CollisionEstimate(math.exp(exponent), "exponential-approximation")


def collision_free_probability(n_symbols: int, k: int, d: int) -> float:
    return collision_free_probability_detail(n_symbols, k, d).probability


def code_space_utilization(n_symbols: int, k: int, d: int) -> float:
    """N / K**D as a real in (0, 1]; exactly 1.0 on the compact boundary."""
    if k < 2:
        raise ValueError(f"K must be at least 2, got {k}")
    if d < 1:
        raise ValueError(f"D must be at least 1, got {d}")
    if n_symbols < 1:
        raise ValueError(f"N must be at least 1, got {n_symbols}")
    cap = 1
    for _ in range(d):
        cap *= k
        if cap > n_symbols:
            # Strictly redundant from here on; finish the ratio in log space.
            return float(math.exp(math.log(n_symbols) - d * math.log(k)))
    if cap == n_symbols:
        return 1.0
    raise ValueError(
        f"N = {n_symbols} exceeds the code space K**D = {k}**{d}; not a valid code system"
    )


def ste_forward(logits, temperature: float) -> tuple[np.ndarray, np.ndarray]:
    """Relax trailing-axis logits into (hard one-hot, soft probability) pairs.

    ``soft`` is the temperature-scaled softmax of the logits. ``hard`` is the
    exact one-hot vector at the logits' argmax (lowest index on ties), for
    every temperature. Downstream computation consumes ``hard``; gradients
    flow through ``soft`` via :func:`ste_backward`, which together realize
    hard + (soft - stop_gradient(soft)).
    """
    arr = as_float_array(logits, "logits")
    soft = stable_softmax(arr, temperature)
    hard = one_hot(np.argmax(arr, axis=-1), arr.shape[-1])
    return hard, soft


def ste_backward(soft, upstream_grad, temperature: float) -> np.ndarray:
    """Route an upstream gradient through the soft relaxation.

    Returns the Jacobian-transpose product of the temperature-scaled softmax
    evaluated at ``soft``:

        grad[k] = soft[k] * (upstream[k] - sum_j soft[j] * upstream[j]) / T

    For the straight-through path this treats the forward output as if it
    had been ``soft``; for a genuinely soft forward pass it is the exact
    gradient.
    """
    if not np.isfinite(temperature) or temperature <= 0.0:
        raise ValueError(f"temperature must be a positive finite real, got {temperature!r}")
    s = as_float_array(soft, "soft")
    g = as_float_array(upstream_grad, "upstream_grad")
    if s.shape != g.shape:
        raise ValueError(f"soft shape {s.shape} does not match upstream shape {g.shape}")
    inner = np.sum(s * g, axis=-1, keepdims=True)
    return s * (g - inner) / temperature


def argmax_codes(logit_values: np.ndarray) -> np.ndarray:
    """Per-dimension argmax over the trailing K axis, ties to the lowest index."""
    return np.argmax(logit_values, axis=-1).astype(np.int64)


def extract_codes(logits: CodeLogits) -> CodeBook:
    """Materialize the discrete codes currently encoded by the logits."""
    return CodeBook(logits.spec, argmax_codes(logits.values))


def init_code_logits(spec: KdSpec, rng: np.random.Generator, scale: float = LOGIT_INIT_SCALE) -> CodeLogits:
    """Small symmetric Gaussian initialization: random argmax, no early bias."""
    return CodeLogits(spec, rng.normal(0.0, scale, size=(spec.N, spec.D, spec.K)))


def format_code(components) -> str:
    """Render a code as dash-joined integers, e.g. (3, 1, 0, 4) -> '3-1-0-4'."""
    return "-".join(str(int(c)) for c in components)


def parse_code(text: str) -> tuple[int, ...]:
    """Inverse of :func:`format_code`; raises ValueError on malformed input."""
    parts = text.strip().split("-")
    if not parts or any(p == "" for p in parts):
        raise ValueError(f"malformed code string {text!r}")
    return tuple(int(p) for p in parts)


def random_codebook(spec: KdSpec, rng: np.random.Generator, labels: list[str] | None = None) -> CodeBook:
    """Uniformly random codes; the baseline that learned codes are judged against."""
    codes = rng.integers(0, spec.K, size=(spec.N, spec.D), dtype=np.int64)
    return CodeBook(spec, codes, labels)
