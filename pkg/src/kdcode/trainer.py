"""Code learning: fit discrete codes and code embeddings to a target table.

The objective is the summed squared reconstruction error

    L = sum_i || v_i - compose(tables[code_i]) ||^2

minimized by plain SGD over the code logits, the code-embedding tables, and
the composer parameters. One epoch visits every symbol once (shuffled by
default, in mini-batches of ``batch_size``) and takes one SGD step per
batch on the mean batch loss; ``batch_size=1`` is the per-symbol update
loop. The per-dimension code weights are produced according to
``code_mode``:

* ``ste``: forward consumes the exact one-hot argmax of the logits while
  the backward pass routes gradients through the temperature-scaled
  softmax (straight-through).
* ``soft``: forward and backward both use the softmax relaxation.
* ``random``: codes are frozen at their random initialization and only the
  tables and composer train against them.

A second phase, :func:`retrain_code_embeddings`, holds a finished code book
fixed and refits freshly initialized tables and composer parameters with
hard row indexing only.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .codec import (
    CodeBook,
    KdSpec,
    TemperatureSchedule,
    argmax_codes,
    init_code_logits,
    ste_backward,
)
from .composer import (
    VARIANTS,
    CodeEmbeddingTables,
    apply_gradients,
    composer_backward,
    composer_forward,
    init_composer_params,
    init_tables,
)
from .numerics import as_float_array, make_rng, one_hot, sgd_step, stable_softmax

__all__ = [
    "CODE_MODES",
    "RetrainResult",
    "TrainConfig",
    "TrainReport",
    "TrainState",
    "TrainingDivergedError",
    "hard_loss_and_gradients",
    "init_train_state",
    "learn_codes",
    "loss_and_gradients",
    "reconstruct_embeddings",
    "reconstruction_loss",
    "retrain_code_embeddings",
    "train_epoch",
]

CODE_MODES = ("ste", "soft", "random")

# A run whose epoch loss grows past this multiple of the starting loss is
# aborted as diverged rather than clamped.
DIVERGENCE_FACTOR = 1e6


class TrainingDivergedError(RuntimeError):
    """Raised when the loss becomes non-finite or explodes."""

    def __init__(self, message: str, *, epoch: int, symbol: int | None, temperature: float):
        super().__init__(message)
        self.epoch = epoch
        self.symbol = symbol
        self.temperature = temperature


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for a code-learning or retraining run.

    ``epochs=0`` and ``learning_rate=0.0`` are legal no-op configurations
    (useful for inspecting initialization); everything else must be
    positive. ``code_width`` defaults to the target embedding width.
    """

    learning_rate: float = 0.01
    epochs: int = 30
    batch_size: int = 1
    seed: int = 0
    schedule: TemperatureSchedule = TemperatureSchedule()
    composer: str = "linear"
    code_mode: str = "ste"
    code_width: int | None = None
    shuffle: bool = True

    def __post_init__(self):
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise ValueError(f"learning_rate must be nonnegative, got {self.learning_rate!r}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be nonnegative, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.composer not in VARIANTS:
            raise ValueError(f"composer must be one of {VARIANTS}, got {self.composer!r}")
        if self.code_mode not in CODE_MODES:
            raise ValueError(f"code_mode must be one of {CODE_MODES}, got {self.code_mode!r}")
        if self.code_width is not None and self.code_width < 1:
            raise ValueError(f"code_width must be positive, got {self.code_width}")


@dataclass
class TrainState:
    """Mutable state owned by a single training run."""

    spec: KdSpec
    logits: np.ndarray  # (N, D, K)
    tables: np.ndarray  # (D, K, width)
    composer_params: object
    frozen_codes: np.ndarray | None  # set only for code_mode="random"
    rng: np.random.Generator
    d_out: int


@dataclass
class TrainReport:
    """Per-epoch curves plus the final learned state.

    ``losses`` are the online mean per-symbol squared errors seen during
    each epoch; ``hard_losses`` re-evaluate the whole table at each epoch's
    end with the discrete argmax codes, which is the loss the compressed
    model actually delivers.
    """

    losses: np.ndarray
    hard_losses: np.ndarray
    temperatures: np.ndarray
    code_change_fractions: np.ndarray
    codebook: CodeBook
    tables: CodeEmbeddingTables
    composer_params: object
    config: TrainConfig
    initial_loss: float


@dataclass
class RetrainResult:
    tables: CodeEmbeddingTables
    composer_params: object
    final_loss: float
    losses: np.ndarray


def _table_values(tables) -> np.ndarray:
    return tables.values if isinstance(tables, CodeEmbeddingTables) else np.asarray(tables, dtype=np.float64)


def _gather_rows(tables: np.ndarray, codes: np.ndarray) -> np.ndarray:
    # (D,K,w) gathered by (B,D) integer codes -> (B,D,w)
    d = tables.shape[0]
    return tables[np.arange(d)[None, :], codes]


def reconstruct_embeddings(codes, tables, composer_params, variant: str = "linear") -> np.ndarray:
    """Compose output embeddings for hard integer codes of shape (n, D)."""
    tab = _table_values(tables)
    codes = np.asarray(codes.codes if isinstance(codes, CodeBook) else codes, dtype=np.int64)
    if codes.ndim != 2 or codes.shape[1] != tab.shape[0]:
        raise ValueError(f"codes shape {codes.shape} does not match tables {tab.shape}")
    if codes.size and (codes.min() < 0 or codes.max() >= tab.shape[1]):
        raise ValueError("code components out of range for the embedding tables")
    out, _ = composer_forward(variant, _gather_rows(tab, codes), composer_params)
    return out


def reconstruction_loss(targets, codes_or_soft, tables, composer_params, variant: str = "linear") -> float:
    """Summed squared reconstruction error over all symbols.

    ``codes_or_soft`` is either an (n, D) integer code array (or CodeBook)
    for hard indexing, or an (n, D, K) float array of per-dimension mixing
    weights.
    """
    targets = as_float_array(targets, "targets")
    if targets.ndim != 2:
        raise ValueError("targets must be a 2-D matrix")
    tab = _table_values(tables)
    if isinstance(codes_or_soft, CodeBook):
        codes_or_soft = codes_or_soft.codes
    weights = np.asarray(codes_or_soft)
    if weights.ndim == 2 and np.issubdtype(weights.dtype, np.integer):
        outputs = reconstruct_embeddings(weights, tab, composer_params, variant)
    elif weights.ndim == 3:
        xs = np.einsum("ndk,dke->nde", as_float_array(weights, "weights"), tab)
        outputs, _ = composer_forward(variant, xs, composer_params)
    else:
        raise ValueError(
            "codes_or_soft must be (n, D) integer codes or an (n, D, K) weight array"
        )
    if outputs.shape != targets.shape:
        raise ValueError(f"composed shape {outputs.shape} does not match targets {targets.shape}")
    diff = outputs - targets
    return float(np.sum(diff * diff))


def _check_one_hot(o: np.ndarray):
    if not (np.all((o == 0.0) | (o == 1.0)) and np.all(o.sum(axis=-1) == 1.0)):
        raise AssertionError("straight-through forward must consume exact one-hot vectors")


def loss_and_gradients(
    targets, logits, tables, composer_params, *, variant: str, code_mode: str, temperature: float
):
    """Loss and exact gradients for a batch under the relaxed code paths.

    Returns ``(total_loss, per_symbol_losses, d_logits, d_tables, d_params)``
    in the summed-loss convention (no batch averaging). ``code_mode`` must
    be ``"ste"`` or ``"soft"``; frozen random codes have no logits gradient
    and take the hard path instead.
    """
    targets = as_float_array(targets, "targets")
    logits = as_float_array(logits, "logits")
    tab = _table_values(tables)
    soft = stable_softmax(logits, temperature)
    if code_mode == "ste":
        o = one_hot(argmax_codes(logits), logits.shape[-1])
        _check_one_hot(o)
    elif code_mode == "soft":
        o = soft
    else:
        raise ValueError(f"code_mode must be 'ste' or 'soft' here, got {code_mode!r}")

    xs = np.einsum("ndk,dke->nde", o, tab)
    outputs, tape = composer_forward(variant, xs, composer_params)
    diff = outputs - targets
    per_symbol = np.sum(diff * diff, axis=-1)
    upstream = 2.0 * diff
    d_xs, d_params = composer_backward(variant, tape, composer_params, upstream)
    d_tables = np.einsum("ndk,nde->dke", o, d_xs)
    d_o = np.einsum("nde,dke->ndk", d_xs, tab)
    d_logits = ste_backward(soft, d_o, temperature)
    return float(per_symbol.sum()), per_symbol, d_logits, d_tables, d_params


def hard_loss_and_gradients(targets, codes, tables, composer_params, *, variant: str):
    """Loss and gradients with fixed integer codes (no logits involved).

    Returns ``(total_loss, per_symbol_losses, d_tables, d_params)`` in the
    summed-loss convention.
    """
    targets = as_float_array(targets, "targets")
    codes = np.asarray(codes, dtype=np.int64)
    tab = _table_values(tables)
    xs = _gather_rows(tab, codes)
    outputs, tape = composer_forward(variant, xs, composer_params)
    diff = outputs - targets
    per_symbol = np.sum(diff * diff, axis=-1)
    upstream = 2.0 * diff
    d_xs, d_params = composer_backward(variant, tape, composer_params, upstream)
    d_tables = np.zeros_like(tab)
    np.add.at(d_tables, (np.arange(tab.shape[0])[None, :], codes), d_xs)
    return float(per_symbol.sum()), per_symbol, d_tables, d_params


def init_train_state(targets, spec: KdSpec, config: TrainConfig) -> TrainState:
    targets = as_float_array(targets, "targets")
    if targets.ndim != 2 or targets.shape[0] != spec.N:
        raise ValueError(
            f"targets must be an (N, d) matrix with N = {spec.N}, got shape {targets.shape}"
        )
    d_out = targets.shape[1]
    width = config.code_width or d_out
    rng = make_rng(config.seed)
    logits = init_code_logits(spec, rng).values
    tables = init_tables(spec.D, spec.K, width, rng).values
    params = init_composer_params(config.composer, width, d_out, rng)
    frozen = argmax_codes(logits) if config.code_mode == "random" else None
    return TrainState(
        spec=spec,
        logits=logits,
        tables=tables,
        composer_params=params,
        frozen_codes=frozen,
        rng=rng,
        d_out=d_out,
    )


def train_epoch(
    state: TrainState, targets, config: TrainConfig, epoch: int,
    divergence_floor: float | None = None,
) -> float:
    """Run one epoch of SGD in place; returns the mean per-symbol loss.

    Every symbol is visited once, in a freshly shuffled order when
    ``config.shuffle`` is set, otherwise in table order. The loss recorded
    for each batch is evaluated before its SGD step. A batch whose mean
    loss is non-finite or exceeds ``DIVERGENCE_FACTOR * divergence_floor``
    aborts the run with a diagnostic instead of overflowing silently.
    """
    targets = as_float_array(targets, "targets")
    n = state.spec.N
    temperature = config.schedule.at(epoch)
    order = state.rng.permutation(n) if config.shuffle else np.arange(n)
    lr = config.learning_rate
    total = 0.0
    for start in range(0, n, config.batch_size):
        batch = order[start : start + config.batch_size]
        scale = 1.0 / batch.size  # SGD steps use the mean batch loss
        if config.code_mode == "random":
            loss, per_symbol, d_tables, d_params = hard_loss_and_gradients(
                targets[batch], state.frozen_codes[batch], state.tables,
                state.composer_params, variant=config.composer,
            )
        else:
            loss, per_symbol, d_logits, d_tables, d_params = loss_and_gradients(
                targets[batch], state.logits[batch], state.tables,
                state.composer_params, variant=config.composer,
                code_mode=config.code_mode, temperature=temperature,
            )
        if not np.isfinite(loss):
            bad = int(batch[int(np.argmax(~np.isfinite(per_symbol)))])
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch}, symbol {bad}, temperature {temperature:g}",
                epoch=epoch, symbol=bad, temperature=temperature,
            )
        if divergence_floor is not None and loss * scale > DIVERGENCE_FACTOR * divergence_floor:
            bad = int(batch[int(np.argmax(per_symbol))])
            raise TrainingDivergedError(
                f"loss {loss * scale:g} exceeded {DIVERGENCE_FACTOR:g} x initial loss at "
                f"epoch {epoch}, symbol {bad}, temperature {temperature:g}; "
                f"lower the learning rate",
                epoch=epoch, symbol=bad, temperature=temperature,
            )
        total += loss
        if config.code_mode != "random":
            state.logits[batch] = sgd_step(state.logits[batch], scale * d_logits, lr)
        state.tables = sgd_step(state.tables, scale * d_tables, lr)
        state.composer_params = apply_gradients(
            state.composer_params, _scaled(d_params, scale), lr
        )
    return total / n


def _scaled(grads, scale: float):
    return type(grads)(**{f.name: scale * getattr(grads, f.name) for f in fields(grads)})


def _current_codes(state: TrainState) -> np.ndarray:
    if state.frozen_codes is not None:
        return state.frozen_codes
    return argmax_codes(state.logits)


def _initial_loss(state: TrainState, targets, config: TrainConfig) -> float:
    if config.code_mode == "soft":
        weights = stable_softmax(state.logits, config.schedule.at(0))
    else:
        weights = _current_codes(state)
    total = reconstruction_loss(
        targets, weights, state.tables, state.composer_params, config.composer
    )
    return total / state.spec.N


def learn_codes(targets, spec: KdSpec, config: TrainConfig) -> TrainReport:
    """Learn discrete codes, tables, and composer parameters for ``targets``.

    Runs ``config.epochs`` epochs with the temperature schedule evaluated
    at the epoch index. The returned report carries the full per-epoch
    curves and the final code book (the argmax of the trained logits, or
    the frozen codes in random mode). Identical configs replay bitwise.
    """
    targets = as_float_array(targets, "targets")
    state = init_train_state(targets, spec, config)
    initial_loss = _initial_loss(state, targets, config)
    floor = max(initial_loss, np.finfo(np.float64).tiny)

    losses = np.zeros(config.epochs)
    hard_losses = np.zeros(config.epochs)
    temperatures = np.zeros(config.epochs)
    change_fractions = np.zeros(config.epochs)
    prev_codes = _current_codes(state)

    for epoch in range(config.epochs):
        mean_loss = train_epoch(state, targets, config, epoch, divergence_floor=floor)
        if mean_loss > DIVERGENCE_FACTOR * floor:
            raise TrainingDivergedError(
                f"loss {mean_loss:g} exceeded {DIVERGENCE_FACTOR:g} x initial loss "
                f"{initial_loss:g} at epoch {epoch}; lower the learning rate",
                epoch=epoch, symbol=None, temperature=config.schedule.at(epoch),
            )
        codes_now = _current_codes(state)
        hard_total = reconstruction_loss(
            targets, codes_now, state.tables, state.composer_params, config.composer
        )
        losses[epoch] = mean_loss
        hard_losses[epoch] = hard_total / spec.N
        temperatures[epoch] = config.schedule.at(epoch)
        change_fractions[epoch] = float(np.mean(np.any(codes_now != prev_codes, axis=1)))
        prev_codes = codes_now

    return TrainReport(
        losses=losses,
        hard_losses=hard_losses,
        temperatures=temperatures,
        code_change_fractions=change_fractions,
        codebook=CodeBook(spec, prev_codes.copy()),
        tables=CodeEmbeddingTables(state.tables),
        composer_params=state.composer_params,
        config=config,
        initial_loss=initial_loss,
    )


def retrain_code_embeddings(targets, codebook: CodeBook, config: TrainConfig) -> RetrainResult:
    """Refit tables and composer against a fixed code book, from scratch.

    The codes are immutable here: every forward pass uses hard row
    indexing, so the relaxation machinery never runs. Returns freshly
    trained tables and composer parameters plus the final full-table loss
    (with ``epochs=0`` that is the initialization loss, untouched).
    """
    targets = as_float_array(targets, "targets")
    if targets.ndim != 2 or targets.shape[0] != codebook.spec.N:
        raise ValueError(
            f"targets shape {targets.shape} does not match codebook with N = {codebook.spec.N}"
        )
    spec = codebook.spec
    n, d_out = targets.shape
    width = config.code_width or d_out
    rng = make_rng(config.seed)
    tables = init_tables(spec.D, spec.K, width, rng).values
    params = init_composer_params(config.composer, width, d_out, rng)
    codes = codebook.codes

    losses = np.zeros(config.epochs)
    initial_loss = reconstruction_loss(targets, codes, tables, params, config.composer) / n
    floor = max(initial_loss, np.finfo(np.float64).tiny)
    lr = config.learning_rate
    for epoch in range(config.epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            scale = 1.0 / batch.size
            loss, per_symbol, d_tables, d_params = hard_loss_and_gradients(
                targets[batch], codes[batch], tables, params, variant=config.composer
            )
            if not np.isfinite(loss):
                bad = int(batch[int(np.argmax(~np.isfinite(per_symbol)))])
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, symbol {bad}",
                    epoch=epoch, symbol=bad, temperature=float("nan"),
                )
            total += loss
            tables = sgd_step(tables, scale * d_tables, lr)
            params = apply_gradients(params, _scaled(d_params, scale), lr)
        mean_loss = total / n
        if mean_loss > DIVERGENCE_FACTOR * floor:
            raise TrainingDivergedError(
                f"loss {mean_loss:g} exceeded {DIVERGENCE_FACTOR:g} x initial loss "
                f"{initial_loss:g} at epoch {epoch}; lower the learning rate",
                epoch=epoch, symbol=None, temperature=float("nan"),
            )
        losses[epoch] = mean_loss

    final_loss = reconstruction_loss(targets, codes, tables, params, config.composer) / n
    return RetrainResult(
        tables=CodeEmbeddingTables(tables),
        composer_params=params,
        final_loss=final_loss,
        losses=losses,
    )
