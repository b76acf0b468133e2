"""Scikit-learn style estimator wrapping the code learner.

The encoder is transductive: codes are learned per symbol of the fitted
matrix, so ``transform`` is only defined for the fitted data (like
clustering estimators, there is no out-of-sample encoder). Reconstruction
of arbitrary codes is available through ``inverse_transform``.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from .codec import KdSpec, TemperatureSchedule
from .trainer import TrainConfig, learn_codes, reconstruct_embeddings, retrain_code_embeddings

__all__ = ["KDCodeEncoder"]


class KDCodeEncoder(TransformerMixin, BaseEstimator):
    """Compress an embedding matrix into K-way D-dimensional discrete codes.

    ``fit(X)`` treats each row of X as the pretrained embedding of one
    symbol and learns, end to end: a D-component code per row (each
    component in ``[0, K)``), one (K x code_width) embedding table per code
    dimension, and a composer that maps the selected table rows back to an
    embedding. ``fit_transform(X)`` returns the integer code matrix;
    ``inverse_transform(codes)`` composes embeddings back from codes.

    Parameters
    ----------
    K : alphabet size of each code component.
    D : number of code components per symbol; K**D must be >= n_samples
        unless ``allow_shared_codes`` opts into deliberate quantization.
    code_width : width of the code embedding vectors (default: the input width).
    composer : "linear" (sum then project) or "lstm" (recurrent over components).
    code_mode : "ste" (hard forward / soft backward), "soft", or "random"
        (frozen random codes, tables and composer still train).
    learning_rate, epochs, batch_size, shuffle : plain SGD knobs.
    t0, decay_rate, schedule : temperature annealing t0 / (1 + decay_rate * t),
        or a constant t0 when ``schedule="constant"``.
    seed : controls initialization and visit order; runs replay bitwise.

    Attributes
    ----------
    codes_ : (n_samples, D) int64 learned codes.
    codebook_ : the same codes as a :class:`kdcode.codec.CodeBook`.
    tables_ : learned :class:`kdcode.composer.CodeEmbeddingTables`.
    composer_params_ : learned composer parameters.
    report_ : full :class:`kdcode.trainer.TrainReport` with per-epoch curves.
    """

    def __init__(
        self,
        K: int = 50,
        D: int = 10,
        code_width: int | None = None,
        composer: str = "linear",
        code_mode: str = "ste",
        learning_rate: float = 0.01,
        epochs: int = 30,
        batch_size: int = 1,
        t0: float = 1.0,
        decay_rate: float = 1.0,
        schedule: str = "scheduled",
        shuffle: bool = True,
        seed: int = 0,
        allow_shared_codes: bool = False,
    ):
        self.K = K
        self.D = D
        self.code_width = code_width
        self.composer = composer
        self.code_mode = code_mode
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.t0 = t0
        self.decay_rate = decay_rate
        self.schedule = schedule
        self.shuffle = shuffle
        self.seed = seed
        self.allow_shared_codes = allow_shared_codes

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            schedule=TemperatureSchedule(self.t0, self.decay_rate, self.schedule),
            composer=self.composer,
            code_mode=self.code_mode,
            code_width=self.code_width,
            shuffle=self.shuffle,
        )

    def fit(self, X, y=None):
        """Learn codes, tables, and composer parameters for the rows of X."""
        X = check_array(X, dtype=np.float64)
        spec = KdSpec(self.K, self.D, X.shape[0], allow_shared_codes=self.allow_shared_codes)
        report = learn_codes(X, spec, self._train_config())
        self.report_ = report
        self.codebook_ = report.codebook
        self.codes_ = report.codebook.codes
        self.tables_ = report.tables
        self.composer_params_ = report.composer_params
        self.loss_curve_ = report.losses
        self.hard_loss_curve_ = report.hard_losses
        self.n_features_in_ = X.shape[1]
        self._fit_X = X.copy()
        return self

    def _check_fitted(self):
        if not hasattr(self, "codes_"):
            raise NotFittedError("this KDCodeEncoder instance is not fitted yet")

    def transform(self, X):
        """Return the learned codes of the fitted matrix.

        Codes exist per fitted symbol, so X must be the fitted matrix
        itself (row order included).
        """
        self._check_fitted()
        X = check_array(X, dtype=np.float64)
        if X.shape != self._fit_X.shape or not np.array_equal(X, self._fit_X):
            raise ValueError(
                "codes are learned per symbol of the fitted matrix; "
                "transform accepts only the matrix passed to fit"
            )
        return self.codes_.copy()

    def inverse_transform(self, codes) -> np.ndarray:
        """Compose embeddings from (n, D) integer codes."""
        self._check_fitted()
        return reconstruct_embeddings(
            np.asarray(codes, dtype=np.int64), self.tables_, self.composer_params_, self.composer
        )

    def reconstruct(self) -> np.ndarray:
        """Embeddings composed from the learned codes of the fitted matrix."""
        self._check_fitted()
        return self.inverse_transform(self.codes_)

    def score(self, X=None, y=None) -> float:
        """Negative mean per-symbol squared reconstruction error (higher is better).

        Scores the fitted table; like ``transform``, X may only be the
        matrix passed to fit (codes exist for those rows alone).
        """
        self._check_fitted()
        if X is not None:
            X = check_array(X, dtype=np.float64)
            if X.shape != self._fit_X.shape or not np.array_equal(X, self._fit_X):
                raise ValueError(
                    "score is defined on the fitted matrix only; "
                    "pass X=None or the matrix given to fit"
                )
        diff = self.reconstruct() - self._fit_X
        return -float(np.mean(np.sum(diff * diff, axis=1)))

    def refit_embeddings(self, epochs: int | None = None, seed: int | None = None):
        """Second phase: re-learn tables and composer with the codes held fixed.

        Replaces ``tables_`` and ``composer_params_`` with freshly
        initialized, re-trained values and records the resulting loss in
        ``refit_loss_``. Returns self.
        """
        self._check_fitted()
        config = self._train_config()
        if epochs is not None or seed is not None:
            config = replace(
                config,
                epochs=config.epochs if epochs is None else epochs,
                seed=config.seed if seed is None else seed,
            )
        result = retrain_code_embeddings(self._fit_X, self.codebook_, config)
        self.tables_ = result.tables
        self.composer_params_ = result.composer_params
        self.refit_loss_ = result.final_loss
        return self
