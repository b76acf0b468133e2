"""Compress embedding tables into K-way D-dimensional discrete codes.

Instead of storing one embedding vector per symbol, each symbol gets a
short discrete code (D components, each one of K values), a small set of
per-dimension code-embedding tables, and a composition function that maps
the selected table rows back to a full embedding vector. Codes are learned
end to end against a pretrained embedding matrix by minimizing squared
reconstruction error with a straight-through estimator whose softmax
relaxation is annealed by a temperature schedule.

The high-level entry point is :class:`KDCodeEncoder` (scikit-learn style);
the functional layer underneath (``learn_codes``, ``retrain_code_embeddings``)
and the ``kdcode`` command line expose the same machinery.
"""

from .codec import (
    CodeBook,
    CodeLogits,
    KdSpec,
    TemperatureSchedule,
    code_space_utilization,
    collision_free_probability,
    collision_free_probability_detail,
    extract_codes,
    min_code_dim,
    ste_backward,
    ste_forward,
)
from .composer import (
    CodeEmbeddingTables,
    LinearComposerParams,
    LstmComposerParams,
    compose_linear,
    compose_lstm,
    composer_param_count,
    embed_code_dimension,
    lstm_step,
)
from .data import (
    Checkpoint,
    DataFormatError,
    EmbeddingMatrix,
    SyntheticSpec,
    generate_clusters,
    load_checkpoint,
    load_codebook,
    load_embeddings_text,
    save_checkpoint,
    save_codebook,
    save_embeddings_text,
)
from .estimator import KDCodeEncoder
from .evaluation import (
    ParamCount,
    code_groups,
    compression_rate,
    neighbor_preservation,
    nmi,
    param_count,
)
from .numerics import finite_diff_gradient, make_rng, sgd_step, stable_softmax
from .trainer import (
    TrainConfig,
    TrainReport,
    TrainingDivergedError,
    learn_codes,
    reconstruct_embeddings,
    reconstruction_loss,
    retrain_code_embeddings,
)

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "CodeBook",
    "CodeEmbeddingTables",
    "CodeLogits",
    "DataFormatError",
    "EmbeddingMatrix",
    "KDCodeEncoder",
    "KdSpec",
    "LinearComposerParams",
    "LstmComposerParams",
    "ParamCount",
    "SyntheticSpec",
    "TemperatureSchedule",
    "TrainConfig",
    "TrainReport",
    "TrainingDivergedError",
    "code_groups",
    "code_space_utilization",
    "collision_free_probability",
    "collision_free_probability_detail",
    "compose_linear",
    "compose_lstm",
    "composer_param_count",
    "compression_rate",
    "embed_code_dimension",
    "extract_codes",
    "finite_diff_gradient",
    "generate_clusters",
    "learn_codes",
    "load_checkpoint",
    "load_codebook",
    "load_embeddings_text",
    "lstm_step",
    "make_rng",
    "min_code_dim",
    "neighbor_preservation",
    "nmi",
    "param_count",
    "reconstruct_embeddings",
    "reconstruction_loss",
    "retrain_code_embeddings",
    "save_checkpoint",
    "save_codebook",
    "save_embeddings_text",
    "sgd_step",
    "stable_softmax",
    "ste_backward",
    "ste_forward",
]
