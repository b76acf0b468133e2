"""Quantitative accounting and quality metrics for a learned code system.

Parameter counting is exact integer arithmetic; everything else operates on
float64. Clustering agreement uses normalized mutual information computed
from the exact contingency table, and embedding-space quality is measured
by how well cosine nearest-neighbor lists survive reconstruction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import CodeBook, KdSpec, format_code
from .composer import composer_param_count
from .numerics import as_float_array

__all__ = [
    "CodeGroup",
    "CodeGroupReport",
    "ParamCount",
    "code_groups",
    "compression_rate",
    "mean_intra_group_cosine",
    "mean_pairwise_cosine",
    "neighbor_preservation",
    "nmi",
    "param_count",
]

NMI_AVERAGES = ("geometric", "arithmetic", "max")


@dataclass(frozen=True)
class ParamCount:
    """Embedding-parameter accounting for one code system configuration."""

    code_embedding_params: int
    composer_params: int
    total: int
    conventional_baseline: int

    def __post_init__(self):
        if self.total != self.code_embedding_params + self.composer_params:
            raise ValueError("total must equal code_embedding_params + composer_params")
        if min(self.code_embedding_params, self.composer_params, self.conventional_baseline) < 0:
            raise ValueError("parameter counts must be nonnegative")


def param_count(spec: KdSpec, code_width: int, embed_width: int, variant: str = "linear") -> ParamCount:
    """Exact parameter counts: D*K*code_width table entries plus the composer,
    against the conventional N*embed_width lookup table."""
    if code_width < 1 or embed_width < 1:
        raise ValueError("widths must be positive")
    code_params = spec.D * spec.K * code_width
    comp_params = composer_param_count(variant, code_width, embed_width)
    return ParamCount(
        code_embedding_params=code_params,
        composer_params=comp_params,
        total=code_params + comp_params,
        conventional_baseline=spec.N * embed_width,
    )


def compression_rate(counts: ParamCount, include_composer: bool = False) -> float:
    """Fraction of the conventional embedding-table size this system needs."""
    if counts.conventional_baseline <= 0:
        raise ValueError("conventional baseline must be positive")
    numer = counts.code_embedding_params
    if include_composer:
        numer += counts.composer_params
    return numer / counts.conventional_baseline


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def _first_occurrence_relabel(inverse: np.ndarray) -> np.ndarray:
    # canonical form: classes numbered by first occurrence, so partitions
    # that differ only by relabeling map to identical arrays
    _, first_idx, inv = np.unique(inverse, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first_idx))
    return rank[inv]


def nmi(assignment_a, assignment_b, average: str = "geometric") -> float:
    """Normalized mutual information between two partitions, in [0, 1].

    Computed from the exact contingency table; invariant under relabeling
    of either side. ``average`` selects the normalizing mean of the two
    entropies: geometric (default), arithmetic, or max. When both
    partitions are constant the score is 1.0; when exactly one is constant
    they cannot agree beyond chance and the score is 0.0.
    """
    if average not in NMI_AVERAGES:
        raise ValueError(f"average must be one of {NMI_AVERAGES}, got {average!r}")
    a = np.asarray(assignment_a).ravel()
    b = np.asarray(assignment_b).ravel()
    if a.shape != b.shape:
        raise ValueError(f"assignments differ in length: {a.shape[0]} vs {b.shape[0]}")
    if a.size == 0:
        raise ValueError("assignments must be non-empty")
    # Canonical argument order makes nmi(a, b) and nmi(b, a) run the exact
    # same float operations, so symmetry holds bitwise.
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    if np.array_equal(_first_occurrence_relabel(ia), _first_occurrence_relabel(ib)):
        return 1.0  # identical partitions up to relabeling, exactly
    if (ia.max(initial=0), ia.tobytes()) > (ib.max(initial=0), ib.tobytes()):
        ia, ib = ib, ia
    ka = int(ia.max()) + 1
    kb = int(ib.max()) + 1
    n = a.size
    table = np.zeros((ka, kb), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    h_a = _entropy(table.sum(axis=1), n)
    h_b = _entropy(table.sum(axis=0), n)
    if h_a == 0.0 and h_b == 0.0:
        return 1.0
    if h_a == 0.0 or h_b == 0.0:
        return 0.0

    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(pa, pb)[nz]
    info = float(np.sum(pij * np.log(pij / outer)))
    if average == "geometric":
        denom = math.sqrt(h_a * h_b)
    elif average == "arithmetic":
        denom = 0.5 * (h_a + h_b)
    else:
        denom = max(h_a, h_b)
    return float(min(1.0, max(0.0, info / denom)))


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return matrix / np.where(norms > 0, norms, 1.0)


def _top_k_neighbors(unit: np.ndarray, k: int, chunk: int = 512) -> np.ndarray:
    # Row-chunked so the full N x N similarity matrix never materializes.
    n = unit.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        sims = unit[start:stop] @ unit.T
        sims[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        out[start:stop] = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    return out


def neighbor_preservation(original, reconstructed, k: int) -> float:
    """Mean overlap of the top-k cosine neighbor lists before and after
    reconstruction, self excluded; 1.0 means every list survived intact."""
    orig = as_float_array(original, "original")
    rec = as_float_array(reconstructed, "reconstructed")
    if orig.shape != rec.shape or orig.ndim != 2:
        raise ValueError(f"matrices must share an (N, d) shape, got {orig.shape} and {rec.shape}")
    n = orig.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < N = {n}, got {k}")
    nn_orig = _top_k_neighbors(_unit_rows(orig), k)
    nn_rec = _top_k_neighbors(_unit_rows(rec), k)
    overlaps = [
        len(set(nn_orig[i]).intersection(nn_rec[i])) / k for i in range(n)
    ]
    return float(np.mean(overlaps))


@dataclass(frozen=True)
class CodeGroup:
    code: tuple[int, ...]
    labels: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.labels)


@dataclass
class CodeGroupReport:
    """Symbols partitioned by their full code, largest groups first."""

    groups: list[CodeGroup]

    def __post_init__(self):
        sizes = [g.size for g in self.groups]
        if any(s < 1 for s in sizes):
            raise ValueError("code groups cannot be empty")
        self.total_symbols = sum(sizes)

    def filtered(self, min_group_size: int = 1) -> list[CodeGroup]:
        return [g for g in self.groups if g.size >= min_group_size]

    def render_lines(self, min_group_size: int = 1) -> list[str]:
        return [
            f"{format_code(g.code)}\t{' '.join(g.labels)}"
            for g in self.filtered(min_group_size)
        ]


def code_groups(codebook: CodeBook, labels: list[str] | None = None) -> CodeGroupReport:
    """Group symbols sharing the same full code.

    Ordering is deterministic: group size descending, then the code tuple
    lexicographically.
    """
    if labels is None:
        labels = codebook.labels
    if labels is None:
        raise ValueError("code_groups requires symbol labels")
    if len(labels) != codebook.spec.N:
        raise ValueError(f"got {len(labels)} labels for {codebook.spec.N} symbols")
    buckets: dict[tuple[int, ...], list[str]] = {}
    for row, label in zip(codebook.codes, labels):
        buckets.setdefault(tuple(int(c) for c in row), []).append(label)
    ordered = sorted(buckets.items(), key=lambda item: (-len(item[1]), item[0]))
    return CodeGroupReport([CodeGroup(code, tuple(group)) for code, group in ordered])


def mean_pairwise_cosine(vectors) -> float:
    """Mean cosine similarity over all unordered distinct pairs."""
    v = _unit_rows(as_float_array(vectors, "vectors"))
    n = v.shape[0]
    if n < 2:
        raise ValueError("need at least two vectors")
    sims = v @ v.T
    total = (sims.sum() - np.trace(sims)) / 2.0
    return float(total / (n * (n - 1) / 2))


def mean_intra_group_cosine(vectors, codes) -> float:
    """Mean cosine similarity over all pairs of symbols sharing a full code.

    Pools all intra-group pairs; singleton groups contribute nothing.
    Raises when every group is a singleton.
    """
    v = _unit_rows(as_float_array(vectors, "vectors"))
    codes = np.asarray(codes)
    if codes.shape[0] != v.shape[0]:
        raise ValueError("codes and vectors must align")
    _, inverse = np.unique(codes, axis=0, return_inverse=True)
    total = 0.0
    pairs = 0
    for group_id in range(inverse.max() + 1):
        members = np.flatnonzero(inverse == group_id)
        if members.size < 2:
            continue
        sims = v[members] @ v[members].T
        m = members.size
        total += (sims.sum() - np.trace(sims)) / 2.0
        pairs += m * (m - 1) // 2
    if pairs == 0:
        raise ValueError("no code group holds more than one symbol")
    return float(total / pairs)
