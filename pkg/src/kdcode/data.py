"""Datasets and persistence: synthetic clusters, text embedding files,
code book TSVs, binary checkpoints, and key/value run reports.

Every ``load(save(x))`` round trip is exact: text floats are written with
17 significant digits (enough to reproduce any float64 bit pattern) and
checkpoints store raw little-endian float64 buffers. Parsers reject
malformed input with a structured error naming the offending location
instead of crashing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec import CodeBook, KdSpec, format_code
from .composer import CodeEmbeddingTables, LinearComposerParams, LstmComposerParams
from .numerics import as_float_array, make_rng

__all__ = [
    "Checkpoint",
    "DataFormatError",
    "EmbeddingMatrix",
    "SyntheticSpec",
    "generate_clusters",
    "load_checkpoint",
    "load_codebook",
    "load_embeddings_text",
    "load_labels_text",
    "load_report",
    "save_checkpoint",
    "save_codebook",
    "save_embeddings_text",
    "save_labels_text",
    "save_report",
]

CHECKPOINT_MAGIC = b"KDC1"

_VARIANT_CODES = {"linear": 0, "lstm": 1}
_VARIANT_NAMES = {code: name for name, code in _VARIANT_CODES.items()}

# 17 significant digits round-trip any IEEE double exactly.
_FLOAT_FMT = "{:.17g}"


class DataFormatError(ValueError):
    """Malformed file content, with the location that failed."""

    def __init__(self, path, message: str, line: int | None = None, column: int | None = None):
        self.path = str(path)
        self.line = line
        self.column = column
        where = self.path
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")


@dataclass
class EmbeddingMatrix:
    """A table of N embedding vectors of width d, optionally labeled."""

    vectors: np.ndarray
    labels: list[str] | None = None

    def __post_init__(self):
        vectors = as_float_array(self.vectors, "vectors")
        if vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {vectors.shape}")
        self.vectors = vectors
        if self.labels is not None:
            if len(self.labels) != vectors.shape[0]:
                raise ValueError(
                    f"got {len(self.labels)} labels for {vectors.shape[0]} vectors"
                )
            if len(set(self.labels)) != len(self.labels):
                raise ValueError("labels must be unique")

    @property
    def n_symbols(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class SyntheticSpec:
    """Well-separated Gaussian clusters; separation is center_scale / noise_sigma."""

    num_points: int
    num_clusters: int
    dim: int
    center_scale: float = 10.0
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.num_points < 1 or self.num_clusters < 1 or self.dim < 1:
            raise ValueError("num_points, num_clusters, and dim must be positive")
        if self.num_clusters > self.num_points:
            raise ValueError("num_clusters cannot exceed num_points")
        if self.center_scale <= 0:
            raise ValueError("center_scale must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")

    @property
    def separation_ratio(self) -> float:
        return self.center_scale / self.noise_sigma if self.noise_sigma > 0 else float("inf")


def generate_clusters(spec: SyntheticSpec) -> tuple[EmbeddingMatrix, np.ndarray]:
    """Sample clustered vectors plus their ground-truth cluster labels.

    Cluster centers are Gaussian with scale ``center_scale``; points are
    assigned round-robin (point i belongs to cluster i mod C) and jittered
    with Gaussian noise of scale ``noise_sigma``. Deterministic per seed.
    """
    rng = make_rng(spec.seed)
    centers = rng.normal(0.0, spec.center_scale, size=(spec.num_clusters, spec.dim))
    true_labels = np.arange(spec.num_points, dtype=np.int64) % spec.num_clusters
    noise = rng.normal(0.0, spec.noise_sigma, size=(spec.num_points, spec.dim)) \
        if spec.noise_sigma > 0 else np.zeros((spec.num_points, spec.dim))
    vectors = centers[true_labels] + noise
    digits = max(5, len(str(spec.num_points - 1)))
    labels = [f"n{i:0{digits}d}" for i in range(spec.num_points)]
    return EmbeddingMatrix(vectors, labels), true_labels


# ---------------------------------------------------------------------------
# text embedding files: one "label v1 v2 ... vd" line per symbol


def save_embeddings_text(path, embeddings: EmbeddingMatrix):
    if embeddings.labels is None:
        raise ValueError("text embedding files require symbol labels")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for label, row in zip(embeddings.labels, embeddings.vectors):
            values = " ".join(_FLOAT_FMT.format(v) for v in row)
            fh.write(f"{label} {values}\n")


def load_embeddings_text(path) -> EmbeddingMatrix:
    """Parse a one-symbol-per-line embedding file.

    Accepts LF and CRLF endings. Raises :class:`DataFormatError` naming the
    line (and token column, for non-numeric values) of the first problem.
    """
    labels: list[str] = []
    rows: list[np.ndarray] = []
    seen: dict[str, int] = {}
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                raise DataFormatError(path, "blank line", line=lineno)
            tokens = line.split()
            if len(tokens) < 2:
                raise DataFormatError(path, "expected a label and at least one value", line=lineno)
            label = tokens[0]
            if label in seen:
                raise DataFormatError(
                    path, f"duplicate label {label!r} (first seen on line {seen[label]})",
                    line=lineno,
                )
            seen[label] = lineno
            if width is None:
                width = len(tokens) - 1
            elif len(tokens) - 1 != width:
                raise DataFormatError(
                    path, f"expected {width} values, found {len(tokens) - 1}", line=lineno
                )
            values = np.empty(width)
            for col, token in enumerate(tokens[1:], start=2):
                try:
                    values[col - 2] = float(token)
                except ValueError:
                    raise DataFormatError(
                        path, f"non-numeric value {token!r}", line=lineno, column=col
                    ) from None
            if not np.all(np.isfinite(values)):
                raise DataFormatError(path, "non-finite value", line=lineno)
            labels.append(label)
            rows.append(values)
    if not rows:
        raise DataFormatError(path, "file contains no embedding rows")
    return EmbeddingMatrix(np.vstack(rows), labels)


# ---------------------------------------------------------------------------
# label files: one "label<TAB>integer" line per symbol


def save_labels_text(path, labels: list[str], values):
    values = np.asarray(values, dtype=np.int64)
    if len(labels) != values.shape[0]:
        raise ValueError("labels and values must align")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for label, value in zip(labels, values):
            fh.write(f"{label}\t{int(value)}\n")


def load_labels_text(path) -> tuple[list[str], np.ndarray]:
    labels: list[str] = []
    values: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataFormatError(path, "expected 'label<TAB>integer'", line=lineno)
            try:
                values.append(int(parts[1]))
            except ValueError:
                raise DataFormatError(
                    path, f"non-integer value {parts[1]!r}", line=lineno, column=2
                ) from None
            labels.append(parts[0])
    if not labels:
        raise DataFormatError(path, "file contains no label rows")
    return labels, np.asarray(values, dtype=np.int64)


# ---------------------------------------------------------------------------
# code book TSV: "#kd K=<K> D=<D> N=<N>" header, then "label<TAB>3-1-0-4" rows


def save_codebook(path, codebook: CodeBook):
    spec = codebook.spec
    labels = codebook.labels or [str(i) for i in range(spec.N)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#kd K={spec.K} D={spec.D} N={spec.N}\n")
        for label, row in zip(labels, codebook.codes):
            fh.write(f"{label}\t{format_code(row)}\n")


def load_codebook(path) -> CodeBook:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\r\n") for line in fh]
    if not lines:
        raise DataFormatError(path, "empty code book file")
    header = lines[0]
    parts = header.split()
    if len(parts) != 4 or parts[0] != "#kd":
        raise DataFormatError(path, f"bad header {header!r}", line=1)
    fields = {}
    for part in parts[1:]:
        key, _, value = part.partition("=")
        if key not in ("K", "D", "N") or not value.isdigit():
            raise DataFormatError(path, f"bad header field {part!r}", line=1)
        fields[key] = int(value)
    if set(fields) != {"K", "D", "N"}:
        raise DataFormatError(path, "header must define K, D, and N", line=1)
    try:
        # Shared-code (quantization) books are legal on disk; infer the regime.
        spec = KdSpec(fields["K"], fields["D"], fields["N"], allow_shared_codes=True)
        if spec.covers_all_symbols:
            spec = KdSpec(fields["K"], fields["D"], fields["N"])
    except ValueError as exc:
        raise DataFormatError(path, str(exc), line=1) from None

    body = lines[1:]
    if body and body[-1] == "":
        body = body[:-1]
    if len(body) != spec.N:
        raise DataFormatError(
            path, f"header declares N={spec.N} symbols but body has {len(body)} rows"
        )
    labels: list[str] = []
    codes = np.zeros((spec.N, spec.D), dtype=np.int64)
    for i, line in enumerate(body):
        lineno = i + 2
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise DataFormatError(path, "expected 'label<TAB>code'", line=lineno)
        components = parts[1].split("-")
        if len(components) != spec.D:
            raise DataFormatError(
                path, f"expected {spec.D} code components, found {len(components)}", line=lineno
            )
        for j, comp in enumerate(components):
            if not comp.isdigit():
                raise DataFormatError(path, f"bad code component {comp!r}", line=lineno)
            value = int(comp)
            if value >= spec.K:
                raise DataFormatError(
                    path, f"code component {value} out of range for K={spec.K}", line=lineno
                )
            codes[i, j] = value
        labels.append(parts[0])
    if len(set(labels)) != len(labels):
        raise DataFormatError(path, "duplicate symbol labels")
    return CodeBook(spec, codes, labels)


# ---------------------------------------------------------------------------
# binary checkpoints


@dataclass
class Checkpoint:
    variant: str
    tables: CodeEmbeddingTables
    composer_params: LinearComposerParams | LstmComposerParams
    logits: np.ndarray | None = None  # (N, D, K)


def _param_arrays(variant: str, params) -> list[np.ndarray]:
    if variant == "linear":
        return [params.proj]
    return [
        params.u_forget, params.u_input, params.u_output, params.u_cell,
        params.b_forget, params.b_input, params.b_output, params.b_cell,
        params.proj,
    ]


def save_checkpoint(path, tables: CodeEmbeddingTables, composer_params, logits=None):
    """Write a byte-exact binary container.

    Layout: magic ``KDC1``, variant byte, has-logits byte, five u64
    little-endian dimensions (K, D, width, d_out, N), then raw float64
    little-endian arrays: the tables, the composer parameters in declared
    field order, and optionally the (N, D, K) logits.
    """
    if isinstance(composer_params, LinearComposerParams):
        variant = "linear"
    elif isinstance(composer_params, LstmComposerParams):
        variant = "lstm"
    else:
        raise ValueError(f"unsupported composer params type {type(composer_params).__name__}")
    values = tables.values
    d, k, width = values.shape
    d_out = composer_params.proj.shape[1]
    if logits is not None:
        logits = as_float_array(logits, "logits")
        if logits.ndim != 3 or logits.shape[1] != d or logits.shape[2] != k:
            raise ValueError(
                f"logits shape {logits.shape} does not match tables (D={d}, K={k})"
            )
    n = 0 if logits is None else logits.shape[0]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<BB", _VARIANT_CODES[variant], 0 if logits is None else 1))
        fh.write(struct.pack("<5Q", k, d, width, d_out, n))
        for arr in [values, *_param_arrays(variant, composer_params)]:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        if logits is not None:
            fh.write(np.ascontiguousarray(logits, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    blob = Path(path).read_bytes()
    header_size = 4 + 2 + 5 * 8
    if len(blob) < header_size:
        raise DataFormatError(path, f"truncated header: {len(blob)} bytes < {header_size}")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise DataFormatError(path, f"bad magic {blob[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    variant_code, has_logits = struct.unpack_from("<BB", blob, 4)
    if variant_code not in _VARIANT_NAMES:
        raise DataFormatError(path, f"unknown composer variant code {variant_code}")
    if has_logits not in (0, 1):
        raise DataFormatError(path, f"bad has-logits flag {has_logits}")
    variant = _VARIANT_NAMES[variant_code]
    k, d, width, d_out, n = struct.unpack_from("<5Q", blob, 6)

    shapes = [(d, k, width)]
    if variant == "linear":
        shapes.append((width, d_out))
    else:
        shapes.extend([(width, width)] * 4)
        shapes.extend([(width,)] * 4)
        shapes.append((width, d_out))
    if has_logits:
        shapes.append((n, d, k))
    expected = header_size + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(blob) != expected:
        raise DataFormatError(
            path, f"expected {expected} bytes, found {len(blob)}"
        )

    offset = header_size
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        arrays.append(arr.astype(np.float64).reshape(shape))
        offset += 8 * count
    tables = CodeEmbeddingTables(arrays[0])
    if variant == "linear":
        params = LinearComposerParams(proj=arrays[1])
        rest = arrays[2:]
    else:
        params = LstmComposerParams(
            u_forget=arrays[1], u_input=arrays[2], u_output=arrays[3], u_cell=arrays[4],
            b_forget=arrays[5], b_input=arrays[6], b_output=arrays[7], b_cell=arrays[8],
            proj=arrays[9],
        )
        rest = arrays[10:]
    logits = rest[0] if has_logits else None
    return Checkpoint(variant=variant, tables=tables, composer_params=params, logits=logits)


# ---------------------------------------------------------------------------
# run reports: one "key<TAB>value" line per metric


def _format_value(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _FLOAT_FMT.format(float(value))
    return str(value)


def save_report(path, entries: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in entries.items():
            if "\t" in str(key) or "\n" in str(key):
                raise ValueError(f"report key {key!r} contains a separator")
            fh.write(f"{key}\t{_format_value(value)}\n")


def load_report(path) -> dict[str, str]:
    entries: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line:
                continue
            key, sep, value = line.partition("\t")
            if not sep:
                raise DataFormatError(path, "expected 'key<TAB>value'", line=lineno)
            entries[key] = value
    return entries
