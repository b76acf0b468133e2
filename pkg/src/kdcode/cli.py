"""Command-line pipeline: generate data, learn codes, retrain, evaluate, inspect.

Every subcommand echoes its fully resolved configuration (one
``config<TAB>name<TAB>value`` line per flag) before doing any work, so a
run can be reproduced byte for byte from its log. Failures print a single
``error<TAB>message`` line on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .codec import KdSpec, TemperatureSchedule, min_code_dim
from .data import (
    DataFormatError,
    SyntheticSpec,
    generate_clusters,
    load_checkpoint,
    load_codebook,
    load_embeddings_text,
    load_labels_text,
    save_checkpoint,
    save_codebook,
    save_embeddings_text,
    save_labels_text,
    save_report,
)
from .evaluation import code_groups, compression_rate, neighbor_preservation, nmi, param_count
from .trainer import (
    TrainConfig,
    TrainingDivergedError,
    learn_codes,
    reconstruct_embeddings,
    retrain_code_embeddings,
)

__all__ = ["main"]


def _echo_config(args: argparse.Namespace):
    skip = {"func"}
    for name in sorted(vars(args)):
        if name in skip:
            continue
        print(f"config\t{name}\t{getattr(args, name)}")


def _add_train_flags(parser: argparse.ArgumentParser, default_epochs: int = 30):
    parser.add_argument("--lr", type=float, default=0.01, help="SGD learning rate")
    parser.add_argument("--epochs", type=int, default=default_epochs)
    parser.add_argument("--batch-size", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--dprime", type=int, default=None,
                        help="code embedding width (default: the input width)")
    parser.add_argument("--composer", choices=["linear", "lstm"], default="linear")
    parser.add_argument("--no-shuffle", action="store_true",
                        help="visit symbols in table order instead of reshuffling per epoch")


def _train_config(args: argparse.Namespace, code_mode: str = "ste") -> TrainConfig:
    schedule = TemperatureSchedule(
        t0=getattr(args, "t0", 1.0),
        decay_rate=getattr(args, "decay_rate", 1.0),
        mode=getattr(args, "schedule", "scheduled"),
    )
    return TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        schedule=schedule,
        composer=args.composer,
        code_mode=code_mode,
        code_width=args.dprime,
        shuffle=not args.no_shuffle,
    )


def _code_partition(codes: np.ndarray) -> np.ndarray:
    return np.unique(codes, axis=0, return_inverse=True)[1]


def _aligned_labels(embeddings, labels_path) -> np.ndarray:
    names, values = load_labels_text(labels_path)
    lookup = dict(zip(names, values.tolist()))
    missing = [lab for lab in embeddings.labels if lab not in lookup]
    if missing:
        raise ValueError(f"labels file lacks {len(missing)} symbols, e.g. {missing[0]!r}")
    return np.asarray([lookup[lab] for lab in embeddings.labels], dtype=np.int64)


def cmd_gen_synthetic(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        num_points=args.num_points,
        num_clusters=args.num_clusters,
        dim=args.dim,
        center_scale=args.center_scale,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    embeddings, true_labels = generate_clusters(spec)
    save_embeddings_text(args.out_embeddings, embeddings)
    save_labels_text(args.out_labels, embeddings.labels, true_labels)
    if args.out_meta:
        save_report(args.out_meta, {
            "num_points": spec.num_points,
            "num_clusters": spec.num_clusters,
            "dim": spec.dim,
            "center_scale": spec.center_scale,
            "noise_sigma": spec.noise_sigma,
            "separation_ratio": spec.separation_ratio,
            "seed": spec.seed,
        })
    print(f"generated\tN\t{embeddings.n_symbols}")
    print(f"generated\td\t{embeddings.width}")
    print(f"generated\tclusters\t{spec.num_clusters}")
    return 0


def cmd_learn_codes(args: argparse.Namespace) -> int:
    embeddings = load_embeddings_text(args.embeddings)
    spec = KdSpec(args.K, args.D, embeddings.n_symbols,
                  allow_shared_codes=args.allow_shared_codes)
    config = _train_config(args, code_mode=args.code_mode)
    report = learn_codes(embeddings.vectors, spec, config)

    for epoch in range(config.epochs):
        print(
            f"epoch\t{epoch}\tloss\t{report.losses[epoch]:.6g}"
            f"\ttemperature\t{report.temperatures[epoch]:.6g}"
            f"\tcodes_changed\t{report.code_change_fractions[epoch]:.6g}"
            f"\thard_loss\t{report.hard_losses[epoch]:.6g}"
        )

    codebook = report.codebook.with_labels(embeddings.labels)
    save_codebook(args.out_codebook, codebook)
    save_checkpoint(args.out_checkpoint, report.tables, report.composer_params)
    entries = {
        "K": spec.K, "D": spec.D, "N": spec.N,
        "composer": config.composer, "code_mode": config.code_mode,
        "initial_loss": report.initial_loss,
        "final_loss": report.losses[-1] if config.epochs else report.initial_loss,
        "final_hard_loss": report.hard_losses[-1] if config.epochs else report.initial_loss,
    }
    for epoch in range(config.epochs):
        entries[f"loss.{epoch}"] = report.losses[epoch]
        entries[f"temperature.{epoch}"] = report.temperatures[epoch]
        entries[f"codes_changed.{epoch}"] = report.code_change_fractions[epoch]
        entries[f"hard_loss.{epoch}"] = report.hard_losses[epoch]
    if args.labels:
        truth = _aligned_labels(embeddings, args.labels)
        score = nmi(_code_partition(codebook.codes), truth)
        entries["nmi"] = score
        print(f"metric\tnmi\t{score:.6g}")
    save_report(args.out_report, entries)
    final_hard = entries["final_hard_loss"]
    print(f"metric\tfinal_hard_loss\t{final_hard:.6g}")
    return 0 if np.isfinite(final_hard) else 1


def cmd_retrain(args: argparse.Namespace) -> int:
    embeddings = load_embeddings_text(args.embeddings)
    codebook = load_codebook(args.codebook)
    if codebook.spec.N != embeddings.n_symbols:
        raise ValueError(
            f"code book has N={codebook.spec.N} but embeddings have {embeddings.n_symbols} rows"
        )
    config = _train_config(args)
    result = retrain_code_embeddings(embeddings.vectors, codebook, config)
    save_checkpoint(args.out_checkpoint, result.tables, result.composer_params)
    entries = {
        "K": codebook.spec.K, "D": codebook.spec.D, "N": codebook.spec.N,
        "composer": config.composer,
        "final_loss": result.final_loss,
    }
    for epoch in range(config.epochs):
        entries[f"loss.{epoch}"] = result.losses[epoch]
    save_report(args.out_report, entries)
    print(f"metric\tfinal_loss\t{result.final_loss:.6g}")
    return 0 if np.isfinite(result.final_loss) else 1


def cmd_evaluate(args: argparse.Namespace) -> int:
    embeddings = load_embeddings_text(args.embeddings)
    codebook = load_codebook(args.codebook)
    checkpoint = load_checkpoint(args.checkpoint)
    if codebook.spec.N != embeddings.n_symbols:
        raise ValueError(
            f"code book has N={codebook.spec.N} but embeddings have {embeddings.n_symbols} rows"
        )
    if args.nmi and not args.labels:
        raise ValueError("--nmi requires --labels")

    spec = codebook.spec
    width = checkpoint.tables.width
    reconstructed = reconstruct_embeddings(
        codebook.codes, checkpoint.tables, checkpoint.composer_params, checkpoint.variant
    )
    diff = reconstructed - embeddings.vectors
    total_loss = float(np.sum(diff * diff))
    counts = param_count(spec, width, embeddings.width, checkpoint.variant)
    preservation = neighbor_preservation(embeddings.vectors, reconstructed, args.nn_k)

    print(f"metric\treconstruction_loss\t{total_loss:.6g}")
    print(f"metric\tmean_loss_per_symbol\t{total_loss / spec.N:.6g}")
    print(f"metric\tneighbor_preservation@{args.nn_k}\t{preservation:.6g}")
    print(f"metric\tcode_embedding_params\t{counts.code_embedding_params}")
    print(f"metric\tcomposer_params\t{counts.composer_params}")
    print(f"metric\tconventional_baseline\t{counts.conventional_baseline}")
    print(f"metric\tcompression_rate_code_only\t{compression_rate(counts):.6g}")
    print(f"metric\tcompression_rate_with_composer\t{compression_rate(counts, True):.6g}")
    if args.labels:
        truth = _aligned_labels(embeddings, args.labels)
        score = nmi(_code_partition(codebook.codes), truth, average=args.nmi_norm)
        print(f"metric\tnmi\t{score:.6g}")
    return 0 if np.isfinite(total_loss) and np.isfinite(preservation) else 1


def cmd_inspect(args: argparse.Namespace) -> int:
    codebook = load_codebook(args.codebook)
    report = code_groups(codebook)
    for line in report.render_lines(min_group_size=args.min_group_size):
        print(line)
    return 0


def cmd_param_count(args: argparse.Namespace) -> int:
    d = args.D if args.D is not None else min_code_dim(args.N, args.K)
    if args.D is None:
        print(f"derived\tD\t{d}")
    spec = KdSpec(args.K, d, args.N)
    counts = param_count(spec, args.dprime, args.d, args.composer)
    print(f"metric\tconventional_baseline\t{counts.conventional_baseline}")
    print(f"metric\tcode_embedding_params\t{counts.code_embedding_params}")
    print(f"metric\tcomposer_params\t{counts.composer_params}")
    print(f"metric\ttotal_params\t{counts.total}")
    print(f"metric\tcompression_rate_code_only\t{compression_rate(counts):.6g}")
    print(f"metric\tcompression_rate_with_composer\t{compression_rate(counts, True):.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kdcode",
        description="Compress embedding tables into K-way D-dimensional discrete codes.",
    )
    parser.add_argument("--version", action="version", version=f"kdcode {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a clustered synthetic embedding table")
    p.add_argument("--num-points", type=int, default=10000)
    p.add_argument("--num-clusters", type=int, default=100)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--center-scale", type=float, default=10.0)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-embeddings", required=True)
    p.add_argument("--out-labels", required=True)
    p.add_argument("--out-meta", default=None)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("learn", help="learn discrete codes for an embedding file")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--K", type=int, default=50)
    p.add_argument("--D", type=int, default=10)
    p.add_argument("--allow-shared-codes", action="store_true",
                   help="permit K**D < N (quantization: symbols share codes)")
    p.add_argument("--code-mode", choices=["ste", "soft", "random"], default="ste")
    p.add_argument("--t0", type=float, default=1.0)
    p.add_argument("--decay-rate", type=float, default=1.0)
    p.add_argument("--schedule", choices=["scheduled", "constant"], default="scheduled")
    p.add_argument("--labels", default=None, help="true cluster labels, for an NMI report")
    p.add_argument("--out-codebook", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--out-report", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_learn_codes)

    p = sub.add_parser("retrain", help="re-learn code embeddings with codes held fixed")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--out-report", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint against the original embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--nmi", action="store_true", help="report NMI (requires --labels)")
    p.add_argument("--nmi-norm", choices=["geometric", "arithmetic", "max"], default="geometric")
    p.add_argument("--nn-k", type=int, default=10)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", help="list symbols grouped by their learned code")
    p.add_argument("--codebook", required=True)
    p.add_argument("--min-group-size", type=int, default=1)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("param-count", help="parameter accounting for a configuration")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--D", type=int, default=None, help="derived from N and K when omitted")
    p.add_argument("--dprime", type=int, required=True)
    p.add_argument("--composer", choices=["linear", "lstm"], default="linear")
    p.set_defaults(func=cmd_param_count)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _echo_config(args)
    try:
        return args.func(args)
    except (ValueError, DataFormatError, TrainingDivergedError, OSError) as exc:
        print(f"error\t{exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
