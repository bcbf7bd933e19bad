"""``hypercodon`` command line: geomcheck, embed-tree, pretrain, probe, analyze, synth.

Every command prints its fully resolved configuration as one JSON line on
stdout before doing any work, and a JSON summary line when it finishes.
Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import analysis
from .checks import cone_suite, geometry_suite, gradient_suite
from .config import GEOM_CURVATURES, PROTO_HEADS, SWEEP_GRID, ConfigError, RunConfig, derive_seed
from .hierarchy import TreeFormatError, build_codon_tree, load_tree
from .lm import SequenceError, read_fasta, tokenize, write_fasta
from .train import TrainingError, encode_corpus, load_model, pretrain_mlm

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class CheckFailed(RuntimeError):
    pass


def _echo(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True), flush=True)


def _base_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for name in CONFIG_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return cfg.override(**overrides)


# -- commands ----------------------------------------------------------------------


def cmd_geomcheck(args) -> int:
    cfg = _base_config(args)
    settings = {"cases": args.cases, "dim": args.dim, "seed": cfg.seed, "epsilon": args.epsilon,
                "curvatures": list(GEOM_CURVATURES)}
    _echo({"command": "geomcheck", "config": settings})
    report, failures = {"curvatures": []}, []
    for c in GEOM_CURVATURES:
        seed = derive_seed(cfg.seed, f"geomcheck:{c}")
        suites = [
            geometry_suite(c, args.cases, args.dim, seed, args.epsilon),
            gradient_suite(c, seed),
            cone_suite(c),
        ]
        entry = {"curvature": c, "checks": {}}
        for s in suites:
            entry["checks"].update(s.to_json()["checks"])
            failures += [f"{name} (c={c})" for name in s.failures]
        report["curvatures"].append(entry)
    report["failures"] = failures
    report["pass"] = not failures
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=1) + "\n")
    _echo(report)
    if failures:
        raise CheckFailed("identity violated: " + ", ".join(failures))
    return EXIT_OK


def cmd_embed_tree(args) -> int:
    from .treembed import (distortion_report, embed_tree_constructive, leaf_prototypes, refine_embedding,
                           save_prototypes)

    cfg = _base_config(args)
    tree = load_tree(args.tree) if args.tree else build_codon_tree()
    _echo({"command": "embed-tree", "tree": args.tree or "builtin", "out": args.out, "config": cfg.to_dict()})
    emb = embed_tree_constructive(tree, cfg.proto_dim, cfg.curvature, cfg.tau, derive_seed(cfg.seed, "embed"))
    history = None
    if cfg.refine_steps:
        refined = refine_embedding(emb, tree, cfg.refine_steps)
        emb, history = refined.embedding, refined.objective
    report = distortion_report(emb, tree)
    protos = leaf_prototypes(emb, tree, cfg.K, cfg.eta)
    save_prototypes(protos, args.out)
    out = report.to_json()
    if history is not None:
        out["refine_objective_first"], out["refine_objective_last"] = history[0], history[-1]
    report_path = Path(args.report) if args.report else Path(str(args.out) + ".distortion.json")
    report_path.write_text(json.dumps(out, indent=1) + "\n")
    _echo({"prototypes": len(protos), "dim": protos.dim, "mean_distortion": report.mean,
           "worst_distortion": report.worst, "report": str(report_path)})
    return EXIT_OK


def _read_corpus(path) -> list[list[int]]:
    records = read_fasta(path)
    if not records:
        raise SequenceError(f"{path}: no FASTA records")
    for name, seq in records:
        try:
            tokenize(seq)
        except SequenceError as exc:
            raise SequenceError(f"{path}: record {name!r}: {exc}") from None
    return encode_corpus([seq for _, seq in records])


def cmd_pretrain(args) -> int:
    from .treembed import codon_prototypes, load_prototypes, save_prototypes

    cfg = _base_config(args).resolved()
    corpus = _read_corpus(args.corpus)
    if args.sweep:
        if cfg.head not in PROTO_HEADS:
            raise ConfigError("--sweep varies curvature and cone threshold; it needs a prototype head")
        if args.prototypes:
            raise ConfigError("--sweep embeds the tree per curvature; do not pass --prototypes")
        cells = [cfg.override(curvature=c, eta=eta) for c, eta in SWEEP_GRID]
    else:
        cells = [cfg]
    if cfg.head in PROTO_HEADS and not args.sweep and not args.prototypes:
        raise ConfigError(f"head {cfg.head!r} needs --prototypes (see embed-tree)")
    _echo({"command": "pretrain", "corpus": str(args.corpus), "out": str(args.out),
           "config": [c.to_dict() for c in cells]})
    out = Path(args.out)
    summary = []
    for cell in cells:
        cell_dir = out / f"c{cell.curvature:g}_eta{cell.eta:g}" if args.sweep else out
        protos = None
        if cell.head in PROTO_HEADS:
            if args.sweep:
                protos, _ = codon_prototypes(cell.proto_dim, cell.curvature, cell.tau, cell.K, cell.eta,
                                             cell.refine_steps, derive_seed(cell.seed, "embed"))
                cell_dir.mkdir(parents=True, exist_ok=True)
                save_prototypes(protos, cell_dir / "prototypes.bin")
            else:
                protos = load_prototypes(args.prototypes)
        result = pretrain_mlm(corpus, cell, protos, cell_dir)
        summary.append({"dir": str(cell_dir), "curvature": cell.curvature, "eta": cell.eta,
                        "steps": result.trainer.step, "final": result.metrics[-1]})
    _echo({"runs": summary})
    return EXIT_OK


def _read_labels(path, column: str) -> list[str]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise ConfigError(f"{path}: label column {column!r} missing (columns: {reader.fieldnames})")
        return [row[column] for row in reader]


def cmd_probe(args) -> int:
    from .probe import ProbeConfig, probe_train

    task = "regression" if args.metric == "spearman" else "classification"
    pcfg = ProbeConfig(task=task, epochs=args.epochs, seed=args.seed)
    _echo({"command": "probe", "checkpoint": str(args.checkpoint), "sequences": str(args.sequences),
           "labels": str(args.labels), "label_column": args.label_column, "config": vars(pcfg)})
    corpus = _read_corpus(args.sequences)
    raw = _read_labels(args.labels, args.label_column)
    if len(raw) != len(corpus):
        raise ConfigError(f"{len(corpus)} sequences but {len(raw)} labels")
    if task == "regression":
        try:
            labels = [float(v) for v in raw]
        except ValueError as exc:
            raise ConfigError(f"non-numeric regression label: {exc}") from None
    else:
        labels = raw
    model = load_model(args.checkpoint)
    report = probe_train(model.backbone, corpus, labels, pcfg)
    body = report.to_json()
    if args.out:
        Path(args.out).write_text(json.dumps(body, indent=1) + "\n")
    _echo({"best": report.best, "metric": report.metric, "test": report.test_metric, "cells": len(report.cells)})
    return EXIT_OK


def cmd_analyze(args) -> int:
    _echo({"command": "analyze", "corpus": str(args.corpus), "predictions": args.predictions, "out": str(args.out)})
    records = read_fasta(args.corpus)
    if not records:
        raise SequenceError(f"{args.corpus}: no FASTA records")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    usage = analysis.CodonUsage()
    with open(out / "sequences.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "length", "length_bin", "gc", "gc_bin"])
        for name, seq in records:
            gc = analysis.gc_content(seq)
            writer.writerow([name, len(seq), analysis.length_bin(seq), repr(gc), analysis.gc_bin(gc)])
            usage.add(seq)
    summary: dict = {"sequences": len(records), "codons": usage.total}
    try:
        detail = analysis.enc_detail(usage)
        summary["enc"] = detail.enc
        summary["enc_interpolated_3fold"] = detail.interpolated_3fold
    except ValueError as exc:
        summary["enc"] = None
        summary["enc_error"] = str(exc)
    if args.predictions:
        preds = read_fasta(args.predictions)
        if len(preds) != len(records):
            raise ConfigError(f"{len(preds)} prediction records for {len(records)} sequences")
        p_ids, t_ids = [], []
        for (name, seq), (pname, pseq) in zip(records, preds):
            if len(pseq) != len(seq):
                raise ConfigError(f"prediction {pname!r} has length {len(pseq)}, sequence {name!r} has {len(seq)}")
            p_ids += tokenize(pseq)
            t_ids += tokenize(seq)
        summary["family_confusion"] = analysis.family_confusion(p_ids, t_ids, build_codon_tree()).to_json()
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    _echo(summary)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import gct_fraction_task, synthetic_corpus

    _echo({"command": "synth", "config": {k: v for k, v in vars(args).items() if k != "func"}})
    if args.gct_labels:
        seqs, labels = gct_fraction_task(args.n, args.length, args.seed)
        with open(args.gct_labels, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "label"])
            writer.writerows((f"seq{i}", repr(float(v))) for i, v in enumerate(labels))
    else:
        seqs = synthetic_corpus(args.n, args.length, args.temperature, args.seed)
    write_fasta(((f"seq{i}", s) for i, s in enumerate(seqs)), args.out)
    _echo({"sequences": len(seqs), "out": str(args.out)})
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

# RunConfig fields exposed as kebab-case flags
CONFIG_FLAGS = {
    "seed": int, "head": str, "curvature": float, "K": float, "eta": float, "beta": float, "alpha": float,
    "feature_clip": float,
    "proto_dim": int, "tau": float, "refine_steps": int, "layers": int, "hidden": int, "intermediate": int,
    "attn_heads": int, "max_context": int, "positions": int, "dropout": float, "lr_max": float,
    "lr_min": float, "warmup_steps": int, "total_steps": int, "batch_size": int, "weight_decay": float,
    "mask_rate": float, "mask_scheme": str, "dtype": str,
}


def _config_flags(p: argparse.ArgumentParser, names) -> None:
    p.add_argument("--config", help="JSON run configuration; flags override it")
    for name in names:
        flag = "--" + ("dim" if name == "proto_dim" else name.replace("_", "-").lower())
        p.add_argument(flag, dest=name, type=CONFIG_FLAGS[name], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypercodon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geomcheck", help="run the ball and head invariant suites")
    _config_flags(p, ["seed"])
    p.add_argument("--cases", type=int, default=1000)
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--epsilon", type=float, default=1e-5, help="boundary projection margin (fault injection)")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_geomcheck)

    p = sub.add_parser("embed-tree", help="embed a tree and export leaf prototypes")
    p.add_argument("--tree", help="tree JSON (default: built-in codon tree)")
    p.add_argument("--out", required=True, help="prototype file to write")
    p.add_argument("--report", help="distortion JSON (default: <out>.distortion.json)")
    _config_flags(p, ["seed", "curvature", "tau", "proto_dim", "refine_steps", "K", "eta"])
    p.set_defaults(func=cmd_embed_tree)

    p = sub.add_parser("pretrain", help="masked-LM pre-training on a FASTA corpus")
    p.add_argument("corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--prototypes", help="prototype file for proto-dist / proto-entail")
    p.add_argument("--sweep", action="store_true", help="run the curvature / cone-threshold grid")
    _config_flags(p, list(CONFIG_FLAGS))
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("probe", help="TextCNN probe on frozen backbone states")
    p.add_argument("checkpoint")
    p.add_argument("sequences", help="FASTA, one record per label row")
    p.add_argument("--labels", required=True, help="CSV with one row per sequence")
    p.add_argument("--label-column", default="label")
    p.add_argument("--metric", choices=("spearman", "accuracy"), default="spearman")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("analyze", help="ENC, GC and length strata, optional family confusion")
    p.add_argument("corpus")
    p.add_argument("--predictions", help="FASTA of predicted sequences aligned with the corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="write a synthetic codon corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--length", type=int, default=60, help="codons per sequence")
    p.add_argument("--temperature", type=float, default=0.5, help="codon bias temperature")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gct-labels", help="write the GCT-fraction task and its labels CSV here")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return args.func(args)
    except (ConfigError, SequenceError, TreeFormatError, FileNotFoundError, IsADirectoryError,
            KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (CheckFailed, TrainingError, RuntimeError, OSError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
