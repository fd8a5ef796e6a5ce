"""Command-line entry point wiring ingestion, QC, training, and simulation.

Machine-readable JSON summaries go to standard output; logs go to standard
error. Flags override config-file values; every output file is written
atomically.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import corpus, crowd_qc, simulator
from ._io import DatasetError, atomic_write, dump_json

log = logging.getLogger("alcrowd")

_TRAIN_DEFAULT_LEARNERS = ("lr", "nb", "rf", "svm")


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise DatasetError(path, None, f"cannot open: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(path, None, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise DatasetError(path, None, "config must be a JSON object")
    return data


def _merge_config(args, defaults: dict | None = None) -> simulator.ExperimentConfig:
    """Defaults, then config-file values, then explicit CLI flags."""
    merged = dict(defaults or {})
    merged.update(_load_config_file(args.config))
    overrides = {
        "dataset": args.dataset,
        "train_size": args.train_size,
        "test_size": args.test_size,
        "seed_size": getattr(args, "seed_size", None),
        "batch_size": getattr(args, "batch_size", None),
        "strategies": tuple(args.strategies) if getattr(args, "strategies", None) else None,
        "learners": tuple(args.learners) if getattr(args, "learners", None) else None,
        "repeats": args.repeats,
        "master_seed": args.seed,
        "metric": args.metric,
        "resplit": False if getattr(args, "fixed_split", False) else None,
        "ngram_min": args.ngram_min,
        "ngram_max": args.ngram_max,
        "min_df": args.min_df,
    }
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return simulator.config_from_dict(merged)


def cmd_preprocess(args) -> int:
    docs = corpus.read_documents(args.input)
    normalized = corpus.normalize_documents(docs)
    kept = corpus.dedupe_and_filter(normalized)
    dropped_non_english = sum(
        1 for d in normalized if d.lang is not None and d.lang != "en"
    )
    written = corpus.write_documents(args.output, kept)
    _emit(
        {
            "read": len(docs),
            "deduped": len(docs) - dropped_non_english - written,
            "dropped_non_english": dropped_non_english,
            "written": written,
        }
    )
    return 0


def cmd_qc(args) -> int:
    assignments = crowd_qc.read_assignments(args.assignments)
    responses = crowd_qc.read_responses(args.responses)
    gold = crowd_qc.read_gold(args.gold)
    policy = crowd_qc.ValidationPolicy(
        min_duration_s=args.min_duration,
        require_controls=not args.no_require_controls,
    )
    cutoffs = [float(c) for c in range(0, args.cutoff_max + 1, args.cutoff_step)]
    report, sweep_points = crowd_qc.build_qc_report(
        assignments,
        responses,
        gold,
        policy=policy,
        cutoffs=cutoffs,
        worker_counts=args.workers,
        trials=args.trials,
        seed=args.seed,
    )
    out_dir = Path(args.out_dir)
    report_path = out_dir / "qc_report.json"
    sweep_path = out_dir / "cutoff_sweep.csv"
    dump_json(report_path, report)
    with atomic_write(sweep_path) as handle:
        writer = csv.writer(handle)
        writer.writerow(["cutoff_s", "direction", "n_retained", "mean_kappa"])
        for p in sweep_points:
            writer.writerow(
                [
                    p.cutoff_s,
                    p.direction.value,
                    p.n_retained,
                    "" if p.mean_kappa is None else p.mean_kappa,
                ]
            )
    _emit(
        {
            "report_json": str(report_path),
            "sweep_csv": str(sweep_path),
            "n_responses": report["retention"]["total"],
            "n_valid": report["retention"]["valid"],
            "n_unresolved": len(report["unresolved_items"]),
        }
    )
    return 0


def cmd_train(args) -> int:
    config = _merge_config(args, defaults={"learners": _TRAIN_DEFAULT_LEARNERS})
    if config.dataset is None:
        raise ValueError("a dataset is required (config 'dataset' or --dataset)")
    if config.master_seed is None:
        raise ValueError("a seed is required (config 'master_seed' or --seed)")
    docs = corpus.read_documents(config.dataset)
    log.info("benchmarking %s on %d documents", list(config.learners), len(docs))
    benchmark = simulator.run_benchmark(config, docs)
    out_dir = Path(args.out_dir)
    json_path = out_dir / "benchmark.json"
    csv_path = out_dir / "benchmark.csv"
    dump_json(json_path, {"config": simulator.config_to_dict(config), "benchmark": benchmark})
    with atomic_write(csv_path) as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["learner", "precision", "recall", "f1_pos", "f1_weighted", "ci_low", "ci_high"]
        )
        for row in benchmark["learners"]:
            writer.writerow(
                [
                    row["learner"],
                    row["precision"],
                    row["recall"],
                    row["f1_pos"],
                    row["f1_weighted"],
                    row["ci_low"],
                    row["ci_high"],
                ]
            )
    _emit(
        {
            "benchmark_json": str(json_path),
            "benchmark_csv": str(csv_path),
            "learners": [row["learner"] for row in benchmark["learners"]],
        }
    )
    return 0


def cmd_simulate(args) -> int:
    if args.seed is None:
        raise ValueError("--seed is required for simulate (reproducibility by default)")
    config = _merge_config(args)
    if config.dataset is None:
        raise ValueError("a dataset is required (config 'dataset' or --dataset)")
    # arity mismatches are rejected before any training starts
    simulator.plan_cells(config.strategies, config.learners)
    docs = corpus.read_documents(config.dataset)
    log.info(
        "simulating %d strategies x %d learners x %d repeats",
        len(config.strategies),
        len(config.learners),
        config.repeats,
    )
    result = simulator.run_experiment(
        config, docs, threads=args.threads, target_fraction=args.target_fraction
    )
    out_dir = Path(args.out_dir)
    curve_path = out_dir / "curve.csv"
    summary_path = out_dir / "summary.json"
    simulator.write_curve_csv(curve_path, result.curve)
    dump_json(
        summary_path,
        {"config": simulator.config_to_dict(config), "summary": result.summary},
    )
    _emit(
        {
            "curve_csv": str(curve_path),
            "summary_json": str(summary_path),
            "n_points": len(result.curve.cells),
        }
    )
    return 0


def cmd_synth(args) -> int:
    if args.seed is None:
        raise ValueError("--seed is required for synth (reproducibility by default)")
    spec = simulator.SynthSpec(
        n_docs=args.n_docs,
        class_tokens=args.class_tokens,
        background_tokens=args.background_tokens,
        balance=args.balance,
        signal=args.signal,
        noise=args.noise,
        tokens_per_doc=args.tokens_per_doc,
        seed=args.seed,
    )
    docs = simulator.generate_synthetic_corpus(spec)
    written = corpus.write_documents(args.output, docs)
    _emit(
        {
            "output": str(args.output),
            "written": written,
            "spec": {
                "n_docs": spec.n_docs,
                "class_tokens": spec.class_tokens,
                "background_tokens": spec.background_tokens,
                "balance": spec.balance,
                "signal": spec.signal,
                "noise": spec.noise,
                "tokens_per_doc": spec.tokens_per_doc,
                "seed": spec.seed,
            },
        }
    )
    return 0


def cmd_report(args) -> int:
    curve = simulator.read_curve_csv(args.curve)
    summary = simulator.summarize_strategies(
        curve, target_fraction=args.target_fraction, metric=args.metric
    )
    out_dir = Path(args.out_dir)
    report_path = out_dir / "report.json"
    plot_path = out_dir / "plot_curves.csv"
    dump_json(report_path, summary)
    with atomic_write(plot_path) as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["strategy", "learner", "iteration", "labels_used", "mean", "ci_low", "ci_high"]
        )
        for entry in summary["strategies"]:
            for point in entry["mean_curve"]:
                writer.writerow(
                    [
                        entry["strategy"],
                        entry["learner"],
                        point["iteration"],
                        point["labels_used"],
                        point["mean"],
                        point["ci_low"],
                        point["ci_high"],
                    ]
                )
    _emit(
        {
            "report_json": str(report_path),
            "plot_csv": str(plot_path),
            "entries": len(summary["strategies"]),
        }
    )
    return 0


def _add_config_flags(parser: argparse.ArgumentParser, *, with_al_flags: bool) -> None:
    parser.add_argument("--config", help="JSON config file mirroring the experiment fields")
    parser.add_argument("--dataset", help="JSON-lines dataset path")
    parser.add_argument("--train-size", dest="train_size", type=int)
    parser.add_argument("--test-size", dest="test_size", type=int)
    parser.add_argument("--repeats", type=int)
    parser.add_argument("--seed", type=int, help="master seed for all randomness")
    parser.add_argument(
        "--metric", choices=("precision", "recall", "f1_pos", "f1_weighted")
    )
    parser.add_argument("--ngram-min", dest="ngram_min", type=int)
    parser.add_argument("--ngram-max", dest="ngram_max", type=int)
    parser.add_argument("--min-df", dest="min_df", type=int)
    parser.add_argument("--fixed-split", dest="fixed_split", action="store_true",
                        help="reuse one split across repeats instead of resplitting")
    if with_al_flags:
        parser.add_argument("--seed-size", dest="seed_size", type=int)
        parser.add_argument("--batch-size", dest="batch_size", type=int)
        parser.add_argument(
            "--strategies",
            nargs="+",
            metavar="STRATEGY",
            help=f"subset of: {', '.join(s.value for s in simulator.StrategyKind)}",
        )
    parser.add_argument(
        "--learners",
        nargs="+",
        metavar="LEARNER",
        help="learner kinds (lr nb rf svm) or committee:<kind>+<kind>+...",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alcrowd",
        description=(
            "Crowd-annotation quality control and pool-based active-learning "
            "experiments for short-text classifiers."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="normalize, dedupe, and language-filter a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("qc", help="validate worker responses and compute agreement reports")
    p.add_argument("--assignments", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--gold", required=True, help="expert gold labels (JSON-lines)")
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.add_argument("--min-duration", dest="min_duration", type=float,
                   default=crowd_qc.DEFAULT_MIN_DURATION_S)
    p.add_argument("--no-require-controls", dest="no_require_controls", action="store_true")
    p.add_argument("--workers", nargs="+", type=int, default=[3, 5],
                   help="worker counts for subset-reliability kappa")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cutoff-max", dest="cutoff_max", type=int, default=300)
    p.add_argument("--cutoff-step", dest="cutoff_step", type=int, default=10)
    p.set_defaults(func=cmd_qc)

    p = sub.add_parser("train", help="benchmark LR/NB/RF/SVM on a labeled dataset")
    _add_config_flags(p, with_al_flags=False)
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="run the active-learning experiment grid")
    _add_config_flags(p, with_al_flags=True)
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default ${simulator.THREADS_ENV_VAR}; 0 = auto)")
    p.add_argument("--target-fraction", dest="target_fraction", type=float, default=0.95)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--output", required=True)
    p.add_argument("--n-docs", dest="n_docs", type=int, required=True)
    p.add_argument("--class-tokens", dest="class_tokens", type=int, default=30)
    p.add_argument("--background-tokens", dest="background_tokens", type=int, default=50)
    p.add_argument("--balance", type=float, default=0.5)
    p.add_argument("--signal", type=float, default=0.9)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--tokens-per-doc", dest="tokens_per_doc", type=int, default=12)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="summarize a learning-curve CSV")
    p.add_argument("--curve", required=True)
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.add_argument("--target-fraction", dest="target_fraction", type=float, default=0.95)
    p.add_argument("--metric", default="f1_pos",
                   choices=("precision", "recall", "f1_pos", "f1_weighted"))
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
