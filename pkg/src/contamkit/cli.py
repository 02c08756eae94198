"""Command-line interface.

Exit codes: 0 success; 1 the run finished but some rows failed; 2 usage or
configuration error; 3 oracle/transport failure.  Every subcommand prints its
fully resolved configuration (defaults included) before doing any work, and
all randomness flows from --seed, so identical invocations produce identical
output files.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from pathlib import Path

from . import __version__
from .datasets import DEFAULT_MAX_EXAMPLES, load_dataset
from .errors import (
    AggregationError,
    ConfigError,
    ContamkitError,
    DatasetFormatError,
    ModelFormatError,
    OracleError,
)
from .harness import (
    CanaryExperimentConfig,
    SweepConfig,
    run_canary_experiment,
    run_null_calibration,
    sensitivity_sweep,
)
from .ngram import DEFAULT_ALPHA, DEFAULT_ORDER, NGramModel
from .oracles import resolve_oracle
from .stats import (
    DEFAULT_P_FLOOR,
    TestResult,
    ecdf,
    filtered_aggregate,
    fisher_combine,
    permutation_test,
    sharded_test,
)
from .synth import load_corpus

AUDIT_ALPHA = 0.05


def _resolve_jobs(value: int | None) -> int:
    return value if value is not None else (os.cpu_count() or 1)


def _echo_config(name: str, values: dict) -> None:
    pairs = " ".join(f"{k}={v}" for k, v in values.items())
    print(f"[{name}] config: {pairs}")


def _write_ecdf_csv(path: Path, p_values) -> None:
    lines = ["p,empirical_cdf"]
    for x, f in ecdf(p_values):
        lines.append(f"{x!r},{f!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- audit -------------------------------------------------------------------


def _cmd_audit(args) -> int:
    jobs = _resolve_jobs(args.jobs)
    _echo_config("audit", {
        "dataset": args.dataset, "oracle": args.oracle, "test": args.test,
        "shards": args.shards, "permutations": args.permutations,
        "seed": args.seed, "max_examples": args.max_examples,
        "p_floor": args.p_floor, "jobs": jobs, "format": args.format,
        "oracle_retries": args.oracle_retries, "out": args.out,
    })
    dataset = load_dataset(args.dataset, max_examples=args.max_examples,
                           fmt=args.format)
    oracle = resolve_oracle(args.oracle, max_retries=args.oracle_retries)
    try:
        if args.test == "sharded":
            result = sharded_test(dataset, oracle, args.shards, args.permutations,
                                  args.seed, args.p_floor, jobs=jobs)
        else:
            result = permutation_test(dataset, oracle, args.permutations,
                                      args.seed, args.p_floor, jobs=jobs)
    except OracleError as exc:
        doc = {
            "schema_version": 1,
            "tool_version": __version__,
            "status": "oracle_failure",
            "dataset_name": dataset.name,
            "oracle_name": getattr(oracle, "name", args.oracle),
            "error": str(exc),
            "partial_scores": exc.partial_scores,
        }
        Path(args.out).write_text(json.dumps(doc, ensure_ascii=False, indent=2) + "\n",
                                  encoding="utf-8")
        print(f"oracle failure (partial scores saved to {args.out}): {exc}",
              file=sys.stderr)
        return 3
    finally:
        oracle.close()
    result.write(args.out)
    p = result.p_value
    print(f"dataset={dataset.name} oracle={oracle.name} test={args.test} "
          f"p_value={p:.6g} (result written to {args.out}, "
          f"wall_time={result.wall_time_seconds:.2f}s)")
    if p < AUDIT_ALPHA:
        print(f"verdict: flags contamination at alpha={AUDIT_ALPHA}")
    else:
        print(f"verdict: no evidence of contamination at alpha={AUDIT_ALPHA}")
    if AUDIT_ALPHA / 5 <= p < AUDIT_ALPHA * 2:
        print("note: p-value is near the significance cutoff; borderline results "
              "should be interpreted cautiously, not as proof either way")
    return 0


# -- aggregate ------------------------------------------------------------------


def _collect_p_values(patterns, what: str) -> dict[str, float]:
    paths: list[str] = []
    for pattern in patterns:
        paths.extend(sorted(glob.glob(pattern)))
    if not paths:
        raise ConfigError(f"{what}: no files match {patterns}")
    values: dict[str, float] = {}
    for path in paths:
        result = TestResult.read(path)
        if result.dataset_name in values:
            raise ConfigError(f"{what}: duplicate dataset {result.dataset_name!r} "
                              f"(from {path})")
        values[result.dataset_name] = result.p_value
    return values


def _cmd_aggregate(args) -> int:
    _echo_config("aggregate", {
        "target": args.target, "control": args.control,
        "threshold": args.threshold, "p_floor": args.p_floor,
        "out": args.out, "ecdf_out": args.ecdf_out,
    })
    target = _collect_p_values(args.target, "target")
    if args.control:
        controls = {
            pattern: _collect_p_values([pattern], f"control {pattern!r}")
            for pattern in args.control
        }
        result = filtered_aggregate(target, controls, threshold=args.threshold,
                                    p_floor=args.p_floor)
    else:
        names = sorted(target)
        result = fisher_combine([target[n] for n in names], p_floor=args.p_floor,
                                names=names)
    result.write(args.out)
    ecdf_out = Path(args.ecdf_out) if args.ecdf_out else Path(args.out).with_suffix(".ecdf.csv")
    _write_ecdf_csv(ecdf_out, result.component_p_values)
    print(f"combined over {len(result.included_names)} datasets "
          f"({len(result.excluded)} excluded): X2={result.fisher_statistic:.6g} "
          f"df={result.degrees_of_freedom} p={result.combined_p:.6g}")
    for entry in result.excluded:
        print(f"excluded {entry['name']}: {entry['reason']}")
    return 0


# -- ngram train -------------------------------------------------------------------


def _cmd_ngram_train(args) -> int:
    _echo_config("ngram-train", {
        "corpus": args.corpus, "order": args.order, "alpha": args.alpha,
        "out": args.out,
    })
    corpus = load_corpus(args.corpus)
    model = NGramModel.train(corpus, order=args.order, alpha=args.alpha)
    model.save(args.out)
    import hashlib

    digest = hashlib.sha256(Path(args.out).read_bytes()).hexdigest()
    print(f"trained order-{args.order} model on {len(corpus)} documents "
          f"-> {args.out} (sha256 {digest[:16]})")
    return 0


# -- canary run ----------------------------------------------------------------------


def _cmd_canary_run(args) -> int:
    config = CanaryExperimentConfig.from_json_file(args.config)
    jobs = _resolve_jobs(args.jobs)
    _echo_config("canary-run", {"config": args.config, "jobs": jobs,
                                "plot": args.plot, **config.to_dict()})
    report = run_canary_experiment(config, jobs=jobs)
    report.write(config.out_dir, plot=args.plot)
    medians = report.median_log10_p()
    for kind, per_dup in medians.items():
        series = " ".join(f"dup{d}:{v:.2f}" for d, v in per_dup.items())
        print(f"{kind}: median log10 p by dup -> {series}")
    print(f"wrote {len(report.rows)} rows to {config.out_dir}/rows.csv")
    if report.has_errors():
        print("some rows failed; see the error column", file=sys.stderr)
        return 1
    return 0


# -- calibrate ----------------------------------------------------------------------


def _cmd_calibrate(args) -> int:
    jobs = _resolve_jobs(args.jobs)
    _echo_config("calibrate", {
        "runs": args.runs, "dataset_size": args.dataset_size,
        "shards": args.shards, "permutations": args.permutations,
        "order": args.order, "alpha": args.alpha, "background": args.background,
        "test": args.test, "seed": args.seed, "p_floor": args.p_floor,
        "jobs": jobs, "out_dir": args.out_dir,
    })
    report = run_null_calibration(
        num_runs=args.runs,
        dataset_size=args.dataset_size,
        num_shards=args.shards,
        num_permutations=args.permutations,
        master_seed=args.seed,
        order=args.order,
        alpha=args.alpha,
        background=args.background,
        test_kind=args.test,
        p_floor=args.p_floor,
        jobs=jobs,
        model_out=(Path(args.out_dir) / "model.bin") if args.out_dir else None,
    )
    if args.out_dir:
        report.write(args.out_dir)
    fractions = " ".join(
        f"P(p<{a:g})={f:.3f}" for a, f in report.fraction_below.items()
    )
    print(f"calibration over {report.num_runs} runs ({report.test_kind}): "
          f"KS D={report.ks:.4f} {fractions}")
    return 0


# -- sweep -------------------------------------------------------------------------


def _cmd_sweep_run(args) -> int:
    config = SweepConfig.from_json_file(args.config)
    jobs = _resolve_jobs(args.jobs)
    _echo_config("sweep-run", {"config": args.config, "jobs": jobs,
                               **config.to_dict()})
    report = sensitivity_sweep(config, jobs=jobs)
    report.write(config.out_dir)
    means = report.mean_log10_p()
    series = " ".join(f"{v}:{m:.2f}" for v, m in means.items())
    print(f"{config.axis}: mean log10 p by value -> {series}")
    best = report.argmin_value()
    if best is not None:
        print(f"lowest mean log10 p at {config.axis}={best}")
    skipped = sum(1 for r in report.rows if r.status == "skipped")
    if skipped:
        print(f"{skipped} combinations skipped as inadmissible")
    if report.has_errors():
        print("some rows failed; see the error column", file=sys.stderr)
        return 1
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contamkit",
        description="Audit language models for benchmark test-set contamination "
                    "by testing exchangeability of example order.",
    )
    parser.add_argument("--version", action="version", version=f"contamkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    audit = sub.add_parser("audit", help="run one contamination test against an oracle")
    audit.add_argument("--dataset", required=True, help="dataset file (JSONL or plain text)")
    audit.add_argument("--oracle", required=True,
                       help="oracle spec: builtin:ngram=FILE, cmd:COMMAND, tcp:HOST:PORT")
    audit.add_argument("--test", choices=["sharded", "permutation"], default="sharded",
                       help="test kind (default: sharded)")
    audit.add_argument("--shards", type=int, default=50,
                       help="shard count for the sharded test (default: 50)")
    audit.add_argument("--permutations", type=int, default=250,
                       help="permutations per shard, or total for the permutation "
                            "test (default: 250)")
    audit.add_argument("--seed", type=int, default=42, help="master seed (default: 42)")
    audit.add_argument("--max-examples", type=int, default=DEFAULT_MAX_EXAMPLES,
                       help=f"test only the first N examples (default: {DEFAULT_MAX_EXAMPLES})")
    audit.add_argument("--p-floor", type=float, default=DEFAULT_P_FLOOR,
                       help="numerical floor for reported p-values (default: 1e-38)")
    audit.add_argument("--format", choices=["auto", "jsonl", "text"], default="auto",
                       help="dataset file format (default: auto)")
    audit.add_argument("--jobs", type=int, default=None,
                       help="parallel scoring workers; results are identical for any "
                            "value (default: logical CPU count)")
    audit.add_argument("--oracle-retries", type=int, default=1,
                       help="reconnect-and-retry budget for remote transport "
                            "failures (default: 1)")
    audit.add_argument("--out", required=True, help="path for the result JSON")
    audit.set_defaults(func=_cmd_audit)

    aggregate = sub.add_parser("aggregate",
                               help="Fisher-combine result files, with optional "
                                    "negative-control filtering")
    aggregate.add_argument("--target", action="append", required=True,
                           help="glob of TestResult JSON files (repeatable)")
    aggregate.add_argument("--control", action="append", default=[],
                           help="glob of control-model TestResult files; datasets any "
                                "control flags are excluded (repeatable)")
    aggregate.add_argument("--threshold", type=float, default=0.05,
                           help="control-filter threshold (default: 0.05)")
    aggregate.add_argument("--p-floor", type=float, default=DEFAULT_P_FLOOR,
                           help="clamp for tiny p-values before the log (default: 1e-38)")
    aggregate.add_argument("--out", required=True, help="path for the aggregate JSON")
    aggregate.add_argument("--ecdf-out", default=None,
                           help="path for the included-p ECDF CSV "
                                "(default: <out>.ecdf.csv)")
    aggregate.set_defaults(func=_cmd_aggregate)

    ngram = sub.add_parser("ngram", help="built-in n-gram model commands")
    ngram_sub = ngram.add_subparsers(dest="ngram_command", required=True)
    train = ngram_sub.add_parser("train", help="train a model and write it to disk")
    train.add_argument("--corpus", required=True,
                       help="corpus file (one document per line) or "
                            "synthetic:seed=N,docs=M")
    train.add_argument("--order", type=int, default=DEFAULT_ORDER,
                       help=f"n-gram order (default: {DEFAULT_ORDER})")
    train.add_argument("--alpha", type=float, default=DEFAULT_ALPHA,
                       help=f"additive smoothing mass (default: {DEFAULT_ALPHA})")
    train.add_argument("--out", required=True, help="model file to write")
    train.set_defaults(func=_cmd_ngram_train)

    canary = sub.add_parser("canary", help="canary contamination experiments")
    canary_sub = canary.add_subparsers(dest="canary_command", required=True)
    canary_run = canary_sub.add_parser("run", help="run a canary experiment config")
    canary_run.add_argument("--config", required=True, help="experiment config JSON")
    canary_run.add_argument("--jobs", type=int, default=None,
                            help="parallel row workers (default: logical CPU count)")
    canary_run.add_argument("--plot", action="store_true",
                            help="also write an SVG of median log10 p vs dup count")
    canary_run.set_defaults(func=_cmd_canary_run)

    calibrate = sub.add_parser("calibrate",
                               help="check null calibration on a clean model")
    calibrate.add_argument("--runs", type=int, default=200,
                           help="number of fresh null datasets (default: 200)")
    calibrate.add_argument("--dataset-size", type=int, default=200,
                           help="examples per null dataset (default: 200)")
    calibrate.add_argument("--shards", type=int, default=50,
                           help="shard count (default: 50)")
    calibrate.add_argument("--permutations", type=int, default=51,
                           help="permutations per shard (default: 51)")
    calibrate.add_argument("--order", type=int, default=DEFAULT_ORDER,
                           help=f"n-gram order (default: {DEFAULT_ORDER})")
    calibrate.add_argument("--alpha", type=float, default=DEFAULT_ALPHA,
                           help=f"smoothing mass (default: {DEFAULT_ALPHA})")
    calibrate.add_argument("--background", default="synthetic:docs=4000",
                           help="training corpus spec (default: synthetic:docs=4000)")
    calibrate.add_argument("--test", choices=["sharded", "permutation"],
                           default="sharded", help="test kind (default: sharded)")
    calibrate.add_argument("--seed", type=int, default=42, help="master seed (default: 42)")
    calibrate.add_argument("--p-floor", type=float, default=DEFAULT_P_FLOOR,
                           help="numerical floor for p-values (default: 1e-38)")
    calibrate.add_argument("--jobs", type=int, default=None,
                           help="parallel run workers (default: logical CPU count)")
    calibrate.add_argument("--out-dir", default=None,
                           help="directory for calibration.json and the trained model")
    calibrate.set_defaults(func=_cmd_calibrate)

    sweep = sub.add_parser("sweep", help="shard/permutation sensitivity sweeps")
    sweep_sub = sweep.add_subparsers(dest="sweep_command", required=True)
    sweep_run = sweep_sub.add_parser("run", help="run a sweep config")
    sweep_run.add_argument("--config", required=True, help="sweep config JSON")
    sweep_run.add_argument("--jobs", type=int, default=None,
                           help="parallel row workers (default: logical CPU count)")
    sweep_run.set_defaults(func=_cmd_sweep_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetFormatError, ModelFormatError, AggregationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return 3
    except ContamkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
