"""
Command-line surface: generate, test, estimate, recover, experiment, verify.

Results go to stdout or to --output files; logs go to stderr. Exit codes:
0 success, 1 unexpected failure, 2 invalid input or unwritable output,
3 acceptance suite failed.
"""

import argparse
import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import structlog

from ..config.settings import get_settings
from ..models.data_models import TestSpec
from ..models.errors import ConfigValidationError, OutputWriteError, SerializationError, TreeProbeError
from ..services import estimation, property_tests, tree_core
from ..services.acceptance_suite import run_suite
from ..services.experiment_runner import ESTIMATE_PROPERTY, run_experiment, run_sweep
from ..services.metric_oracle import DistanceOracle
from ..services.result_writer import ResultWriter, sweep_to_csv, to_jsonl, trials_to_csv
from ..services.spanned_subtree import recover, write_subtree
from ..utils.logging_config import setup_logging
from .requests import (
    ESTIMATE_PROCEDURES,
    TEST_PROCEDURES,
    EstimateRequest,
    RecoverRequest,
    TestRequest,
    TreeRequest,
    config_from_mapping,
    load_config,
    parse_sweep,
    validate_request,
)

logger = structlog.get_logger()

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_ACCEPTANCE_FAILED = 3


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated vertex ids, got '{text}'")


class _Output:
    """Routes result text to stdout or to a verified file under the output directory."""

    def __init__(self, writer: ResultWriter, output_dir: str):
        self.writer = writer
        self.output_dir = Path(output_dir)

    def resolve(self, path: str) -> Path:
        target = Path(path)
        return target if target.is_absolute() else self.output_dir / target

    def emit(self, text: str, path: Optional[str]) -> None:
        if path:
            written = self.writer.write_text(self.resolve(path), text)
            logger.info("Result written", file=str(written))
        else:
            sys.stdout.write(text if text.endswith("\n") else text + "\n")
            sys.stdout.flush()


# -- shared helpers -----------------------------------------------------------------------------

def _load_tree(args: argparse.Namespace) -> tree_core.WeightedTree:
    if args.tree_file:
        try:
            text = Path(args.tree_file).read_text(encoding="utf-8")
        except OSError as e:
            raise SerializationError(f"cannot read tree file {args.tree_file}: {e}") from e
        return tree_core.read_tree(text)
    if args.family is None or args.n is None:
        raise ConfigValidationError("--family and --n are required unless --tree-file is given", field="family")
    request = validate_request(TreeRequest, {
        "family": args.family, "n": args.n, "weights": args.weights, "tree_seed": args.tree_seed,
    })
    return tree_core.generate_tree(request.family, request.n, request.tree_seed, request.weight_scheme())


def _export_trace(oracle: DistanceOracle, args: argparse.Namespace, out: _Output) -> None:
    if args.trace:
        try:
            rows = oracle.export_trace(out.resolve(args.trace))
        except OSError as e:
            raise OutputWriteError(f"cannot write trace {args.trace}: {e}") from e
        logger.info("Query trace exported", file=args.trace, rows=rows)


# -- sub-commands -------------------------------------------------------------------------------

def _cmd_generate(args: argparse.Namespace, out: _Output) -> int:
    request = validate_request(TreeRequest, {
        "family": args.family, "n": args.n, "weights": args.weights, "tree_seed": args.seed,
    })
    tree = tree_core.generate_tree(request.family, request.n, request.tree_seed, request.weight_scheme())
    out.emit(tree_core.write_tree(tree), args.output)
    return EXIT_OK


def _cmd_test(args: argparse.Namespace, out: _Output) -> int:
    request = validate_request(TestRequest, {
        "procedure": args.procedure,
        "threshold": args.threshold,
        "delta": args.delta,
        "epsilon": args.epsilon,
        "seed": args.seed,
        "diam_hint": args.diam_hint,
        "debug_full_sample": args.full_sample,
    })
    tree = _load_tree(args)
    spec = TestSpec(
        tree.n, request.threshold, request.delta, request.epsilon, request.seed, request.debug_full_sample
    )
    oracle = DistanceOracle(tree, trace=bool(args.trace))
    test = property_tests.TESTS[request.procedure]
    if request.procedure.startswith("typical"):
        verdict = test(oracle, spec, diam_bound=request.diam_hint)
    else:
        verdict = test(oracle, spec)

    payload = verdict.to_dict(request.procedure, spec)
    if "branch" in verdict.details:
        payload["branch"] = verdict.details["branch"]
    out.emit(to_jsonl([payload]), args.output)
    _export_trace(oracle, args, out)
    return EXIT_OK


def _cmd_estimate(args: argparse.Namespace, out: _Output) -> int:
    request = validate_request(EstimateRequest, {
        "procedure": args.procedure,
        "delta": args.delta,
        "epsilon": args.epsilon,
        "seed": args.seed,
        "diam_hint": args.diam_hint,
    })
    tree = _load_tree(args)
    oracle = DistanceOracle(tree, trace=bool(args.trace))
    result = estimation.estimate(
        oracle, ESTIMATE_PROPERTY[request.procedure], tree.n, request.delta, request.epsilon,
        seed=request.seed, diam_bound=request.diam_hint,
    )
    out.emit(to_jsonl([result.to_dict()]), args.output)
    _export_trace(oracle, args, out)
    return EXIT_OK


def _cmd_recover(args: argparse.Namespace, out: _Output) -> int:
    request = validate_request(RecoverRequest, {
        "sample": args.sample, "sample_size": args.sample_size, "seed": args.seed,
    })
    tree = _load_tree(args)
    if request.sample is not None:
        members = request.sample
    else:
        if request.sample_size > tree.n:
            raise ConfigValidationError(f"sample_size {request.sample_size} exceeds n = {tree.n}", field="sample_size")
        rng = np.random.default_rng(request.seed)
        members = (rng.choice(tree.n, size=request.sample_size, replace=False) + 1).tolist()

    oracle = DistanceOracle(tree, trace=bool(args.trace))
    subtree = recover(oracle, members)
    logger.info("Subtree recovered", sample=len(members), vertices=len(subtree.vertices),
                queries_used=oracle.query_count())
    out.emit(write_subtree(subtree), args.output)
    _export_trace(oracle, args, out)
    return EXIT_OK


def _experiment_config(args: argparse.Namespace):
    if args.config:
        return load_config(args.config)
    fields = {
        "procedure": args.procedure,
        "family": args.family,
        "n": args.n,
        "weights": args.weights,
        "tree_seed": args.tree_seed,
        "threshold": args.threshold,
        "delta": args.delta,
        "epsilon": args.epsilon,
        "trials": args.trials,
        "base_seed": args.seed,
        "diam_hint": args.diam_hint,
        "sample_size": args.sample_size,
    }
    data = {key: value for key, value in fields.items() if value is not None}
    if args.full_sample:
        data["debug_full_sample"] = True
    if args.no_timing:
        data["record_timing"] = False
    return config_from_mapping(data)


def _cmd_experiment(args: argparse.Namespace, out: _Output) -> int:
    config = _experiment_config(args)

    if args.sweep:
        thresholds = parse_sweep(args.sweep)
        if not config.is_test:
            raise ConfigValidationError("threshold sweeps need a test procedure", field="procedure")
        sweep = run_sweep(config, thresholds, measure=args.measure, threads=args.threads)
        if args.format == "csv":
            text = sweep_to_csv(sweep.thresholds, sweep.means, sweep.measure)
        else:
            text = to_jsonl([s.to_dict() for s in sweep.summaries] + [sweep.to_dict()])
        out.emit(text, args.output)
        return EXIT_OK

    result = run_experiment(config, threads=args.threads)
    if args.format == "csv":
        out.emit(trials_to_csv(result.records), args.output)
        if args.output:
            out.emit(to_jsonl([result.summary.to_dict()]), None)
    else:
        out.emit(to_jsonl(result.jsonl_objects()), args.output)
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace, out: _Output) -> int:
    report = run_suite(args.suite, threads=args.threads)
    out.emit(to_jsonl([c.to_dict() for c in report.checks] + [report.to_dict()]), args.output)
    if not report.passed:
        print(f"acceptance suite '{args.suite}' failed: {', '.join(report.to_dict()['failed'])}", file=sys.stderr)
        return EXIT_ACCEPTANCE_FAILED
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------------

def _add_tree_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--family", choices=tree_core.FAMILIES, help="Tree family to generate")
    parser.add_argument("--n", type=int, help="Number of vertices")
    parser.add_argument("--weights", default="unit", help="'unit' or 'uniform:LO:HI' (quanta)")
    parser.add_argument("--tree-seed", type=int, default=0, help="Seed of the instance generator")
    parser.add_argument("--tree-file", help="Read the tree from a file instead of generating it")


def _add_output_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--output", help="Write results to this file instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treeprobe",
        description="Property tests and estimators for trees behind a distance oracle",
    )
    parser.add_argument("--log-level", help="Override TREEPROBE_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    generate = sub.add_parser("generate", help="Write a generated tree in text format")
    generate.add_argument("--family", required=True, choices=tree_core.FAMILIES)
    generate.add_argument("--n", type=int, required=True)
    generate.add_argument("--weights", default="unit")
    generate.add_argument("--seed", type=int, default=0, help="Seed of the instance generator")
    _add_output_argument(generate)
    generate.set_defaults(handler=_cmd_generate)

    test = sub.add_parser("test", help="Run one property test and print its verdict")
    test.add_argument("--procedure", required=True, choices=TEST_PROCEDURES)
    _add_tree_arguments(test)
    test.add_argument("--threshold", type=float, required=True)
    test.add_argument("--delta", type=float, required=True)
    test.add_argument("--epsilon", type=float, required=True)
    test.add_argument("--seed", type=int, default=0, help="Seed of the test's sampling stream")
    test.add_argument("--diam-hint", type=float, help="Known diameter bound (typical distance tests)")
    test.add_argument("--full-sample", action="store_true", help="Debug mode: sample every vertex")
    test.add_argument("--trace", help="Export the oracle query trace as CSV")
    _add_output_argument(test)
    test.set_defaults(handler=_cmd_test)

    estimate = sub.add_parser("estimate", help="Run one interval estimator")
    estimate.add_argument("--procedure", required=True, choices=ESTIMATE_PROCEDURES)
    _add_tree_arguments(estimate)
    estimate.add_argument("--delta", type=float, required=True)
    estimate.add_argument("--epsilon", type=float, required=True)
    estimate.add_argument("--seed", type=int, default=0)
    estimate.add_argument("--diam-hint", type=float)
    estimate.add_argument("--trace", help="Export the oracle query trace as CSV")
    _add_output_argument(estimate)
    estimate.set_defaults(handler=_cmd_estimate)

    rec = sub.add_parser("recover", help="Recover the subtree spanned by a vertex sample")
    _add_tree_arguments(rec)
    rec.add_argument("--sample", type=_int_list, help="Comma-separated vertex ids")
    rec.add_argument("--sample-size", type=int, help="Draw this many distinct vertices instead")
    rec.add_argument("--seed", type=int, default=0, help="Seed for --sample-size draws")
    rec.add_argument("--trace", help="Export the oracle query trace as CSV")
    _add_output_argument(rec)
    rec.set_defaults(handler=_cmd_recover)

    experiment = sub.add_parser("experiment", help="Run Monte-Carlo trials of a procedure")
    experiment.add_argument("--config", help="JSON file with ExperimentConfig fields")
    experiment.add_argument("--procedure", choices=TEST_PROCEDURES + ESTIMATE_PROCEDURES + ("recover",))
    experiment.add_argument("--family", choices=tree_core.FAMILIES)
    experiment.add_argument("--n", type=int)
    experiment.add_argument("--weights")
    experiment.add_argument("--tree-seed", type=int)
    experiment.add_argument("--threshold", type=float)
    experiment.add_argument("--delta", type=float)
    experiment.add_argument("--epsilon", type=float)
    experiment.add_argument("--trials", type=int)
    experiment.add_argument("--seed", type=int, help="Base seed; trial seeds derive from it")
    experiment.add_argument("--diam-hint", type=float)
    experiment.add_argument("--sample-size", type=int)
    experiment.add_argument("--full-sample", action="store_true")
    experiment.add_argument("--no-timing", action="store_true", help="Record wall_time_ms as 0")
    experiment.add_argument("--sweep", help="threshold=V1,V2,... query-law sweep")
    experiment.add_argument("--measure", choices=("auto", "pairs", "queries"), default="auto")
    experiment.add_argument("--threads", type=int, help="Override TREEPROBE_THREADS")
    experiment.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    _add_output_argument(experiment)
    experiment.set_defaults(handler=_cmd_experiment)

    verify = sub.add_parser("verify", help="Run the acceptance battery")
    verify.add_argument("--suite", choices=("acceptance", "quick"), default="acceptance")
    verify.add_argument("--threads", type=int)
    _add_output_argument(verify)
    verify.set_defaults(handler=_cmd_verify)

    return parser


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run the sub-command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_INVALID

    settings = get_settings()
    setup_logging(
        log_level=args.log_level or settings.log_level,
        environment=settings.environment,
        log_file=settings.log_file,
    )
    out = _Output(ResultWriter(verify=settings.write_verify), settings.output_dir)
    handler: Callable[[argparse.Namespace, _Output], int] = args.handler

    try:
        return handler(args, out)
    except TreeProbeError as e:
        logger.error("Command rejected", command=args.command, error=str(e), error_type=type(e).__name__)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:
        logger.exception("Command failed", command=args.command, error=str(e))
        print(f"unexpected error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    finally:
        stats = out.writer.get_stats()
        if stats["total_writes"]:
            logger.info("Output files", command=args.command, **stats)
