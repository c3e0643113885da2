"""Command-line interface: ``ripml {train,predict,eval,sweep,ripcheck}``.

Exit codes: 0 success, 1 usage/config error, 2 data error (including missing
files), 3 numerical failure.  ``RIPML_THREADS`` sets the default for
``--threads``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
import time

from . import __version__
from .errors import ConfigError, DataError, NumericError
from .evaluation import SweepPlan, evaluate, run_sweep
from .model import Hyper, train, train_clustered
from .neighbors import Metric
from .projection import Ensemble, ProjectionSpec, rip_check
from .ridge import CLOSED_FORM_MAX_D
from .seeding import derive_seed
from .serialization import load_model, save_model
from .sparse import dataset_stats, load_dataset

log = logging.getLogger("ripml")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
THREADS_ENV = "RIPML_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _int_list(s: str) -> list[int]:
    try:
        return [int(v) for v in s.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _add_hyper(p, with_m=True):
    if with_m:
        p.add_argument("--m", type=int, default=100, help="embedding dimension")
    p.add_argument("--learners", type=int, default=5, help="number of learners F")
    p.add_argument("--lambda", dest="lam", type=float, default=0.1, help="ridge regularization")
    p.add_argument("--knn", type=int, default=5, help="number of nearest neighbors k")
    p.add_argument("--top", type=int, default=5, help="number of labels to predict p")
    p.add_argument("--metric", choices=[m.value for m in Metric], default=Metric.SQUARED_EUCLIDEAN.value)
    p.add_argument("--ensemble", choices=[Ensemble.GAUSSIAN.value, Ensemble.BERNOULLI.value],
                   default=Ensemble.GAUSSIAN.value)
    p.add_argument("--solver", choices=["auto", "closed_form", "gradient_descent"], default="auto",
                   help=f"auto = closed_form when d <= {CLOSED_FORM_MAX_D}, otherwise an explicit choice is required")
    p.add_argument("--max-iters", type=int, default=100_000, help="gradient descent iteration cap")
    p.add_argument("--tol", type=float, default=1e-18, help="gradient descent objective-decrease tolerance")
    p.add_argument("--step-size", type=float, default=None, help="gradient descent step (default from a power iteration)")
    p.add_argument("--clusters", type=int, default=1, help="number of KMeans shards C (1 = no clustering)")


class _DefaultsFormatter(argparse.ArgumentDefaultsHelpFormatter):
    # Skip the suffix when the help already describes the default or there is none.
    def _get_help_string(self, action):
        text = action.help or ""
        if action.default is None or "(default" in text:
            return text
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _DefaultsFormatter
    parser = _Parser(prog="ripml", description="Random-projection multilabel learning.", formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"ripml {__version__}")
    common = _Parser(add_help=False, formatter_class=fmt)
    common.add_argument("--seed", type=int, default=0, help="master seed; all randomness derives from it")
    common.add_argument("--threads", type=int, default=_default_threads(),
                        help=f"worker threads; ${THREADS_ENV} sets the default")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", parents=[common], formatter_class=fmt, help="train a model")
    p.add_argument("--data", required=True, help="training dataset file")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--log", default=None, help="training log file (default: <out>.log)")
    _add_hyper(p)

    p = sub.add_parser("predict", parents=[common], formatter_class=fmt, help="predict labels")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="dataset whose features are scored (labels ignored)")
    p.add_argument("--knn", type=int, default=None, help="k (default: the model's)")
    p.add_argument("--top", type=int, default=None, help="p (default: the model's)")
    p.add_argument("--out", default="-", help="predictions file, '-' for stdout")

    p = sub.add_parser("eval", parents=[common], formatter_class=fmt, help="precision@K on a test set")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="test dataset file")
    p.add_argument("--ks", type=_int_list, default=[1, 3, 5], help="comma-separated K values")
    p.add_argument("--knn", type=int, default=None, help="k (default: the model's)")
    p.add_argument("--out", default=None, help="report file (default: stdout only)")

    p = sub.add_parser("sweep", parents=[common], formatter_class=fmt, help="parameter sweep to CSV")
    p.add_argument("--data", required=True, help="training dataset; for --axis d use a '{d}' placeholder")
    p.add_argument("--test", default=None, help="test dataset (omit to re-split per repeat)")
    p.add_argument("--train-fraction", type=float, default=0.9, help="train share when re-splitting")
    p.add_argument("--axis", choices=["m", "k", "C", "d"], required=True)
    p.add_argument("--values", required=True, help="comma-separated values; m accepts fractions like 0.2L")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--ks", type=_int_list, default=[1, 3, 5])
    p.add_argument("--out-prefix", default="sweep_", help="writes <prefix>runs.csv, summary.csv, timings.csv, report.txt")
    _add_hyper(p)

    p = sub.add_parser("ripcheck", parents=[common], formatter_class=fmt, help="empirical RIP distortion")
    p.add_argument("--L", type=int, required=True, help="ambient dimension")
    p.add_argument("--m", type=int, required=True, help="embedding dimension")
    p.add_argument("--k", type=int, required=True, help="sparsity of the test vectors")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--ensemble", choices=[Ensemble.GAUSSIAN.value, Ensemble.BERNOULLI.value],
                   default=Ensemble.GAUSSIAN.value)
    p.add_argument("--mode", choices=["sparse", "pairs"], default="sparse")
    p.add_argument("--out", default="ripcheck.csv", help="per-trial CSV")
    p.add_argument("--report", default=None, help="key=value report (default: <out>.txt)")
    return parser


def _hyper_from(args, m=None) -> Hyper:
    solver = args.solver if args.solver != "auto" else "closed_form"
    return Hyper(
        m=args.m if m is None else m,
        learners=args.learners,
        lam=args.lam,
        metric=args.metric,
        k=args.knn,
        p=args.top,
        ensemble=args.ensemble,
        solver=solver,
        max_iters=args.max_iters,
        tol=args.tol,
        step_size=args.step_size,
    )


def _check_solver(args, d: int):
    if args.solver == "auto" and d > CLOSED_FORM_MAX_D:
        raise ConfigError(f"d={d} exceeds {CLOSED_FORM_MAX_D}; pass --solver closed_form or gradient_descent")


def _write_atomic(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".ripml-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _validate_common(args):
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    if not 0 <= args.seed < 2**64:
        raise ConfigError("--seed must be a 64-bit unsigned integer")


def cmd_train(args) -> int:
    hyper = _hyper_from(args)
    if args.clusters < 1:
        raise ConfigError("--clusters must be >= 1")
    data = load_dataset(args.data)
    _check_solver(args, data.n_features)
    nx, ny = dataset_stats(data)
    t0 = time.perf_counter()
    if args.clusters == 1:
        model = train(data, hyper, args.seed, args.threads)
        excluded = model.excluded.size
    else:
        model = train_clustered(data, hyper, args.clusters, args.seed, threads=args.threads)
        excluded = sum(mdl.excluded.size for mdl in model.models)
    elapsed = time.perf_counter() - t0
    save_model(model, args.out)
    lines = [
        f"data={args.data}",
        f"n_points={data.n_points}",
        f"d={data.n_features}",
        f"L={data.n_labels}",
        f"avg_nnz_x={nx:.4f}",
        f"avg_nnz_y={ny:.4f}",
        f"excluded_zero_label_points={excluded}",
        f"m={hyper.m} learners={hyper.learners} lambda={hyper.lam} clusters={args.clusters} seed={args.seed}",
        f"train_seconds={elapsed:.3f}",
        f"model={args.out}",
    ]
    for line in lines:
        log.info(line)
    _write_atomic(args.log or args.out + ".log", "\n".join(lines) + "\n")
    return EXIT_OK


def format_prediction(pred) -> str:
    """``id:score`` fields, tab-separated, then a ``shortfall=<n>`` column."""
    fields = [f"{int(i)}:{float(s)!r}" for i, s in zip(pred.top_labels, pred.top_scores)]
    return "\t".join(fields + [f"shortfall={pred.missing}"])


def parse_prediction_line(line: str) -> tuple[list[tuple[int, float]], int]:
    *fields, flag = line.rstrip("\n").split("\t")
    if not flag.startswith("shortfall="):
        raise DataError(f"prediction line lacks a shortfall column: {line!r}")
    pairs = []
    for f in fields:
        i, s = f.split(":", 1)
        pairs.append((int(i), float(s)))
    return pairs, int(flag.split("=", 1)[1])


def cmd_predict(args) -> int:
    model = load_model(args.model)
    data = load_dataset(args.data)
    if data.n_features != model.n_features:
        raise DataError(f"dataset has d={data.n_features}, model expects d={model.n_features}")
    p = model.hyper.p if args.top is None else args.top
    preds = model.predict_many(data.feature_matrix, k=args.knn, p=p, threads=args.threads)
    text = "".join(format_prediction(pr) + "\n" for pr in preds)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        _write_atomic(args.out, text)
    return EXIT_OK


def cmd_eval(args) -> int:
    if not args.ks or min(args.ks) < 1:
        raise ConfigError("--ks must list positive integers")
    model = load_model(args.model)
    data = load_dataset(args.data)
    res = evaluate(model, data, args.ks, k=args.knn, threads=args.threads)
    res.config = {"model": args.model, "data": args.data, **res.config}
    text = res.report()
    sys.stdout.write(text)
    if args.out:
        _write_atomic(args.out, text)
    return EXIT_OK


def _parse_values(axis: str, raw: str) -> tuple:
    vals = [v.strip() for v in raw.split(",") if v.strip()]
    if axis == "m":
        return tuple(int(v) if v.isdigit() else v for v in vals)
    try:
        return tuple(int(v) for v in vals)
    except ValueError:
        raise ConfigError(f"--values for axis {axis} must be integers") from None


def cmd_sweep(args) -> int:
    values = _parse_values(args.axis, args.values)
    m0 = args.m
    hyper = _hyper_from(args, m=m0)
    plan = SweepPlan(args.axis, values, hyper, args.repeats, args.seed, args.clusters, tuple(args.ks),
                     args.train_fraction)
    if args.axis == "d":
        if "{d}" not in args.data:
            raise ConfigError("--axis d needs a '{d}' placeholder in --data")

        def datasets(v):
            tr = load_dataset(args.data.format(d=v))
            te = load_dataset(args.test.format(d=v)) if args.test else None
            _check_solver(args, tr.n_features)
            return tr, te

        result = run_sweep(plan, datasets=datasets, threads=args.threads)
    else:
        tr = load_dataset(args.data)
        te = load_dataset(args.test) if args.test else None
        _check_solver(args, tr.n_features)
        result = run_sweep(plan, tr, te, threads=args.threads)
    prefix = args.out_prefix
    _write_atomic(prefix + "runs.csv", result.runs_csv())
    _write_atomic(prefix + "summary.csv", result.summary_csv())
    _write_atomic(prefix + "timings.csv", result.timings_csv())
    _write_atomic(prefix + "report.txt", result.report())
    sys.stdout.write(result.report())
    return EXIT_OK


def cmd_ripcheck(args) -> int:
    spec = ProjectionSpec(args.ensemble, args.m, args.L, args.seed)
    if not 1 <= args.k <= args.L:
        raise ConfigError(f"--k must be in [1, {args.L}]")
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    report = rip_check(spec, args.k, args.trials, derive_seed(args.seed, "ripcheck"),
                       mode=args.mode, threads=args.threads)
    _write_atomic(args.out, report.to_csv())
    text = f"ensemble={args.ensemble}\nL={args.L}\nm={args.m}\nseed={args.seed}\n" + report.to_text()
    _write_atomic(args.report or args.out + ".txt", text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "ripcheck": cmd_ripcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose + 1, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        _validate_common(args)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"ripml: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"ripml: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, OSError) as exc:
        print(f"ripml: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"ripml: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
