"""Command-line interface.

Subcommands: ``split``, ``train``, ``evaluate``, ``experiment``, ``sweep``,
``stability``. Config-file values can be overridden with flags of the same
name. Exit codes: 0 on success, 2 for configuration errors, 3 for data
errors, 4 for training divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ExperimentConfig
from .data import binarize, load_movielens, load_split, save_split, split_train_test
from .metrics import evaluate_topn
from .model import FactorModel, rmse
from .report import Stopwatch
from .runner import (
    TOPN_CUTOFFS,
    _augment_final_metrics,
    _persist_run,
    run_experiment,
    run_sparsity_sweep,
    run_stability,
    run_sweep,
)
from .validation import ConfigError, DataError, DivergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

# (flag, config target) pairs; every flag overrides the file value
OVERRIDE_FLAGS = [
    ("--dataset", "experiment.dataset"),
    ("--format", "experiment.format"),
    ("--task", "experiment.task"),
    ("--trainer", "experiment.trainer"),
    ("--ratio", "experiment.ratio"),
    ("--seeds", "experiment.seeds"),
    ("--sweep-param", "experiment.sweep_param"),
    ("--sweep-values", "experiment.sweep_values"),
    ("--rank", "train.rank"),
    ("--lr", "train.lr"),
    ("--mu1", "train.mu1"),
    ("--mu2", "train.mu2"),
    ("--max-epochs", "train.max_epochs"),
    ("--conv-eps", "train.conv_eps"),
    ("--init-scale", "train.init_scale"),
    ("--clamp", "train.clamp"),
    ("--center", "train.center"),
    ("--eval-every", "train.eval_every"),
    ("--eval-n", "train.eval_n"),
    ("--K", "sma_rating.K"),
    ("--p", "sma_rating.p"),
    ("--lambdas", "sma_rating.lambdas"),
    ("--loss", "topn.loss"),
    ("--gamma", "topn.gamma"),
    ("--w-pos", "topn.w_pos"),
    ("--w-neg", "topn.w_neg"),
    ("--lambda0", "topn.lambda0"),
    ("--lambda1", "topn.lambda1"),
]


def _add_override_flags(sub):
    for flag, target in OVERRIDE_FLAGS:
        sub.add_argument(flag, dest=target, metavar="VALUE", default=None,
                         help=f"override {target}")


def _collect_overrides(args) -> dict:
    overrides = {}
    for _, target in OVERRIDE_FLAGS:
        value = getattr(args, target, None)
        if value is not None:
            overrides[target] = value
    return overrides


def _load_config(args) -> ExperimentConfig:
    return ExperimentConfig.from_file(args.config, _collect_overrides(args))


def cmd_split(args) -> int:
    matrix = load_movielens(args.data, args.format)
    pair = split_train_test(matrix, args.ratio, args.seed)
    train_path, test_path = save_split(pair, args.out_dir)
    print(f"split {matrix.nnz} entries of {matrix.m}x{matrix.n} -> "
          f"{pair.train.nnz} train / {pair.test.nnz} test")
    print(f"wrote {train_path}, {test_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    if args.split_dir:
        pair = load_split(args.split_dir)
        train, test = pair.train, pair.test
        if cfg.task == "topn":
            train, test = binarize(train), binarize(test)
        estimator = cfg.make_estimator(args.seed)
        with Stopwatch() as watch:
            estimator.fit(train, test)
        _augment_final_metrics(cfg, estimator, train, test)
        report = estimator.report_
        report.wall_time = watch.elapsed
        report.config = {**report.config, "split_dir": args.split_dir,
                         "task": cfg.task}
    else:
        from .runner import load_dataset, run_single
        estimator, report = run_single(cfg, args.seed, load_dataset(cfg))
    os.makedirs(args.out_dir, exist_ok=True)
    _persist_run(args.out_dir, args.seed, estimator, report)
    print(json.dumps(report.final_metrics, indent=2, sort_keys=True))
    print(f"run artifacts in {os.path.join(args.out_dir, f'run_{args.seed}')}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = FactorModel.load(args.model)
    pair = load_split(args.split_dir)
    train, test = pair.train, pair.test
    if args.task == "topn":
        train, test = binarize(train), binarize(test)
        metrics = {}
        for n in args.n or TOPN_CUTOFFS:
            result = evaluate_topn(model, train, test, n)
            metrics[f"test_precision_at_{n}"] = result.precision_at
            metrics[f"test_ndcg_at_{n}"] = result.ndcg_at
    else:
        metrics = {"train_rmse": rmse(model, train), "test_rmse": rmse(model, test)}
    text = json.dumps(metrics, indent=2, sort_keys=True)
    print(text)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        with open(os.path.join(args.out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _load_config(args)
    reports = run_experiment(cfg, args.out_dir)
    failed = sum(1 for r in reports if r.error is not None)
    print(f"{len(reports)} runs ({failed} failed); aggregate in "
          f"{os.path.join(args.out_dir, 'aggregate.json')}")
    return EXIT_OK if failed == 0 else EXIT_DIVERGED


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    summary = run_sweep(cfg, args.out_dir)
    for value, agg in summary.items():
        print(f"{cfg.sweep_param}={value}: {agg['n_runs']} runs, "
              f"{agg['n_failed']} failed")
    print(f"summary in {os.path.join(args.out_dir, 'sweep_summary.csv')}")
    return EXIT_OK


def cmd_sparsity(args) -> int:
    cfg = _load_config(args)
    fractions = [float(f) for f in args.fractions.split(",")]
    run_sparsity_sweep(cfg, fractions, args.out_dir)
    print(f"summary in {os.path.join(args.out_dir, 'sparsity_summary.csv')}")
    return EXIT_OK


def cmd_stability(args) -> int:
    cfg = _load_config(args)
    result = run_stability(cfg, args.epsilon, args.n_runs, args.out_dir)
    if isinstance(result, dict):
        for value, estimate in result.items():
            print(f"{cfg.sweep_param}={value}: probability={estimate.probability:.4f}")
    else:
        print(f"probability={result.probability:.4f} "
              f"({result.successes}/{result.n_runs} gaps < {result.epsilon})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smacf",
        description="Stability-regularized matrix factorization for collaborative filtering")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("split", help="write a seeded train/test split")
    sp.add_argument("--data", required=True)
    sp.add_argument("--format", default="ml100k")
    sp.add_argument("--ratio", type=float, default=0.9)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_split)

    tr = sub.add_parser("train", help="train one model from a config")
    tr.add_argument("--config", required=True)
    tr.add_argument("--seed", type=int, required=True)
    tr.add_argument("--out-dir", required=True)
    tr.add_argument("--split-dir", default=None,
                    help="reuse a cached split instead of splitting the dataset")
    _add_override_flags(tr)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="evaluate a saved model on a cached split")
    ev.add_argument("--model", required=True)
    ev.add_argument("--split-dir", required=True)
    ev.add_argument("--task", choices=("rating", "topn"), default="rating")
    ev.add_argument("--n", type=int, nargs="*", default=None,
                    help="top-N cutoffs (topn task)")
    ev.add_argument("--out-dir", default=None)
    ev.set_defaults(func=cmd_evaluate)

    ex = sub.add_parser("experiment", help="run all configured seeds")
    ex.add_argument("--config", required=True)
    ex.add_argument("--out-dir", required=True)
    _add_override_flags(ex)
    ex.set_defaults(func=cmd_experiment)

    sw = sub.add_parser("sweep", help="run the configured parameter sweep")
    sw.add_argument("--config", required=True)
    sw.add_argument("--out-dir", required=True)
    _add_override_flags(sw)
    sw.set_defaults(func=cmd_sweep)

    sy = sub.add_parser("sparsity", help="sweep over training-set fractions")
    sy.add_argument("--config", required=True)
    sy.add_argument("--fractions", required=True, help="comma list in (0, 1]")
    sy.add_argument("--out-dir", required=True)
    _add_override_flags(sy)
    sy.set_defaults(func=cmd_sparsity)

    st = sub.add_parser("stability", help="estimate gap concentration over repeated splits")
    st.add_argument("--config", required=True)
    st.add_argument("--epsilon", type=float, required=True)
    st.add_argument("--n-runs", type=int, required=True)
    st.add_argument("--out-dir", required=True)
    _add_override_flags(st)
    st.set_defaults(func=cmd_stability)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
