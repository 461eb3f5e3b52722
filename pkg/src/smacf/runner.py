"""End-to-end experiment orchestration: split, train, evaluate, persist.

Every run writes ``report.json`` (bitwise-reproducible from the config),
``epochs.csv`` (plot-ready per-epoch rows), and ``model.bin`` into its own
directory; wall-clock timings go to a separate ``timings.csv`` so they never
contaminate the reproducible artifacts. Aggregates are mean and standard
deviation (ddof=1 for more than one run) over the per-seed final metrics.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .config import ExperimentConfig
from .data import SparseRatingMatrix, binarize, load_movielens, split_train_test, subsample_entries
from .metrics import evaluate_topn, generalization_gap, stability_estimate
from .report import RunReport, Stopwatch
from .seeding import derive_seed
from .validation import ConfigError, DataError, DivergenceError

TOPN_CUTOFFS = (1, 5, 10, 20)
SPARSITY_STREAM_BASE = 10_000  # sub-stream tag space for sparsity subsampling


def load_dataset(cfg: ExperimentConfig) -> SparseRatingMatrix:
    return load_movielens(cfg.dataset, cfg.fmt)


def _empty_like(matrix: SparseRatingMatrix) -> SparseRatingMatrix:
    return matrix.take(np.array([], dtype=np.int64))


def _augment_final_metrics(cfg, estimator, train, test):
    """Recompute the task's full final-metric set from the fitted model."""
    final = dict(estimator.report_.final_metrics)
    model = estimator.model_
    if cfg.task == "topn":
        for n in TOPN_CUTOFFS:
            result = evaluate_topn(model, train, test, n)
            final[f"test_precision_at_{n}"] = result.precision_at
            final[f"test_ndcg_at_{n}"] = result.ndcg_at
        # train-side ranking quality: no exclusions, train positives as targets
        train_side = evaluate_topn(model, _empty_like(train), train, 10)
        final["train_precision_at_10"] = train_side.precision_at
        final["train_ndcg_at_10"] = train_side.ndcg_at
    estimator.report_.final_metrics = final
    estimator.report_.final_metrics["generalization_gap"] = generalization_gap(
        estimator.report_,
        "rmse" if cfg.task == "rating" else "precision_at_10")


def run_single(cfg: ExperimentConfig, seed: int, data: SparseRatingMatrix | None = None,
               param_override: dict | None = None):
    """One seeded pipeline pass; returns the fitted estimator and its report."""
    if data is None:
        data = load_dataset(cfg)
    pair = split_train_test(data, cfg.ratio, seed)
    train, test = pair.train, pair.test
    if cfg.task == "topn":
        train, test = binarize(train), binarize(test)
    estimator = cfg.make_estimator(seed, param_override)
    with Stopwatch() as watch:
        estimator.fit(train, test)
    _augment_final_metrics(cfg, estimator, train, test)
    report = estimator.report_
    report.wall_time = watch.elapsed
    report.config = {**report.config, "dataset": cfg.dataset, "format": cfg.fmt,
                     "task": cfg.task, "ratio": cfg.ratio}
    return estimator, report


def aggregate_metrics(reports) -> dict:
    """Mean and std per final metric over the successful runs."""
    good = [r for r in reports if r.error is None]
    out = {"n_runs": len(reports), "n_failed": len(reports) - len(good)}
    if not good:
        return out
    keys = set(good[0].final_metrics)
    for r in good[1:]:
        keys &= set(r.final_metrics)
    metrics = {}
    for key in sorted(keys):
        values = [float(r.final_metrics[key]) for r in good]
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        metrics[key] = {"mean": float(np.mean(values)), "std": std, "values": values}
    out["metrics"] = metrics
    return out


def _persist_run(out_dir, seed, estimator, report):
    run_dir = os.path.join(out_dir, f"run_{seed}")
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json(include_timing=False))
    report.write_epochs_csv(os.path.join(run_dir, "epochs.csv"))
    if estimator is not None:
        estimator.model_.save(os.path.join(run_dir, "model.bin"))
        plan = getattr(estimator, "plan_", None)
        if plan is not None:
            with open(os.path.join(run_dir, "plan.txt"), "w", encoding="utf-8") as fh:
                fh.write(plan.describe() + "\n")
    timing_path = os.path.join(out_dir, "timings.csv")
    new = not os.path.exists(timing_path)
    with open(timing_path, "a", encoding="utf-8") as fh:
        if new:
            fh.write("seed,wall_time\n")
        fh.write(f"{seed},{report.wall_time if report.wall_time is not None else ''}\n")


def run_experiment(cfg: ExperimentConfig, out_dir, data: SparseRatingMatrix | None = None,
                   param_override: dict | None = None) -> list:
    """All configured seeds of one experiment; persists runs plus an aggregate.

    A diverging seed is recorded as a failed report and does not abort the
    remaining seeds.
    """
    os.makedirs(out_dir, exist_ok=True)
    if data is None:
        data = load_dataset(cfg)
    reports = []
    for seed in cfg.seeds:
        try:
            estimator, report = run_single(cfg, seed, data, param_override)
        except DivergenceError as exc:
            estimator = None
            report = RunReport(config={**cfg.to_dict(), "run_seed": seed}, seed=seed,
                               error=str(exc))
        _persist_run(out_dir, seed, estimator, report)
        reports.append(report)
    aggregate = {"config": cfg.to_dict(), "results": aggregate_metrics(reports)}
    if param_override:
        aggregate["param_override"] = dict(param_override)
    with open(os.path.join(out_dir, "aggregate.json"), "w", encoding="utf-8") as fh:
        json.dump(aggregate, fh, indent=2, sort_keys=True)
    return reports


def run_sweep(cfg: ExperimentConfig, out_dir) -> dict:
    """One experiment per sweep value; emits a plot-ready summary CSV."""
    if not cfg.sweep_param:
        raise ConfigError("config declares no sweep (set sweep_param/sweep_values)")
    os.makedirs(out_dir, exist_ok=True)
    data = load_dataset(cfg)
    summary = {}
    for value in cfg.sweep_values:
        sub_dir = os.path.join(out_dir, f"{cfg.sweep_param}_{value}")
        reports = run_experiment(cfg, sub_dir, data, cfg.replace_sweep_value(value))
        summary[value] = aggregate_metrics(reports)
    _write_sweep_csv(os.path.join(out_dir, "sweep_summary.csv"), cfg.sweep_param, summary)
    return summary


def _write_sweep_csv(path, param, summary):
    metric_names = sorted({name for agg in summary.values()
                           for name in agg.get("metrics", {})})
    with open(path, "w", encoding="utf-8") as fh:
        header = [param]
        for name in metric_names:
            header += [f"{name}_mean", f"{name}_std"]
        fh.write(",".join(header) + "\n")
        for value, agg in summary.items():
            row = [str(value)]
            for name in metric_names:
                stats = agg.get("metrics", {}).get(name)
                row += ([repr(stats["mean"]), repr(stats["std"])] if stats else ["", ""])
            fh.write(",".join(row) + "\n")


def run_sparsity_sweep(cfg: ExperimentConfig, train_fractions, out_dir) -> dict:
    """Train on seeded sub-fractions of each split's train side.

    The test side stays untouched. Fraction 1.0 skips subsampling entirely, so
    those runs are identical to :func:`run_experiment`.
    """
    for fraction in train_fractions:
        if not (0.0 < fraction <= 1.0):
            raise ConfigError(f"train fraction must be in (0, 1], got {fraction}")
    os.makedirs(out_dir, exist_ok=True)
    data = load_dataset(cfg)
    summary = {}
    for f_index, fraction in enumerate(train_fractions):
        frac_dir = os.path.join(out_dir, f"frac_{fraction:g}")
        os.makedirs(frac_dir, exist_ok=True)
        reports = []
        for seed in cfg.seeds:
            pair = split_train_test(data, cfg.ratio, seed)
            train, test = pair.train, pair.test
            if fraction < 1.0:
                train = subsample_entries(
                    train, fraction, derive_seed(seed, SPARSITY_STREAM_BASE + f_index))
            if cfg.task == "topn":
                train, test = binarize(train), binarize(test)
            estimator = cfg.make_estimator(seed)
            try:
                with Stopwatch() as watch:
                    estimator.fit(train, test)
                _augment_final_metrics(cfg, estimator, train, test)
                report = estimator.report_
                report.wall_time = watch.elapsed
                report.config = {**report.config, "dataset": cfg.dataset,
                                 "task": cfg.task, "ratio": cfg.ratio,
                                 "train_fraction": fraction}
            except DivergenceError as exc:
                estimator = None
                report = RunReport(config={**cfg.to_dict(), "train_fraction": fraction},
                                   seed=seed, error=str(exc))
            _persist_run(frac_dir, seed, estimator, report)
            reports.append(report)
        summary[fraction] = aggregate_metrics(reports)
        with open(os.path.join(frac_dir, "aggregate.json"), "w", encoding="utf-8") as fh:
            json.dump({"config": cfg.to_dict(), "train_fraction": fraction,
                       "results": summary[fraction]}, fh, indent=2, sort_keys=True)
    _write_sweep_csv(os.path.join(out_dir, "sparsity_summary.csv"), "train_fraction", summary)
    return summary


def run_stability(cfg: ExperimentConfig, epsilon: float, n_runs: int, out_dir):
    """Stability estimation over repeated splits; persists the per-run CSV.

    With a sweep configured, one estimate is produced per sweep value (the
    rank sweep reproduces the stability-versus-capacity table); the summary
    CSV then has one probability row per value.
    """
    if cfg.task != "rating":
        raise ConfigError("stability estimation is defined for the rating task")
    os.makedirs(out_dir, exist_ok=True)
    data = load_dataset(cfg)
    master_seed = cfg.seeds[0]

    def one(trainer, tag):
        estimate = stability_estimate(data, trainer, epsilon, n_runs, master_seed,
                                      ratio=cfg.ratio)
        estimate.write_csv(os.path.join(out_dir, f"stability{tag}.csv"))
        payload = {
            "config": cfg.to_dict(), "epsilon": epsilon, "n_runs": n_runs,
            "master_seed": master_seed, "successes": estimate.successes,
            "probability": estimate.probability, "diverged": estimate.diverged,
        }
        with open(os.path.join(out_dir, f"stability{tag}.json"), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        return estimate

    if not cfg.sweep_param:
        return one(cfg.make_estimator(seed=0), "")

    estimates = {}
    rows = []
    for value in cfg.sweep_values:
        trainer = cfg.make_estimator(seed=0, param_override=cfg.replace_sweep_value(value))
        estimates[value] = one(trainer, f"_{cfg.sweep_param}_{value}")
        rows.append((value, estimates[value].probability))
    with open(os.path.join(out_dir, "stability_summary.csv"), "w", encoding="utf-8") as fh:
        fh.write(f"{cfg.sweep_param},probability\n")
        for value, prob in rows:
            fh.write(f"{value},{prob!r}\n")
    return estimates
