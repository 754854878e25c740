"""Synthetic experiment grids: simulate, fit, benchmark and score every replicate."""

from __future__ import annotations

import csv
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import benchmarks as bm
from . import model, synth
from .metrics import MetricError, aggregate_runs, auc, tpr_at_fpr, write_metrics_csv

log = logging.getLogger(__name__)

EXPERIMENTS = {"1": "exp1", "2": "exp2", "3": "exp3", "exp1": "exp1", "exp2": "exp2", "exp3": "exp3"}

# model labels as they appear in metrics.csv and curves.csv
Y_PALS = "y-PALS"
Z_PALS = "z-PALS"
NONET = "NoNet"
ETA_O = "eta_O"
Z_O = "z_O"
Y_PALS_T = "y-PALS-T"
Z_PALS_T = "z-PALS-T"
Y_PALS_TT = "y-PALS-TT"
ETA_O_K = "eta_O(k)"

# models whose scores rank spreaders rather than infections
SPREADER_MODELS = (Z_PALS, Z_O, Z_PALS_T)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "exp1"
    runs: int = 30
    base_seed: int = 0
    jobs: int = 1
    fit: model.FitConfig = field(default_factory=model.FitConfig)
    cohort: synth.SynthConfig = field(default_factory=synth.SynthConfig)
    target_fpr: float = 0.1
    confidence: float = 0.95
    resamples: int = 1000

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        object.__setattr__(self, "experiment", EXPERIMENTS[self.experiment])
        if self.runs < 1 or self.jobs < 1:
            raise ValueError("runs and jobs must be at least 1")


@dataclass
class RunResult:
    grid_value: float
    run: int
    scores: dict  # model -> {"auc": value, "tpr_at_fpr": value}
    error: str | None = None


def _score(scores, labels, target_fpr):
    return {"auc": auc(scores, labels), "tpr_at_fpr": tpr_at_fpr(scores, labels, target_fpr)}


def run_replicate(cohort: synth.SynthConfig, experiment, fit_config: model.FitConfig, target_fpr=0.1):
    """All models of one experiment on one simulated train/test split.

    Returns {model label: {metric: value}}.
    """
    tr_net, tr_truth, te_net, te_truth = synth.generate_split(cohort)
    train, test = (tr_net, tr_truth.y), (te_net, te_truth.y)
    truths = (tr_truth, te_truth)
    y_te = te_truth.y[te_net.main_indices]
    z_te = te_truth.z_true[te_net.main_indices]
    out = {}

    if experiment in ("exp1", "exp2"):
        fitted = model.fit(tr_net, tr_truth.y, None, fit_config)
        out[Y_PALS] = _score(model.predict_infection(fitted.weights, te_net, None, fit_config), y_te, target_fpr)
        out[Z_PALS] = _score(model.predict_spreader(fitted.weights, te_net.features[te_net.main_indices]),
                             z_te, target_fpr)
        out[NONET] = _score(bm.run_nonet(train, test), y_te, target_fpr)
        out[ETA_O] = _score(bm.run_eta_oracle(train, test, truths), y_te, target_fpr)
        out[Z_O] = _score(bm.run_z_oracle(train, test, truths), z_te, target_fpr)
        return out

    known_tr = tr_truth.observed_labels()
    known_te = te_truth.observed_labels()
    fitted = model.fit(tr_net, tr_truth.y, known_tr, fit_config)
    w = fitted.weights
    out[Y_PALS_T] = _score(model.predict_infection(w, te_net, None, fit_config), y_te, target_fpr)
    out[Z_PALS_T] = _score(model.predict_spreader(w, te_net.features[te_net.main_indices]), z_te, target_fpr)
    out[Y_PALS_TT] = _score(model.predict_infection(w, te_net, known_te, fit_config), y_te, target_fpr)
    masks = (tr_truth.z_observed_mask, te_truth.z_observed_mask)
    k = cohort.observed_spreader_fraction
    out[ETA_O_K] = _score(bm.run_eta_oracle_k(train, test, truths, k, masks=masks), y_te, target_fpr)
    out[NONET] = _score(bm.run_nonet(train, test), y_te, target_fpr)
    return out


def _task(args):
    index, grid_value, run, cohort, experiment, fit_config, target_fpr = args
    try:
        scores = run_replicate(cohort, experiment, fit_config, target_fpr)
        return RunResult(grid_value, run, scores)
    except (ArithmeticError, ValueError, RuntimeError, MetricError) as exc:
        log.warning("grid point %s run %d failed: %s", grid_value, run, exc)
        return RunResult(grid_value, run, {}, f"{type(exc).__name__}: {exc}")


def grid_tasks(config: ExperimentConfig):
    key, values = synth.EXPERIMENT_GRIDS[config.experiment]
    cohorts = synth.experiment_grid(config.experiment, config.runs, config.base_seed, config.cohort)
    tasks = []
    for idx, cohort in enumerate(cohorts):
        value = values[idx // config.runs]
        tasks.append((idx, float(value), idx % config.runs, cohort, config.experiment, config.fit,
                      config.target_fpr))
    return tasks


def run_experiment(config: ExperimentConfig, progress=None):
    """Every replicate of the grid, in grid-value-major order."""
    tasks = grid_tasks(config)
    if config.jobs == 1:
        results = []
        for t in tasks:
            results.append(_task(t))
            if progress:
                progress(len(results), len(tasks))
        return results
    with ProcessPoolExecutor(max_workers=config.jobs) as pool:
        return list(pool.map(_task, tasks))


def summarize(config: ExperimentConfig, results):
    """metrics.csv rows: (experiment, grid_value, model, metric, MetricSummary)."""
    grouped = {}
    for r in results:
        if r.error:
            continue
        for name, metrics in r.scores.items():
            for metric, value in metrics.items():
                grouped.setdefault((r.grid_value, name, metric), []).append(value)
    rows = []
    for (grid_value, name, metric), values in grouped.items():
        summary = aggregate_runs(values, config.confidence, config.resamples, seed=config.base_seed)
        rows.append((config.experiment, grid_value, name, metric, summary))
    return rows


def mean_table(results, metric="auc"):
    """{model: {grid_value: mean over successful runs}}."""
    acc = {}
    for r in results:
        for name, metrics in r.scores.items():
            acc.setdefault(name, {}).setdefault(r.grid_value, []).append(metrics[metric])
    return {m: {g: float(np.mean(v)) for g, v in sorted(per.items())} for m, per in acc.items()}


CURVES_HEADER = ["experiment", "grid_key", "grid_value", "model", "target", "auc_mean", "auc_ci_low",
                 "auc_ci_high", "n_runs"]
RUNS_HEADER = ["experiment", "grid_value", "run", "model", "metric", "value"]


def _atomic_csv(path, header, rows):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(config: ExperimentConfig, results, out_dir):
    """metrics.csv, curves.csv and runs.csv, each written atomically. Returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    summary = sorted(summarize(config, results), key=lambda r: (r[1], r[2], r[3]))
    metrics_path = os.path.join(out_dir, "metrics.csv")
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".tmp-", suffix=".csv")
    os.close(fd)
    try:
        write_metrics_csv(summary, tmp)
        os.replace(tmp, metrics_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

    key = synth.EXPERIMENT_GRIDS[config.experiment][0]
    curves = []
    for exp, grid, name, metric, s in summary:
        if metric != "auc":
            continue
        target = "spreader" if name in SPREADER_MODELS else "infection"
        curves.append([exp, key, f"{grid:g}", name, target, f"{s.mean:.6f}", f"{s.ci_low:.6f}",
                       f"{s.ci_high:.6f}", s.n_runs])
    curves_path = os.path.join(out_dir, "curves.csv")
    _atomic_csv(curves_path, CURVES_HEADER, curves)

    runs = []
    for r in results:
        for name in sorted(r.scores):
            for metric in sorted(r.scores[name]):
                runs.append([config.experiment, f"{r.grid_value:g}", r.run, name, metric,
                             f"{r.scores[name][metric]:.6f}"])
    runs_path = os.path.join(out_dir, "runs.csv")
    _atomic_csv(runs_path, RUNS_HEADER, runs)
    return [metrics_path, curves_path, runs_path]


def read_runs_csv(path):
    """Per-run values back as RunResult records (successful runs only)."""
    by_key = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RUNS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            k = (float(row["grid_value"]), int(row["run"]))
            rec = by_key.setdefault(k, RunResult(k[0], k[1], {}))
            rec.scores.setdefault(row["model"], {})[row["metric"]] = float(row["value"])
    return [by_key[k] for k in sorted(by_key)]
