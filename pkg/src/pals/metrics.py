"""AUC, TPR at a fixed FPR, bootstrap intervals and run aggregation."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    ci_low: float
    ci_high: float
    n_runs: int


def _check(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise MetricError(f"{s.size} scores for {y.size} labels")
    if np.any((y != 0) & (y != 1)):
        raise MetricError("labels must be 0/1")
    y = y.astype(bool)
    if y.all() or not y.any():
        raise MetricError("need at least one positive and one negative")
    return s, y


def auc(scores, labels):
    """Mann-Whitney AUC with ties counted half, from rank sums."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    ranks = rankdata(s)  # average ranks credit ties 0.5
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def tpr_at_fpr(scores, labels, target_fpr=0.1):
    """TPR at the lowest threshold whose FPR does not exceed ``target_fpr``.

    Nodes with score >= threshold are called positive. No interpolation
    between operating points.
    """
    if not 0.0 < target_fpr < 1.0:
        raise MetricError("target_fpr must lie in (0, 1)")
    s, y = _check(scores, labels)
    thresholds = np.unique(s)[::-1]
    neg = np.sort(s[~y])
    pos = np.sort(s[y])
    # number of negatives / positives with score >= threshold
    fp = neg.size - np.searchsorted(neg, thresholds, side="left")
    tp = pos.size - np.searchsorted(pos, thresholds, side="left")
    ok = fp / neg.size <= target_fpr + 1e-12
    if not ok.any():
        return 0.0
    return float(tp[ok].max() / pos.size)


def bootstrap_ci(values=None, confidence=0.95, resamples=1000, seed=0, resampler=None, n=None):
    """Percentile bootstrap.

    Either pass ``values`` (the mean is bootstrapped) or a ``resampler``
    callable ``f(index_array) -> statistic`` over ``n`` units, e.g. test
    patients. The reported centre is the statistic on the full sample.
    """
    rng = np.random.default_rng(seed)
    if resampler is None:
        vals = np.asarray(values, dtype=float).ravel()
        if vals.size < 1:
            raise ValueError("no values to summarize")
        n = vals.size
        centre = float(vals.mean())
        idx = rng.integers(0, n, size=(resamples, n))
        stats = vals[idx].mean(axis=1)
    else:
        if n is None or n < 2:
            raise ValueError("resampler needs n >= 2 units")
        centre = float(resampler(np.arange(n)))
        stats = []
        for _ in range(resamples):
            try:
                stats.append(resampler(rng.integers(0, n, size=n)))
            except MetricError:
                continue  # resample with a single class
        stats = np.asarray(stats, dtype=float)
    alpha = (1.0 - confidence) / 2.0
    lo, hi = np.quantile(stats, [alpha, 1 - alpha]) if stats.size else (centre, centre)
    return MetricSummary(centre, float(min(lo, centre)), float(max(hi, centre)), int(n))


def aggregate_runs(values, confidence=0.95, resamples=1000, seed=0):
    """Mean over runs with a bootstrap-over-runs interval."""
    vals = np.asarray(values, dtype=float).ravel()
    if vals.size < 1:
        raise ValueError("need at least one run")
    if vals.size == 1 or np.all(vals == vals[0]):
        m = float(vals.mean())
        return MetricSummary(m, m, m, int(vals.size))
    return bootstrap_ci(vals, confidence, resamples, seed)


METRICS_HEADER = ["experiment", "grid_value", "model", "metric", "mean", "ci_low", "ci_high", "n_runs"]


def write_metrics_csv(rows, path):
    """``rows``: iterables of (experiment, grid_value, model, metric, MetricSummary)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for exp, grid, model, metric, s in rows:
            w.writerow([exp, f"{grid:g}", model, metric, f"{s.mean:.6f}", f"{s.ci_low:.6f}",
                        f"{s.ci_high:.6f}", s.n_runs])


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        out = []
        for row in reader:
            out.append((row["experiment"], float(row["grid_value"]), row["model"], row["metric"],
                        MetricSummary(float(row["mean"]), float(row["ci_low"]), float(row["ci_high"]),
                                      int(row["n_runs"]))))
        return out
