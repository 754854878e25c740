from dataclasses import replace

import numpy as np
import pytest

from pals import experiment as ex
from pals import model as M
from pals.metrics import read_metrics_csv
from pals.synth import SynthConfig


def tiny(experiment, runs=1, jobs=1, seed=0):
    cohort = SynthConfig(network=replace(SynthConfig().network, nodes_per_block=(10, 10, 10)))
    return ex.ExperimentConfig(experiment, runs=runs, base_seed=seed, jobs=jobs,
                               fit=M.FitConfig(max_em_rounds=3), cohort=cohort, resamples=50)


@pytest.fixture(scope="module")
def exp1_two_runs():
    cfg = tiny("exp1", runs=2)
    return cfg, ex.run_experiment(cfg)


def test_config_validation():
    assert ex.ExperimentConfig("2").experiment == "exp2"
    with pytest.raises(ValueError):
        ex.ExperimentConfig("exp4")
    with pytest.raises(ValueError):
        ex.ExperimentConfig("exp1", runs=0)


def test_grid_order_and_seeds():
    tasks = ex.grid_tasks(tiny("exp1", runs=3))
    assert [t[1] for t in tasks] == [v for v in (0.5, 0.6, 0.7, 0.8, 0.9) for _ in range(3)]
    assert [t[2] for t in tasks] == [0, 1, 2] * 5
    # the same run index shares its cohort seed across grid values
    assert tasks[0][3].seed == tasks[3][3].seed != tasks[1][3].seed


def test_exp1_models_and_ranges(exp1_two_runs):
    _, results = exp1_two_runs
    assert len(results) == 10 and not any(r.error for r in results)
    for r in results:
        assert set(r.scores) == {ex.Y_PALS, ex.Z_PALS, ex.NONET, ex.ETA_O, ex.Z_O}
        for m in r.scores.values():
            assert set(m) == {"auc", "tpr_at_fpr"}
            assert all(0 <= v <= 1 for v in m.values())


def test_single_run_has_degenerate_intervals():
    cfg = tiny("exp2")
    rows = ex.summarize(cfg, ex.run_experiment(cfg))
    assert rows and all(s.ci_low == s.mean == s.ci_high and s.n_runs == 1 for *_, s in rows)


def test_exp3_models():
    cfg = tiny("exp3")
    results = ex.run_experiment(cfg)
    names = set().union(*(r.scores for r in results))
    assert names == {ex.Y_PALS_T, ex.Z_PALS_T, ex.Y_PALS_TT, ex.ETA_O_K, ex.NONET}


def test_parallel_matches_serial(exp1_two_runs):
    cfg, serial = exp1_two_runs
    parallel = ex.run_experiment(replace(cfg, jobs=2))
    assert [(r.grid_value, r.run, r.scores) for r in parallel] == [(r.grid_value, r.run, r.scores) for r in serial]


def test_outputs_round_trip(exp1_two_runs, tmp_path):
    cfg, results = exp1_two_runs
    paths = ex.write_outputs(cfg, results, tmp_path)
    assert [p.rsplit("/", 1)[-1] for p in paths] == ["metrics.csv", "curves.csv", "runs.csv"]
    back = ex.read_runs_csv(tmp_path / "runs.csv")
    for a, b in zip(back, results):
        assert (a.grid_value, a.run) == (b.grid_value, b.run)
        for name in b.scores:
            for metric, value in b.scores[name].items():
                assert a.scores[name][metric] == pytest.approx(value, abs=5e-7)
    rows = read_metrics_csv(tmp_path / "metrics.csv")
    table = ex.mean_table(results)
    for _, grid, name, metric, s in rows:
        if metric == "auc":
            assert s.mean == pytest.approx(table[name][grid], abs=5e-7)  # six decimals on disk


def test_failed_replicate_is_recorded(monkeypatch):
    def boom(*args, **kwargs):
        raise ValueError("no positives")

    monkeypatch.setattr(ex, "run_replicate", boom)
    results = ex.run_experiment(tiny("exp1"))
    assert all(r.error == "ValueError: no positives" and r.scores == {} for r in results)
    assert ex.summarize(tiny("exp1"), results) == []
