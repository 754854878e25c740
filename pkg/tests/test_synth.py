from dataclasses import replace

import numpy as np
import pytest

from pals import benchmarks as bm
from pals.graph import SbmConfig, write_nodes
from pals.metrics import auc
from pals.synth import (
    EXPOSURE_FIRST,
    NOISY_OR,
    THRESHOLD,
    SynthConfig,
    default_true_u,
    exposure_from_spreaders,
    experiment_grid,
    generate_cohort,
    generate_split,
    infection_probability,
    read_ground_truth,
    write_ground_truth,
)


def test_coin_flip_cohort():
    cfg = SynthConfig(p_y_given_exposure=0.5, p_y_given_susceptible=0.5, p_baseline=0.5, seed=4)
    _, truth = generate_cohort(cfg)
    assert truth.y.size == 500
    assert abs(truth.y.mean() - 0.5) <= 0.05


def test_zero_true_u_spreader_rate():
    _, truth = generate_cohort(SynthConfig(true_u=(0.0,) * 20, seed=5))
    assert abs(truth.z_true.mean() - 0.5) <= 0.05


def test_all_spreader_block_is_exposed():
    cfg = SynthConfig(network=SbmConfig((5, 5), 1.0, 0.0, 0), feature_dim=2, true_u=(1.0, 1.0),
                      spreader_determinism=THRESHOLD)
    net, truth = generate_cohort(cfg)
    z = truth.z_true.copy()
    z[:5] = 1
    _, eta = exposure_from_spreaders(net, z)
    assert np.all(eta[:5] == 1)


def test_isolated_nodes_unexposed():
    cfg = SynthConfig(network=SbmConfig((3, 3), 0.0, 0.0, 0), true_u=(5.0,) * 20)
    _, truth = generate_cohort(cfg)
    assert np.all(truth.theta_true == 0)
    assert np.all(truth.eta_true == 0)


def test_combine_rules():
    eta = np.array([0, 0, 1, 1])
    s = np.array([0, 1, 0, 1])
    cfg = SynthConfig(p_y_given_exposure=0.8, p_y_given_susceptible=0.5, p_baseline=0.0, combine=NOISY_OR)
    assert np.allclose(infection_probability(eta, s, cfg), [0.0, 0.5, 0.8, 0.9])
    cfg = replace(cfg, combine=EXPOSURE_FIRST)
    assert np.allclose(infection_probability(eta, s, cfg), [0.0, 0.5, 0.8, 0.8])
    with pytest.raises(ValueError):
        replace(cfg, combine="bogus")


def test_regeneration_bit_identical():
    cfg = SynthConfig(seed=11, observed_spreader_fraction=0.3)
    a_net, a = generate_cohort(cfg)
    b_net, b = generate_cohort(cfg)
    assert np.array_equal(a_net.features, b_net.features)
    for f in ("z_true", "eta_true", "y", "susceptible", "z_observed_mask"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_split_cohorts_differ():
    tr_net, tr, te_net, te = generate_split(SynthConfig(seed=1))
    assert not np.array_equal(tr_net.features, te_net.features)


def test_observed_fraction_one_covers_all():
    _, truth = generate_cohort(SynthConfig(observed_spreader_fraction=1.0))
    assert truth.z_observed_mask.all()
    assert np.array_equal(truth.observed_labels(), truth.z_true)


def test_susceptible_fraction_count():
    _, truth = generate_cohort(SynthConfig(susceptible_fraction=0.5))
    assert truth.susceptible.sum() == 250


def test_default_true_u():
    u = default_true_u(20)
    assert np.all(u[:5] == 2) and np.all(u[5:10] == -2) and np.all(u[10:] == 0)


def test_experiment_grids():
    g1 = experiment_grid("exp1", 30)
    assert len(g1) == 150
    assert all(c.p_y_given_susceptible == 0.5 and c.susceptible_fraction == 1.0 for c in g1)
    assert sorted({c.p_y_given_exposure for c in g1}) == [0.5, 0.6, 0.7, 0.8, 0.9]

    g2 = experiment_grid("exp2", 1)
    assert len(g2) == 5
    assert all(c.susceptible_fraction == 0.5 and c.p_y_given_exposure == 0.8 for c in g2)

    g3 = experiment_grid("exp3", 1)
    assert [c.observed_spreader_fraction for c in g3] == [round(0.1 * k, 1) for k in range(11)]
    assert max(abs(v) for v in g3[0].true_u) < 2.0


def test_grid_seeds_distinct_per_run_shared_across_values():
    g = experiment_grid("exp1", 4)
    seeds = [c.seed for c in g]
    assert len(set(seeds[:4])) == 4
    assert seeds[:4] == seeds[4:8]
    with pytest.raises(ValueError):
        experiment_grid("exp1", 0)


def test_exp1_infection_independent_of_own_features():
    cfg = replace(experiment_grid("exp1", 1)[-1])  # p(y|E) = 0.9
    tr_net, tr, te_net, te = generate_split(cfg)
    pred = bm.run_nonet((tr_net, tr.y), (te_net, te.y))
    assert auc(pred, te.y) <= 0.55


def test_ground_truth_file_round_trip(tmp_path):
    net, truth = generate_cohort(SynthConfig(observed_spreader_fraction=0.2, seed=3))
    write_nodes(net, tmp_path / "n.csv")
    write_ground_truth(net, truth, tmp_path / "t.csv")
    back, seen = read_ground_truth(tmp_path / "t.csv", net)
    assert seen.all()
    assert np.array_equal(back.y, truth.y)
    assert np.array_equal(back.z_true, truth.z_true)
    assert np.array_equal(back.z_observed_mask, truth.z_observed_mask)
