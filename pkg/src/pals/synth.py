"""Synthetic cohorts with known spreader, exposure and susceptibility states."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .graph import ContactNetwork, FormatError, SbmConfig, generate_sbm
from .numerics import sigmoid

STOCHASTIC = "stochastic"
THRESHOLD = "threshold"

# How exposure and susceptibility combine into p(y = 1).
EXPOSURE_FIRST = "exposure_first"
NOISY_OR = "noisy_or"
COMBINE_RULES = (EXPOSURE_FIRST, NOISY_OR)

DEFAULT_BLOCKS = (10,) * 50


def default_true_u(feature_dim=20, magnitude=2.0):
    """+magnitude on features 1-5, -magnitude on 6-10, zero elsewhere."""
    u = np.zeros(feature_dim)
    u[:5] = magnitude
    u[5:10] = -magnitude
    return u


@dataclass(frozen=True)
class SynthConfig:
    network: SbmConfig = field(default_factory=lambda: SbmConfig(DEFAULT_BLOCKS, 0.5, 0.01, 0))
    feature_dim: int = 20
    true_u: tuple | None = None
    spreader_determinism: str = STOCHASTIC
    p_y_given_exposure: float = 0.9
    p_y_given_susceptible: float = 0.5
    p_baseline: float = 0.0
    susceptible_fraction: float = 1.0
    observed_spreader_fraction: float = 0.0
    seed: int = 0
    combine: str = EXPOSURE_FIRST
    # When given, susceptibility is Bernoulli(sigmoid(weights . x)) instead of a hidden flag.
    susceptibility_weights: tuple | None = None

    def __post_init__(self):
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be at least 1")
        if self.true_u is None:
            object.__setattr__(self, "true_u", tuple(default_true_u(self.feature_dim)))
        object.__setattr__(self, "true_u", tuple(float(v) for v in self.true_u))
        if len(self.true_u) != self.feature_dim:
            raise ValueError(f"true_u has length {len(self.true_u)}, expected {self.feature_dim}")
        if self.susceptibility_weights is not None:
            object.__setattr__(self, "susceptibility_weights", tuple(float(v) for v in self.susceptibility_weights))
            if len(self.susceptibility_weights) != self.feature_dim:
                raise ValueError("susceptibility_weights must have feature_dim entries")
        for name in ("p_y_given_exposure", "p_y_given_susceptible", "p_baseline",
                     "susceptible_fraction", "observed_spreader_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.spreader_determinism not in (STOCHASTIC, THRESHOLD):
            raise ValueError(f"unknown spreader_determinism {self.spreader_determinism!r}")
        if self.combine not in COMBINE_RULES:
            raise ValueError(f"unknown combine rule {self.combine!r}")


@dataclass
class GroundTruth:
    z_true: np.ndarray
    eta_true: np.ndarray
    theta_true: np.ndarray
    y: np.ndarray
    susceptible: np.ndarray
    z_observed_mask: np.ndarray

    def observed_labels(self):
        """Per-node spreader labels for inference: z where observed, -1 elsewhere."""
        return np.where(self.z_observed_mask, self.z_true, -1).astype(np.int64)


def infection_probability(eta, susceptible, config: SynthConfig):
    """p(y = 1) from exposure and susceptibility flags.

    exposure_first: exposed nodes are infected with p(y|E); unexposed
    susceptible nodes with p(y|S); everyone else with the baseline.
    noisy_or: 1 - (1 - pE*eta)(1 - pS*s)(1 - pB).
    """
    eta = np.asarray(eta, dtype=float)
    s = np.asarray(susceptible, dtype=float)
    pe, ps, pb = config.p_y_given_exposure, config.p_y_given_susceptible, config.p_baseline
    if config.combine == NOISY_OR:
        return 1.0 - (1.0 - pe * eta) * (1.0 - ps * s) * (1.0 - pb)
    return np.where(eta > 0, pe, np.where(s > 0, ps, pb))


def exposure_from_spreaders(network: ContactNetwork, z):
    """Mean spreader state over each node's neighbors (0 without neighbors) and its >= 0.5 threshold."""
    z = np.asarray(z, dtype=float)
    theta = np.array([z[nb].mean() if len(nb) else 0.0 for nb in network.neighbors])
    eta = ((theta >= 0.5) & (network.degrees > 0)).astype(np.int64)
    return theta, eta


def generate_cohort(config: SynthConfig):
    """Draw a network, features and all latent/observed states for one cohort."""
    net = generate_sbm(config.network)
    n = net.node_count
    feat_rng, z_rng, sus_rng, y_rng, obs_rng = [
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(5)
    ]
    X = (feat_rng.random((n, config.feature_dim)) < 0.5).astype(float)
    net = net.with_features(X)

    score = X @ np.asarray(config.true_u)
    if config.spreader_determinism == STOCHASTIC:
        z = (z_rng.random(n) < sigmoid(score)).astype(np.int64)
    else:
        z = (score > 0).astype(np.int64)
    theta, eta = exposure_from_spreaders(net, z)

    if config.susceptibility_weights is None:
        order = sus_rng.permutation(n)
        susceptible = np.zeros(n, dtype=np.int64)
        susceptible[order[: math.ceil(config.susceptible_fraction * n - 1e-9)]] = 1
    else:
        p_s = sigmoid(X @ np.asarray(config.susceptibility_weights))
        susceptible = (sus_rng.random(n) < p_s).astype(np.int64)

    p_y = infection_probability(eta, susceptible, config)
    y = (y_rng.random(n) < p_y).astype(np.int64)

    n_obs = int(round(config.observed_spreader_fraction * n))
    observed = np.zeros(n, dtype=bool)
    observed[obs_rng.permutation(n)[:n_obs]] = True

    return net, GroundTruth(z, eta, theta, y, susceptible, observed)


def held_out_config(config: SynthConfig) -> SynthConfig:
    """Config for the held-out cohort paired with ``config`` (fresh network and draws)."""
    a, b = np.random.SeedSequence([config.seed, 1]).generate_state(2)
    return replace(config, seed=int(a), network=replace(config.network, seed=int(b)))


def generate_split(config: SynthConfig):
    """(train_network, train_truth, test_network, test_truth)."""
    train = generate_cohort(config)
    test = generate_cohort(held_out_config(config))
    return train + test


# ---------------------------------------------------------------------------
# experiment grids

EXPERIMENT_GRIDS = {
    "exp1": ("p_y_given_exposure", (0.5, 0.6, 0.7, 0.8, 0.9)),
    "exp2": ("p_y_given_susceptible", (0.5, 0.6, 0.7, 0.8, 0.9)),
    "exp3": ("observed_spreader_fraction", tuple(round(0.1 * k, 1) for k in range(11))),
}

DISPERSED_MAGNITUDE = 0.75


def run_seeds(base_seed, run):
    """(cohort seed, network seed) for one replicate; shared across a grid's values."""
    a, b = np.random.SeedSequence([int(base_seed), int(run)]).generate_state(2)
    return int(a), int(b)


def experiment_grid(experiment, runs, base_seed=0, base=None):
    """SynthConfigs for one experiment, grid-value major, ``runs`` replicates each.

    Replicate r uses the same seeds at every grid value, so the grid values
    are compared on identical networks, features and random draws.

    exp1 and exp3 use the exposure_first rule, under which p(y|E) = p(y|S)
    makes exposure irrelevant; exp2 uses noisy-OR, so exposure always adds
    risk for susceptible nodes.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if experiment not in EXPERIMENT_GRIDS:
        raise ValueError(f"unknown experiment {experiment!r}")
    base = base or SynthConfig()
    if experiment == "exp1":
        base = replace(base, p_y_given_susceptible=0.5, susceptible_fraction=1.0, combine=EXPOSURE_FIRST)
    elif experiment == "exp2":
        base = replace(base, p_y_given_exposure=0.8, susceptible_fraction=0.5, combine=NOISY_OR)
    else:
        base = replace(base, p_y_given_exposure=0.8, p_y_given_susceptible=0.5, susceptible_fraction=1.0,
                       combine=EXPOSURE_FIRST,
                       true_u=tuple(default_true_u(base.feature_dim, DISPERSED_MAGNITUDE)))
    key, values = EXPERIMENT_GRIDS[experiment]
    out = []
    for value in values:
        for r in range(runs):
            seed, net_seed = run_seeds(base_seed, r)
            out.append(replace(base, seed=seed, network=replace(base.network, seed=net_seed), **{key: value}))
    return out


# ---------------------------------------------------------------------------
# files


def write_ground_truth(network: ContactNetwork, truth: GroundTruth, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "y", "z_true", "eta_true", "z_observed"])
        for i, node in enumerate(network.ids):
            w.writerow([node, int(truth.y[i]), int(truth.z_true[i]), int(truth.eta_true[i]),
                        int(truth.z_observed_mask[i])])


def read_ground_truth(path, network: ContactNetwork):
    """Columns aligned to ``network`` node order. Missing values ('' or -1) read as -1."""
    path = Path(path)
    cols = ["id", "y", "z_true", "eta_true", "z_observed"]
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != cols:
        raise FormatError(f"{path}: row 1: expected header {','.join(cols)}")
    index = {k: i for i, k in enumerate(network.ids)}
    n = network.node_count
    data = {c: np.full(n, -1, dtype=np.int64) for c in cols[1:]}
    seen = np.zeros(n, dtype=bool)
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(cols):
            raise FormatError(f"{path}: row {r}: expected {len(cols)} columns, got {len(row)}")
        if row[0] not in index:
            raise FormatError(f"{path}: row {r} column 'id': unknown node id {row[0]!r}")
        i = index[row[0]]
        seen[i] = True
        for c, text in zip(cols[1:], row[1:]):
            text = text.strip()
            if text == "":
                continue
            if text not in ("0", "1", "-1"):
                raise FormatError(f"{path}: row {r} column {c!r}: expected 0, 1 or empty, got {text!r}")
            data[c][i] = int(text)
    truth = GroundTruth(
        z_true=data["z_true"],
        eta_true=data["eta_true"],
        theta_true=np.full(n, np.nan),
        y=data["y"],
        susceptible=np.full(n, -1, dtype=np.int64),
        z_observed_mask=(data["z_observed"] == 1) & (data["z_true"] >= 0),
    )
    return truth, seen
