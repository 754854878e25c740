"""Comparison models: network-free, oracle and exposure-proxy logistic regressions.

A cohort here is a ``(ContactNetwork, labels)`` pair. Labels are per node
with -1 for unknown; only main nodes are scored. Every runner returns one
probability per main node of the test network, in ``main_indices`` order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import ContactNetwork
from .numerics import OptimizerConfig, fit_logistic, sigmoid, with_intercept

NONET = "NoNet"
ETA_ORACLE = "EtaOracle"
Z_ORACLE = "ZOracle"
ETA_ORACLE_K = "EtaOracleK"
NBR_INF = "NbrInf"
NBR_INF_RATE = "NbrInfRate"
NBR_PROB_INF = "NbrProbInf"
EXPOSURE_PLUS_SUSCEPTIBILITY = "ExposurePlusSusceptibility"

KINDS = (NONET, ETA_ORACLE, Z_ORACLE, ETA_ORACLE_K, NBR_INF, NBR_INF_RATE, NBR_PROB_INF,
         EXPOSURE_PLUS_SUSCEPTIBILITY)
PROXY_KINDS = (NBR_INF, NBR_INF_RATE, NBR_PROB_INF)

DEFAULT_PENALTY = OptimizerConfig(l2_penalty=1.0)
DEFAULT_L1 = OptimizerConfig(l1_penalty=1.0)


class ConfigurationError(ValueError):
    """A benchmark was asked to run without the inputs it needs."""


@dataclass(frozen=True)
class BenchmarkSpec:
    kind: str
    oracle_fraction_k: float | None = None
    exposure_source: str | None = None
    penalty: OptimizerConfig = field(default_factory=lambda: DEFAULT_PENALTY)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown benchmark kind {self.kind!r}")
        if (self.oracle_fraction_k is not None) != (self.kind == ETA_ORACLE_K):
            raise ValueError("oracle_fraction_k is required for EtaOracleK and only for it")
        if self.oracle_fraction_k is not None and not 0.0 <= self.oracle_fraction_k <= 1.0:
            raise ValueError("oracle_fraction_k must lie in [0, 1]")
        if self.kind == EXPOSURE_PLUS_SUSCEPTIBILITY and self.exposure_source not in PROXY_KINDS:
            raise ValueError(f"exposure_source must be one of {PROXY_KINDS}")


def _logistic(X_train, y_train, X_test, penalty):
    """Fit with an unpenalized intercept; return test probabilities."""
    A = with_intercept(X_train)
    mask = np.r_[np.ones(X_train.shape[1]), 0.0]
    v = fit_logistic(A, y_train, config=penalty, penalized_mask=mask)
    return sigmoid(with_intercept(X_test) @ v)


def _main_labels(net: ContactNetwork, labels, what="labels"):
    y = np.asarray(labels)
    if y.shape != (net.node_count,):
        raise ConfigurationError(f"{what}: expected {net.node_count} per-node values, got shape {y.shape}")
    y = y[net.main_indices]
    if np.any((y != 0) & (y != 1)):
        raise ConfigurationError(f"{what}: every main node needs a 0/1 value")
    return y.astype(float)


def run_nonet(train, test, penalty: OptimizerConfig = DEFAULT_PENALTY):
    """Logistic regression on the node's own characteristics only."""
    (tr_net, tr_y), (te_net, _) = train, test
    m_tr, m_te = tr_net.main_indices, te_net.main_indices
    return _logistic(tr_net.features[m_tr], _main_labels(tr_net, tr_y), te_net.features[m_te], penalty)


def _with_column(net, column):
    m = net.main_indices
    return np.column_stack([net.features[m], np.asarray(column, dtype=float)[m]])


def run_eta_oracle(train, test, ground_truth, penalty: OptimizerConfig = DEFAULT_PENALTY):
    """Logistic regression on characteristics plus the true exposure flag.

    ``ground_truth`` is a (train, test) pair of GroundTruth records.
    """
    (tr_net, tr_y), (te_net, _) = train, test
    tr_truth, te_truth = _truth_pair(ground_truth)
    for truth, name in ((tr_truth, "train"), (te_truth, "test")):
        if truth.eta_true is None or np.any(np.asarray(truth.eta_true) < 0):
            raise ConfigurationError(f"{name} ground truth lacks exposure states")
    return _logistic(_with_column(tr_net, tr_truth.eta_true), _main_labels(tr_net, tr_y),
                     _with_column(te_net, te_truth.eta_true), penalty)


def run_z_oracle(train, test, ground_truth, penalty: OptimizerConfig = DEFAULT_PENALTY):
    """Logistic regression from characteristics to the true spreader state.

    Trained on every node of the training network with a known spreader
    state; scores the test network's main nodes.
    """
    (tr_net, _), (te_net, _) = train, test
    tr_truth, _ = _truth_pair(ground_truth)
    z = np.asarray(tr_truth.z_true)
    known = z >= 0
    if not known.any():
        raise ConfigurationError("train ground truth lacks spreader states")
    return _logistic(tr_net.features[known], z[known].astype(float), te_net.features[te_net.main_indices],
                     penalty)


def oracle_exposure(net: ContactNetwork, z_true, known_mask=None):
    """Threshold exposure from spreader states, counting unknown spreaders as 0."""
    z = np.asarray(z_true, dtype=float)
    if known_mask is not None:
        z = np.where(known_mask, z, 0.0)
    z = np.maximum(z, 0.0)
    eta = np.zeros(net.node_count)
    for i, nb in enumerate(net.neighbors):
        if len(nb):
            eta[i] = float(z[nb].mean() >= 0.5)
    return eta


def oracle_mask(node_count, k, seed=0):
    """Known-spreader mask on round(k * N) nodes drawn without replacement."""
    if not 0.0 <= k <= 1.0:
        raise ValueError("k must lie in [0, 1]")
    mask = np.zeros(node_count, dtype=bool)
    mask[np.random.default_rng(seed).permutation(node_count)[: int(round(k * node_count))]] = True
    return mask


def run_eta_oracle_k(train, test, ground_truth, k, masks=None, penalty: OptimizerConfig = DEFAULT_PENALTY,
                     seed=0):
    """Exposure oracle that sees only a k-fraction of spreader states.

    ``masks`` is an optional (train, test) pair of known-spreader masks; by
    default the ground truth's observed masks are used when their size
    matches k, otherwise fresh seeded masks are drawn.
    """
    (tr_net, tr_y), (te_net, _) = train, test
    tr_truth, te_truth = _truth_pair(ground_truth)
    if masks is None:
        masks = []
        for j, (net, truth) in enumerate(((tr_net, tr_truth), (te_net, te_truth))):
            obs = np.asarray(truth.z_observed_mask, dtype=bool)
            if obs.sum() == int(round(k * net.node_count)):
                masks.append(obs)
            else:
                masks.append(oracle_mask(net.node_count, k, seed + j))
    tr_eta = oracle_exposure(tr_net, tr_truth.z_true, masks[0])
    te_eta = oracle_exposure(te_net, te_truth.z_true, masks[1])
    return _logistic(_with_column(tr_net, tr_eta), _main_labels(tr_net, tr_y), _with_column(te_net, te_eta),
                     penalty)


def _truth_pair(ground_truth):
    if ground_truth is None:
        raise ConfigurationError("oracle benchmarks need ground truth")
    try:
        tr, te = ground_truth
    except (TypeError, ValueError):
        raise ConfigurationError("ground truth must be a (train, test) pair") from None
    return tr, te


# ---------------------------------------------------------------------------
# exposure proxies


def exposure_proxy(kind, network: ContactNetwork, labels, contact_predictions=None):
    """Per-main-node exposure estimate from neighbors' labels or predictions.

    Unknown labels (-1) are left out of every average; a node whose
    average has no terms gets 0.
    """
    y = np.asarray(labels, dtype=float)
    if y.shape != (network.node_count,):
        raise ValueError(f"labels must have one entry per node ({network.node_count})")
    known = y >= 0
    mains = network.main_indices
    out = np.zeros(mains.size)
    if kind == NBR_INF:
        for r, i in enumerate(mains):
            nb = network.neighbors[i]
            nb = nb[known[nb]]
            out[r] = y[nb].mean() if nb.size else 0.0
    elif kind == NBR_INF_RATE:
        for r, i in enumerate(mains):
            rates = []
            for b in network.neighbors[i]:
                others = network.neighbors[b]
                others = others[(others != i) & known[others]]
                rates.append(y[others].mean() if others.size else 0.0)
            out[r] = np.mean(rates) if rates else 0.0
    elif kind == NBR_PROB_INF:
        if contact_predictions is None:
            raise ConfigurationError("NbrProbInf needs predicted infection probabilities for contacts")
        p = np.asarray(contact_predictions, dtype=float)
        if p.shape != (network.node_count,):
            raise ValueError("contact_predictions must have one entry per node")
        for r, i in enumerate(mains):
            nb = network.neighbors[i]
            out[r] = p[nb].mean() if len(nb) else 0.0
    else:
        raise ValueError(f"unknown proxy kind {kind!r}")
    return out


def contact_predictions(train, network: ContactNetwork, penalty: OptimizerConfig = DEFAULT_L1):
    """Per-node infection probabilities for every node of ``network`` from a
    characteristics-only model fitted on ``train``; feeds NbrProbInf."""
    tr_net, tr_y = train
    m = tr_net.main_indices
    return _logistic(tr_net.features[m], _main_labels(tr_net, tr_y), network.features, penalty)


def run_exposure_plus_susceptibility(train, test, proxy_kind, penalty: OptimizerConfig = DEFAULT_L1,
                                     proxies=None):
    """L1-penalized logistic regression on characteristics plus an exposure proxy.

    ``proxies`` may supply precomputed (train, test) proxy vectors over main
    nodes; otherwise they are computed from the labels. Test labels are
    used for the test proxy as they would be for contacts whose outcome is
    already known at prediction time.
    """
    (tr_net, tr_y), (te_net, te_y) = train, test
    if proxies is None:
        preds = [None, None]
        if proxy_kind == NBR_PROB_INF:
            preds = [contact_predictions(train, tr_net, penalty), contact_predictions(train, te_net, penalty)]
        proxies = (exposure_proxy(proxy_kind, tr_net, tr_y, preds[0]),
                   exposure_proxy(proxy_kind, te_net, te_y, preds[1]))
    tr_x = np.column_stack([tr_net.features[tr_net.main_indices], proxies[0]])
    te_x = np.column_stack([te_net.features[te_net.main_indices], proxies[1]])
    return _logistic(tr_x, _main_labels(tr_net, tr_y), te_x, penalty)


def run(spec: BenchmarkSpec, train, test, ground_truth=None):
    """Dispatch on ``spec.kind``."""
    if spec.kind == NONET:
        return run_nonet(train, test, spec.penalty)
    if spec.kind == ETA_ORACLE:
        return run_eta_oracle(train, test, ground_truth, spec.penalty)
    if spec.kind == Z_ORACLE:
        return run_z_oracle(train, test, ground_truth, spec.penalty)
    if spec.kind == ETA_ORACLE_K:
        return run_eta_oracle_k(train, test, ground_truth, spec.oracle_fraction_k, penalty=spec.penalty)
    if spec.kind == EXPOSURE_PLUS_SUSCEPTIBILITY:
        return run_exposure_plus_susceptibility(train, test, spec.exposure_source, spec.penalty)
    # a bare proxy kind scores test mains by the proxy itself
    te_net, te_y = test
    preds = contact_predictions(train, te_net, spec.penalty) if spec.kind == NBR_PROB_INF else None
    return exposure_proxy(spec.kind, te_net, te_y, preds)
