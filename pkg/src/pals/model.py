"""Latent-spreader activation model: variational state, ELBO, E/M steps, fitting
and prediction.

Each main node i has a Bernoulli posterior per neighbor edge (phi, "is j
spreading to i"), a Beta posterior over its exposure probability (gamma) and a
Bernoulli posterior over its exposure state (pi). Given the weights, main
nodes do not interact, so every E-step quantity is computed for all main
nodes at once while edges of the same node are visited in neighbor order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .graph import ContactNetwork
from .numerics import (
    OptimizerConfig,
    digamma,
    fit_logistic,
    log_gamma,
    log_sigmoid,
    logistic_loss,
    minimize,
    sigmoid,
)

log = logging.getLogger(__name__)

EPS = 1e-12
FORMAT_VERSION = 1

TAYLOR = "taylor"
EXACT = "exact"


class InferenceError(RuntimeError):
    pass


@dataclass
class PalsWeights:
    u: np.ndarray
    w_sus: np.ndarray
    w_e: float
    u_bias: float = 0.0
    w_bias: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).ravel()
        self.w_sus = np.asarray(self.w_sus, dtype=float).ravel()
        self.w_e = float(self.w_e)
        self.u_bias = float(self.u_bias)
        self.w_bias = float(self.w_bias)
        if self.u.shape != self.w_sus.shape:
            raise ValueError("u and w_sus must have the same length")
        vals = np.concatenate([self.u, self.w_sus, [self.w_e, self.u_bias, self.w_bias]])
        if not np.all(np.isfinite(vals)):
            raise ValueError("weights must be finite")

    @property
    def feature_dim(self):
        return self.u.size

    @classmethod
    def zeros(cls, d, w_e=0.0):
        return cls(np.zeros(d), np.zeros(d), w_e)

    def spreader_logits(self, X):
        return X @ self.u + self.u_bias

    def susceptibility_logits(self, X):
        return X @ self.w_sus + self.w_bias

    def to_json(self):
        return json.dumps({
            "u": self.u.tolist(),
            "w_sus": self.w_sus.tolist(),
            "w_e": self.w_e,
            "u_intercept": self.u_bias,
            "w_intercept": self.w_bias,
            "feature_dim": self.feature_dim,
            "format_version": FORMAT_VERSION,
        }, indent=2)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported weights format_version {doc.get('format_version')!r}")
        w = cls(doc["u"], doc["w_sus"], doc["w_e"], doc.get("u_intercept", 0.0), doc.get("w_intercept", 0.0))
        if w.feature_dim != doc["feature_dim"]:
            raise ValueError("feature_dim does not match the weight vectors")
        return w


@dataclass
class VariationalState:
    """Per-edge phi (E, 2), per-main-node gamma (M, 2) and pi (M, 2).

    Edge e connects main position ``src[e]`` (index into ``mains``) to node
    ``dst[e]``; edges are sorted by (main, neighbor). ``clamped`` edges carry
    an observed spreader state and are never updated.
    """

    mains: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    phi: np.ndarray
    gamma: np.ndarray
    pi: np.ndarray
    clamped: np.ndarray

    def copy(self):
        return VariationalState(self.mains, self.src, self.dst, self.phi.copy(), self.gamma.copy(),
                                self.pi.copy(), self.clamped)

    @property
    def degrees(self):
        return np.bincount(self.src, minlength=self.mains.size)

    def edge_index(self, i, j):
        """Edge id of (main node i, neighbor j), both network node indices."""
        m = int(np.searchsorted(self.mains, i))
        if m >= self.mains.size or self.mains[m] != i:
            raise KeyError(f"node {i} is not a main node")
        hits = np.flatnonzero((self.src == m) & (self.dst == j))
        if not hits.size:
            raise KeyError(f"{j} is not a neighbor of {i}")
        return int(hits[0])

    def check(self):
        """Raise AssertionError if a state invariant is violated."""
        assert np.allclose(self.phi.sum(1), 1.0, atol=1e-12)
        assert np.allclose(self.pi.sum(1), 1.0, atol=1e-12)
        free = ~self.clamped
        assert np.all((self.phi[free] >= EPS) & (self.phi[free] <= 1 - EPS))
        assert np.all(np.isin(self.phi[self.clamped], (0.0, 1.0)))
        assert np.all((self.pi >= EPS) & (self.pi <= 1 - EPS))
        assert np.all(self.gamma >= 1.0)

    def write_diagnostics(self, network: ContactNetwork, prefix):
        """``prefix``_nodes.csv (gamma, pi per main) and ``prefix``_edges.csv (phi per edge)."""
        ids = network.ids
        with open(f"{prefix}_nodes.csv", "w") as fh:
            fh.write("id,gamma1,gamma2,pi1,pi2\n")
            for m, i in enumerate(self.mains):
                g, p = self.gamma[m], self.pi[m]
                fh.write(f"{ids[i]},{g[0]!r},{g[1]!r},{p[0]!r},{p[1]!r}\n")
        with open(f"{prefix}_edges.csv", "w") as fh:
            fh.write("src,dst,phi1,phi2,clamped\n")
            for e in range(self.src.size):
                fh.write(f"{ids[self.mains[self.src[e]]]},{ids[self.dst[e]]},{self.phi[e, 0]!r},"
                         f"{self.phi[e, 1]!r},{int(self.clamped[e])}\n")


@dataclass(frozen=True)
class FitConfig:
    max_em_rounds: int = 50
    e_step_sweeps_per_round: int = 1
    elbo_rel_tolerance: float = 1e-5
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(l2_penalty=1.0))
    seed: int = 0
    phi_rule: str = EXACT
    fit_intercept: bool = True
    initial_exposure_weight: float = 1.0
    # Penalty multipliers for the outcome weights relative to optimizer.l2_penalty.
    susceptibility_penalty: float = 30.0
    exposure_penalty: float = 0.01
    predict_max_sweeps: int = 200
    predict_tolerance: float = 1e-8

    def __post_init__(self):
        if self.max_em_rounds < 1 or self.e_step_sweeps_per_round < 1:
            raise ValueError("round and sweep counts must be positive")
        if not self.elbo_rel_tolerance > 0:
            raise ValueError("elbo_rel_tolerance must be positive")
        if self.phi_rule not in (TAYLOR, EXACT):
            raise ValueError(f"unknown phi_rule {self.phi_rule!r}")


@dataclass
class FitResult:
    weights: PalsWeights
    state: VariationalState
    elbo_trace: list
    converged: bool


# ---------------------------------------------------------------------------
# state construction


def _observed_array(network, observed):
    if observed is None:
        return np.full(network.node_count, -1, dtype=np.int64)
    obs = np.asarray(observed, dtype=np.int64)
    if obs.shape != (network.node_count,):
        raise ValueError("observed spreader labels need one entry per node")
    return obs


def init_state(network: ContactNetwork, observed=None, seed=0) -> VariationalState:
    """Near-symmetric starting point: phi = 0.5 +- 0.01, pi = 0.5, gamma from its update."""
    mains = network.main_indices
    if mains.size == 0:
        raise ValueError("network has no main nodes")
    src_nodes, dst = network.edge_list()
    src = np.searchsorted(mains, src_nodes)
    obs = _observed_array(network, observed)
    rng = np.random.default_rng(seed)
    p1 = np.clip(0.5 + rng.uniform(-0.01, 0.01, dst.size), EPS, 1 - EPS)
    lab = obs[dst]
    clamped = lab >= 0
    p1 = np.where(clamped, lab.astype(float), p1)
    phi = np.column_stack([p1, 1.0 - p1])
    pi = np.full((mains.size, 2), 0.5)
    state = VariationalState(mains, src, dst, phi, np.ones((mains.size, 2)), pi, clamped)
    refresh_gamma(state)
    return state


# ---------------------------------------------------------------------------
# single-coordinate updates (reference forms of the vectorized sweeps)


def _psi_gap_terms(gamma):
    return digamma(gamma[0]), digamma(gamma[1])


def update_phi(i, j, weights: PalsWeights, state: VariationalState, network: ContactNetwork, rule=TAYLOR):
    """New (phi1, phi2) for the edge from main node i to neighbor j.

    taylor: phi1 ~ s(u.x_j) exp(psi(g1)) / (1 + sum_{k!=j} phi_k1), and
    symmetrically for phi2; the neighbor-count log-gamma terms are linearized
    at the mean of the other neighbors' states.
    exact: the same update with the exact expectation of log(1 + count) under
    the other neighbors' independent Bernoulli posteriors, which makes it the
    exact coordinate maximizer of the ELBO.
    """
    e = state.edge_index(i, j)
    if state.clamped[e]:
        raise ValueError(f"edge {network.ids[i]}->{network.ids[j]} is clamped by an observation")
    m = state.src[e]
    edges = np.flatnonzero(state.src == m)
    others = edges[edges != e]
    logit = weights.spreader_logits(network.features[j])
    g1, g2 = _psi_gap_terms(state.gamma[m])
    if rule == TAYLOR:
        pen1 = np.log1p(state.phi[others, 0].sum())
        pen2 = np.log1p(state.phi[others, 1].sum())
    else:
        pmf = _count_pmf(state.phi[others, 0])
        c = np.arange(pmf.size)
        pen1 = float(pmf @ np.log1p(c))
        pen2 = float(pmf @ np.log1p(others.size - c))
    l1 = log_sigmoid(logit) + g1 - pen1
    l2 = log_sigmoid(-logit) + g2 - pen2
    if not np.isfinite(l1 - l2):
        raise InferenceError(f"non-finite phi update on edge {network.ids[i]}->{network.ids[j]}")
    p1 = float(np.clip(sigmoid(l1 - l2), EPS, 1 - EPS))
    return p1, 1.0 - p1


def update_gamma(i, state: VariationalState):
    """gamma_s = sum_j phi_js + pi_s + 1."""
    m = int(np.searchsorted(state.mains, i))
    edges = state.src == m
    return tuple(state.phi[edges].sum(0) + state.pi[m] + 1.0)


def update_pi(i, y_i, weights: PalsWeights, state: VariationalState, network: ContactNetwork):
    """New (pi1, pi2) for main node i; ``y_i=None`` drops the outcome factor."""
    m = int(np.searchsorted(state.mains, i))
    g1, g2 = _psi_gap_terms(state.gamma[m])
    l1, l2 = g1, g2
    if y_i is not None:
        a0 = weights.susceptibility_logits(network.features[i])
        l1 = l1 + _outcome_loglik(y_i, a0 + weights.w_e)
        l2 = l2 + _outcome_loglik(y_i, a0)
    if not np.isfinite(l1 - l2):
        raise InferenceError(f"non-finite pi update at node {network.ids[i]}")
    p1 = float(np.clip(sigmoid(l1 - l2), EPS, 1 - EPS))
    return p1, 1.0 - p1


def _outcome_loglik(y, logit):
    return y * log_sigmoid(logit) + (1 - y) * log_sigmoid(-logit)


# ---------------------------------------------------------------------------
# neighbor-count distributions


def _count_pmf(p):
    """Distribution of a sum of independent Bernoulli(p_k)."""
    pmf = np.zeros(len(p) + 1)
    pmf[0] = 1.0
    for k, pk in enumerate(p):
        pmf[1:k + 2] = pmf[1:k + 2] * (1 - pk) + pmf[:k + 1] * pk
        pmf[0] *= 1 - pk
    return pmf


def _batched_count_pmf(P):
    """Row-wise count distributions for a padded (M, D) probability matrix."""
    M, D = P.shape
    pmf = np.zeros((M, D + 1))
    pmf[:, 0] = 1.0
    for k in range(D):
        pk = P[:, k:k + 1]
        shifted = pmf[:, :-1] * pk
        pmf *= 1 - pk
        pmf[:, 1:] += shifted
    return pmf


class _Layout:
    """Padded (M, D) view of the edge list: column t holds every node's t-th edge."""

    def __init__(self, state: VariationalState):
        self.M = state.mains.size
        self.deg = state.degrees
        self.D = int(self.deg.max()) if self.deg.size else 0
        starts = np.concatenate([[0], np.cumsum(self.deg)[:-1]])
        pos = np.arange(state.src.size) - starts[state.src]
        self.edge = np.full((self.M, self.D), -1, dtype=np.int64)
        self.edge[state.src, pos] = np.arange(state.src.size)
        self.valid = self.edge >= 0
        self.columns = []
        for t in range(self.D):
            rows = np.flatnonzero(self.valid[:, t])
            eids = self.edge[rows, t]
            free = ~state.clamped[eids]
            self.columns.append((rows, eids, rows[free], eids[free]))

    def padded(self, values, fill=0.0):
        out = np.full((self.M, self.D), fill)
        out[self.valid] = values[self.edge[self.valid]]
        return out


# ---------------------------------------------------------------------------
# vectorized E-step


def refresh_gamma(state: VariationalState):
    M = state.mains.size
    for s in range(2):
        state.gamma[:, s] = np.bincount(state.src, state.phi[:, s], minlength=M) + state.pi[:, s] + 1.0


def refresh_pi(state: VariationalState, network: ContactNetwork, weights: PalsWeights, y=None):
    """All pi updates at once; ``y`` (per main node) or None for the outcome-free variant."""
    l1 = digamma(state.gamma[:, 0])
    l2 = digamma(state.gamma[:, 1])
    if y is not None:
        a0 = weights.susceptibility_logits(network.features[state.mains])
        l1 = l1 + _outcome_loglik(y, a0 + weights.w_e)
        l2 = l2 + _outcome_loglik(y, a0)
    diff = l1 - l2
    if not np.all(np.isfinite(diff)):
        bad = state.mains[np.flatnonzero(~np.isfinite(diff))[0]]
        raise InferenceError(f"non-finite pi update at node {network.ids[bad]}")
    p1 = np.clip(sigmoid(diff), EPS, 1 - EPS)
    state.pi[:, 0] = p1
    state.pi[:, 1] = 1.0 - p1


def _edge_prior_logits(state, network, weights):
    return weights.spreader_logits(network.features[state.dst])


def sweep_phi(state: VariationalState, network: ContactNetwork, weights: PalsWeights, rule=TAYLOR, layout=None):
    """One Gauss-Seidel pass of phi updates over every unclamped edge, in (i, j) order."""
    layout = layout or _Layout(state)
    if layout.D == 0:
        return
    logits = _edge_prior_logits(state, network, weights)
    lp1 = log_sigmoid(logits)
    lp0 = log_sigmoid(-logits)
    psi1 = digamma(state.gamma[:, 0])
    psi2 = digamma(state.gamma[:, 1])
    if rule == TAYLOR:
        _sweep_taylor(state, layout, lp1, lp0, psi1, psi2)
    else:
        _sweep_exact(state, layout, lp1, lp0, psi1, psi2)
    if not np.all(np.isfinite(state.phi)):
        e = int(np.flatnonzero(~np.isfinite(state.phi).all(1))[0])
        raise InferenceError(f"non-finite phi on edge {network.ids[state.mains[state.src[e]]]}->"
                             f"{network.ids[state.dst[e]]}")


def _set_phi(state, eids, p1):
    p1 = np.clip(p1, EPS, 1 - EPS)
    state.phi[eids, 0] = p1
    state.phi[eids, 1] = 1.0 - p1


def _sweep_taylor(state, layout, lp1, lp0, psi1, psi2):
    S1 = np.bincount(state.src, state.phi[:, 0], minlength=layout.M)
    for rows_all, _, rows, eids in layout.columns:
        if not rows.size:
            continue
        old = state.phi[eids, 0]
        rest1 = S1[rows] - old
        rest2 = (layout.deg[rows] - 1) - rest1
        l1 = lp1[eids] + psi1[rows] - np.log1p(rest1)
        l2 = lp0[eids] + psi2[rows] - np.log1p(np.maximum(rest2, 0.0))
        _set_phi(state, eids, sigmoid(l1 - l2))
        S1[rows] += state.phi[eids, 0] - old


def _suffix_pmfs(P):
    """suffix[t]: row-wise count distribution over padded positions > t."""
    M, D = P.shape
    suffix = np.zeros((D, M, D + 1))
    suffix[D - 1, :, 0] = 1.0
    for t in range(D - 2, -1, -1):
        width = D - t  # positions t+1 .. D-1 give counts up to D-1-t
        suffix[t, :, :width] = suffix[t + 1, :, :width]
        _add_trial(suffix[t, :, :width], P[:, t + 1:t + 2])
    return suffix


def _add_trial(pmf, pk):
    """In place: fold one Bernoulli(pk) trial into a count distribution.

    The last column must have zero mass on entry.
    """
    pmf[:, 1:] = pmf[:, 1:] * (1 - pk) + pmf[:, :-1] * pk
    pmf[:, 0] *= 1 - pk[:, 0]


def _sweep_exact(state, layout, lp1, lp0, psi1, psi2):
    M, D = layout.M, layout.D
    P1 = layout.padded(state.phi[:, 0])
    P0 = layout.padded(state.phi[:, 1])  # padding stays 0 in both
    # Spreader and non-spreader counts among the other neighbors are each a
    # prefix count (already updated edges) plus a suffix count (pending edges).
    suffix1, suffix0 = _suffix_pmfs(P1), _suffix_pmfs(P0)
    prefix1 = np.zeros((M, D + 1))
    prefix1[:, 0] = 1.0
    prefix0 = prefix1.copy()
    k = np.arange(D + 1)
    hankel = np.log1p(k[:, None] + k[None, :])  # log(1 + a + b)
    for t, (rows_all, eids_all, rows, eids) in enumerate(layout.columns):
        if rows.size:
            pen1 = np.sum((prefix1[rows] @ hankel) * suffix1[t][rows], axis=1)
            pen2 = np.sum((prefix0[rows] @ hankel) * suffix0[t][rows], axis=1)
            l1 = lp1[eids] + psi1[rows] - pen1
            l2 = lp0[eids] + psi2[rows] - pen2
            _set_phi(state, eids, sigmoid(l1 - l2))
            P1[rows, t] = state.phi[eids, 0]
            P0[rows, t] = state.phi[eids, 1]
        if t + 1 < D:
            _add_trial(prefix1[:, :t + 2], P1[:, t:t + 1])
            _add_trial(prefix0[:, :t + 2], P0[:, t:t + 1])


def e_step(state, network, weights, y=None, sweeps=1, rule=TAYLOR, layout=None):
    """``sweeps`` rounds of (phi pass, gamma, pi, gamma)."""
    layout = layout or _Layout(state)
    for _ in range(sweeps):
        sweep_phi(state, network, weights, rule, layout)
        refresh_gamma(state)
        refresh_pi(state, network, weights, y)
        refresh_gamma(state)
    return state


# ---------------------------------------------------------------------------
# ELBO


def _bernoulli_entropy(p):
    p = np.asarray(p, dtype=float)
    return -(special.xlogy(p, p) + special.xlogy(1 - p, 1 - p))


def _beta_entropy(a, b):
    return (special.betaln(a, b) - (a - 1) * digamma(a) - (b - 1) * digamma(b)
            + (a + b - 2) * digamma(a + b))


def elbo_terms(network, y, weights, state, counts=EXACT, layout=None):
    """Per-main-node ELBO contributions, keyed by term name.

    ``counts`` selects how E[log Gamma(1 + #spreaders)] is evaluated: exact
    (the count distribution is a Poisson-binomial) or taylor (log Gamma at
    the mean count).
    """
    layout = layout or _Layout(state)
    M = layout.M
    deg = layout.deg.astype(float)
    logits = _edge_prior_logits(state, network, weights)
    phi1, phi2 = state.phi[:, 0], state.phi[:, 1]
    prior = np.bincount(state.src, phi1 * log_sigmoid(logits) + phi2 * log_sigmoid(-logits), minlength=M)

    g1, g2 = state.gamma[:, 0], state.gamma[:, 1]
    e_log_t = digamma(g1) - digamma(g1 + g2)
    e_log_1mt = digamma(g2) - digamma(g1 + g2)
    S1 = np.bincount(state.src, phi1, minlength=M)
    S2 = deg - S1
    if counts == EXACT:
        pmf = _batched_count_pmf(layout.padded(phi1))
        c = np.arange(layout.D + 1)
        lg_s = pmf @ special.gammaln(1 + c)
        lg_ns = np.sum(pmf * special.gammaln(1 + np.maximum(deg[:, None] - c[None, :], 0)), axis=1)
    else:
        lg_s = log_gamma(1 + S1)
        lg_ns = log_gamma(1 + S2)
    theta = special.gammaln(2 + deg) - lg_s - lg_ns + S1 * e_log_t + S2 * e_log_1mt

    eta = state.pi[:, 0] * e_log_t + state.pi[:, 1] * e_log_1mt

    if y is not None:
        a0 = weights.susceptibility_logits(network.features[state.mains])
        outcome = state.pi[:, 0] * _outcome_loglik(y, a0 + weights.w_e) + state.pi[:, 1] * _outcome_loglik(y, a0)
    else:
        outcome = np.zeros(M)

    ent_phi = np.bincount(state.src, _bernoulli_entropy(phi1), minlength=M)
    ent_pi = _bernoulli_entropy(state.pi[:, 0])
    ent_gamma = _beta_entropy(g1, g2)
    return {
        "spreader_prior": prior,
        "exposure_prob": theta,
        "exposure_state": eta,
        "outcome": outcome,
        "entropy_phi": ent_phi,
        "entropy_pi": ent_pi,
        "entropy_gamma": ent_gamma,
    }


def elbo(network, y, weights, state, counts=EXACT, layout=None):
    """Evidence lower bound summed over main nodes (``y=None`` drops the outcome term)."""
    terms = elbo_terms(network, y, weights, state, counts, layout)
    return float(sum(v.sum() for v in terms.values()))


# ---------------------------------------------------------------------------
# M-step


def _design(X, intercept):
    return np.hstack([X, np.ones((X.shape[0], 1))]) if intercept else X


def spreader_objective(v, X_nodes, targets, counts):
    """Negated spreader term for weights ``v`` against per-node aggregated targets."""
    return logistic_loss(v, X_nodes, targets, counts)


def _spreader_rows(network, state, intercept):
    n = network.node_count
    counts = np.bincount(state.dst, minlength=n).astype(float)
    ones = np.bincount(state.dst, state.phi[:, 0], minlength=n)
    used = counts > 0
    X = _design(network.features[used], intercept)
    return X, ones[used] / counts[used], counts[used]


def m_step_u(network, state, optimizer: OptimizerConfig, warm_start=None, intercept=True):
    """Maximize sum_ij phi_ij1 log s(u.x_j) + phi_ij2 log(1 - s(u.x_j)) over u.

    Edges sharing a neighbor are pooled into one row with the mean phi as a
    soft target and the edge count as its weight, which leaves the objective
    unchanged. Returns (u, u_bias).
    """
    X, t, w = _spreader_rows(network, state, intercept)
    d = network.feature_dim
    if X.shape[0] == 0:
        return np.zeros(d), 0.0
    mask = np.r_[np.ones(d), np.zeros(int(intercept))]
    v = fit_logistic(X, t, w, optimizer, start=warm_start, penalized_mask=mask)
    return v[:d], (float(v[d]) if intercept else 0.0)


def _outcome_rows(network, state, y, intercept):
    X = _design(network.features[state.mains], intercept)
    M = X.shape[0]
    rows = np.vstack([np.hstack([X, np.ones((M, 1))]), np.hstack([X, np.zeros((M, 1))])])
    targets = np.concatenate([y, y]).astype(float)
    weights = np.concatenate([state.pi[:, 0], state.pi[:, 1]])
    return rows, targets, weights


def outcome_objective(v, network, state, y, intercept=True):
    """Negated outcome term; ``v`` is (w_sus[, w_bias], w_e)."""
    rows, t, w = _outcome_rows(network, state, y, intercept)
    return logistic_loss(v, rows, t, w)


def m_step_w(network, y, state, optimizer: OptimizerConfig, warm_start=None, intercept=True,
             susceptibility_penalty=1.0, exposure_penalty=1.0):
    """Maximize the pi-weighted outcome log-likelihood over (w_sus, w_e).

    Each main node contributes an exposed row (weight pi1, exposure column 1)
    and an unexposed row (weight pi2, exposure column 0) with its label as
    target. ``susceptibility_penalty`` and ``exposure_penalty`` scale the
    optimizer's penalties on w_sus and w_e. Returns (w_sus, w_bias, w_e).
    """
    y = np.asarray(y, dtype=float)
    rows, t, w = _outcome_rows(network, state, y, intercept)
    d = network.feature_dim
    mask = np.r_[np.full(d, susceptibility_penalty), np.zeros(int(intercept)), exposure_penalty]
    v = fit_logistic(rows, t, w, optimizer, start=warm_start, penalized_mask=mask)
    w_bias = float(v[d]) if intercept else 0.0
    return v[:d], w_bias, float(v[-1])


# ---------------------------------------------------------------------------
# fitting and prediction


def _main_labels(network, labels, state):
    y = np.asarray(labels)
    if y.shape == (network.node_count,):
        y = y[state.mains]
    if y.shape != (state.mains.size,):
        raise ValueError("labels must be given per node or per main node")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("every main node needs a 0/1 outcome label")
    return y.astype(float)


def initial_weights(network, y_main, mains, config: FitConfig):
    """Spreader weights at zero; susceptibility weights from a network-free logistic fit."""
    d = network.feature_dim
    X = _design(network.features[mains], config.fit_intercept)
    mask = np.r_[np.full(d, config.susceptibility_penalty), np.zeros(int(config.fit_intercept))]
    v = fit_logistic(X, y_main, None, config.optimizer, penalized_mask=mask)
    w_bias = float(v[d]) if config.fit_intercept else 0.0
    return PalsWeights(np.zeros(d), v[:d], config.initial_exposure_weight, 0.0, w_bias)


def fit(network: ContactNetwork, labels, observed_spreaders=None, config: FitConfig | None = None,
        initial: PalsWeights | None = None) -> FitResult:
    """Variational EM: E-step sweeps then u and w M-steps, once per round.

    Stops when the relative ELBO change drops to ``elbo_rel_tolerance`` or
    after ``max_em_rounds`` rounds.
    """
    config = config or FitConfig()
    state = init_state(network, observed_spreaders, config.seed)
    y = _main_labels(network, labels, state)
    layout = _Layout(state)
    weights = initial or initial_weights(network, y, state.mains, config)
    intercept = config.fit_intercept
    trace = [elbo(network, y, weights, state, layout=layout)]
    converged = False
    for rnd in range(config.max_em_rounds):
        try:
            e_step(state, network, weights, y, config.e_step_sweeps_per_round, config.phi_rule, layout)
            u_start = np.r_[weights.u, [weights.u_bias] if intercept else []]
            u, u_bias = m_step_u(network, state, config.optimizer, u_start, intercept)
            w_start = np.r_[weights.w_sus, [weights.w_bias] if intercept else [], weights.w_e]
            w_sus, w_bias, w_e = m_step_w(network, y, state, config.optimizer, w_start, intercept,
                                          config.susceptibility_penalty, config.exposure_penalty)
        except (InferenceError, RuntimeError) as exc:
            raise type(exc)(f"EM round {rnd}: {exc}") from exc
        weights = PalsWeights(u, w_sus, w_e, u_bias, w_bias)
        trace.append(elbo(network, y, weights, state, layout=layout))
        change = abs(trace[-1] - trace[-2])
        log.debug("round %d elbo %.6f (change %.3g)", rnd, trace[-1], change)
        if change <= config.elbo_rel_tolerance * abs(trace[-2]):
            converged = True
            break
    return FitResult(weights, state, trace, converged)


def predict_spreader(weights: PalsWeights, x):
    """p(z = 1 | x) for one feature vector or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != weights.feature_dim:
        raise ValueError(f"feature dimension {x.shape[-1]} does not match weights ({weights.feature_dim})")
    return sigmoid(weights.spreader_logits(x))


def infer_exposure(weights, network, observed_spreaders=None, config: FitConfig | None = None):
    """Outcome-free E-step run to a fixed point of pi; returns the state."""
    config = config or FitConfig()
    if network.feature_dim != weights.feature_dim:
        raise ValueError(f"network has {network.feature_dim} features, weights expect {weights.feature_dim}")
    state = init_state(network, observed_spreaders, config.seed)
    layout = _Layout(state)
    for _ in range(config.predict_max_sweeps):
        before = state.pi[:, 0].copy()
        e_step(state, network, weights, None, 1, config.phi_rule, layout)
        if np.max(np.abs(state.pi[:, 0] - before), initial=0.0) < config.predict_tolerance:
            break
    return state


def predict_infection(weights: PalsWeights, network: ContactNetwork, observed_spreaders=None,
                      config: FitConfig | None = None):
    """p(y = 1) per main node: pi1 s(w.x + w_e) + pi2 s(w.x)."""
    state = infer_exposure(weights, network, observed_spreaders, config)
    a0 = weights.susceptibility_logits(network.features[state.mains])
    return state.pi[:, 0] * sigmoid(a0 + weights.w_e) + state.pi[:, 1] * sigmoid(a0)
