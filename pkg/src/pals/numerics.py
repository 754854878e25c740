"""Special functions, a BFGS minimizer and soft-label logistic regression.

Everything here works on plain numpy arrays and is shared by the model's
M-step and by the benchmark models.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

log = logging.getLogger(__name__)

EULER_GAMMA = 0.57721566490153286


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class OptimizationError(RuntimeError):
    """Raised when the objective produces a non-finite value or gradient.

    ``last_point`` holds the last point at which the objective was finite.
    """

    def __init__(self, message, last_point):
        super().__init__(message)
        self.last_point = last_point


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    line_search_shrink: float = 0.5
    l2_penalty: float = 0.0
    l1_penalty: float = 0.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be positive")
        if not 0.0 < self.line_search_shrink < 1.0:
            raise ValueError("line_search_shrink must lie in (0, 1)")
        if self.l2_penalty < 0 or self.l1_penalty < 0:
            raise ValueError("penalties must be non-negative")


@dataclass(frozen=True)
class ObjectiveReport:
    final_value: float
    gradient_norm: float
    iterations_used: int
    converged: bool


# ---------------------------------------------------------------------------
# special functions


def sigmoid(t):
    """Logistic function, evaluated without ever exponentiating a positive number."""
    t = np.asarray(t, dtype=float)
    e = np.exp(-np.abs(t))
    out = np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def log_sigmoid(t):
    """log(sigmoid(t)); log(1 - sigmoid(t)) is log_sigmoid(-t)."""
    t = np.asarray(t, dtype=float)
    out = np.minimum(t, 0.0) - np.log1p(np.exp(-np.abs(t)))
    return out if out.ndim else float(out)


# Bernoulli-number coefficients of the digamma asymptotic series in 1/x^2.
_PSI_SERIES = (
    1.0 / 12,
    -1.0 / 120,
    1.0 / 252,
    -1.0 / 240,
    1.0 / 132,
    -691.0 / 32760,
    1.0 / 12,
)


def digamma(a):
    """psi(a) for a > 0.

    Shifts the argument above 6 with psi(a) = psi(a + 1) - 1/a, then uses the
    asymptotic expansion ln x - 1/(2x) - sum B_2k / (2k x^2k).
    """
    x = np.array(a, dtype=float, copy=True)
    if np.any(~(x > 0)):
        raise DomainError("digamma is only defined here for a > 0")
    shift = np.zeros_like(x)
    low = x < 6.0
    while np.any(low):
        shift[low] -= 1.0 / x[low]
        x[low] += 1.0
        low = x < 6.0
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for c in reversed(_PSI_SERIES):
        series = (series + c) * inv2
    out = shift + np.log(x) - 0.5 / x - series
    return out if out.ndim else float(out)


def log_gamma(a):
    """ln Gamma(a) for a > 0."""
    x = np.asarray(a, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("log_gamma is only defined here for a > 0")
    out = special.gammaln(x)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# quasi-Newton minimizer


def _penalized(objective, config, penalized_mask):
    l2 = config.l2_penalty

    def fun(v):
        value, grad = objective(v)
        value = float(value)
        grad = np.asarray(grad, dtype=float)
        if l2 > 0:
            pv = v * penalized_mask
            value += 0.5 * l2 * float(pv @ v)
            grad = grad + l2 * pv
        return value, grad

    return fun


def _pseudo_gradient(v, g, l1):
    """Minimum-norm subgradient of f(v) + sum(l1 * |v|)."""
    pg = np.where(v > 0, g + l1, np.where(v < 0, g - l1, 0.0))
    at_zero = v == 0
    right = g + l1
    left = g - l1
    pg = np.where(at_zero & (right < 0), right, pg)
    pg = np.where(at_zero & (left > 0), left, pg)
    return pg


def minimize(objective: Callable, start, config: OptimizerConfig | None = None, penalized_mask=None):
    """Minimize ``objective`` (returning ``(value, gradient)``) from ``start``.

    BFGS on the inverse Hessian with a backtracking Armijo line search. The
    l2 term ``0.5 * l2 * ||v||^2`` is folded into the smooth part; an l1 term
    ``l1 * ||v||_1`` switches to orthant-wise steps. ``penalized_mask`` scales
    both penalties per coordinate: 0 exempts a coordinate such as an
    intercept, 1 applies the full penalty, values in between soften it.

    Stops when the gradient (pseudo-gradient under l1) infinity-norm reaches
    ``gradient_tolerance``, after ``max_iterations``, when the line search
    fails, or when three consecutive steps change the value by no more than
    its round-off. Only the first case reports ``converged``.

    Returns ``(point, ObjectiveReport)``.
    """
    config = config or OptimizerConfig()
    v = np.array(start, dtype=float, copy=True).ravel()
    n = v.size
    mask = np.ones(n) if penalized_mask is None else np.asarray(penalized_mask, dtype=float)
    l1 = config.l1_penalty * mask
    use_l1 = config.l1_penalty > 0
    fun = _penalized(objective, config, mask)

    def total(point):
        value, grad = fun(point)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise OptimizationError("non-finite objective or gradient", last_valid)
        if use_l1:
            value += float(np.sum(l1 * np.abs(point)))
        return value, grad

    last_valid = v.copy()
    f, g = total(v)
    H = np.eye(n)
    shrink = config.line_search_shrink
    c1 = 1e-4
    noise = 1e-14

    def stat(point, grad):
        return _pseudo_gradient(point, grad, l1) if use_l1 else grad

    pg = stat(v, g)
    gnorm = float(np.max(np.abs(pg))) if n else 0.0
    it = 0
    stalled = 0
    while gnorm > config.gradient_tolerance and it < config.max_iterations:
        it += 1
        d = -H @ pg
        if use_l1:
            d = np.where(d * -pg > 0, d, 0.0)
        slope = float(pg @ d)
        if slope >= 0:
            # lost descent, restart from steepest descent
            H = np.eye(n)
            d = -pg
            slope = float(pg @ d)
        orthant = np.where(v != 0, np.sign(v), -np.sign(pg)) if use_l1 else None

        step = 1.0
        if it == 1:
            step = min(1.0, 1.0 / max(gnorm, 1e-12))
        accepted = False
        for _ in range(40):
            trial = v + step * d
            if use_l1:
                trial = np.where(np.sign(trial) == orthant, trial, 0.0)
            f_new, g_new = total(trial)
            decrease = float(pg @ (trial - v)) if use_l1 else step * slope
            if f_new <= f + c1 * decrease:
                accepted = True
                break
            # Near the optimum the sufficient-decrease test drowns in round-off.
            # There, accept a non-increasing step that also satisfies the
            # strong curvature condition.
            if f_new <= f and abs(float(stat(trial, g_new) @ d)) <= -0.9 * slope:
                accepted = True
                break
            step *= shrink
        if not accepted:
            log.debug("line search failed at iteration %d (|g|=%.3g)", it, gnorm)
            break

        # Round-off floor: several accepted steps in a row that change
        # nothing measurable mean no further progress is possible.
        stalled = stalled + 1 if f - f_new <= noise * (1.0 + abs(f)) else 0
        s = trial - v
        y = g_new - g
        v, f, g = trial, f_new, g_new
        last_valid = v.copy()
        pg = stat(v, g)
        gnorm = float(np.max(np.abs(pg)))

        if stalled >= 3:
            log.debug("no measurable progress at iteration %d (|g|=%.3g)", it, gnorm)
            break
        sy = float(s @ y)
        if sy > 1e-12 * max(1.0, float(np.sqrt(s @ s) * np.sqrt(y @ y))):
            if it == 1:
                H = np.eye(n) * (sy / float(y @ y))
            rho = 1.0 / sy
            Hy = H @ y
            H = H + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))

    report = ObjectiveReport(
        final_value=f,
        gradient_norm=gnorm,
        iterations_used=it,
        converged=gnorm <= config.gradient_tolerance,
    )
    return v, report


# ---------------------------------------------------------------------------
# logistic regression with soft labels


def logistic_loss(v, X, targets, row_weights=None):
    """Weighted soft-label cross entropy and its gradient.

    sum_r weight_r * [-t_r log s(v.x_r) - (1 - t_r) log(1 - s(v.x_r))]
    """
    z = X @ v
    t = targets
    value_rows = -(t * log_sigmoid(z) + (1.0 - t) * log_sigmoid(-z))
    resid = sigmoid(z) - t
    if row_weights is not None:
        value_rows = value_rows * row_weights
        resid = resid * row_weights
    return float(np.sum(value_rows)), X.T @ resid


def fit_logistic(X, targets, row_weights=None, config: OptimizerConfig | None = None, start=None,
                 penalized_mask=None, return_report=False):
    """Fit logistic weights against soft targets in [0, 1].

    No intercept column is added; append one to ``X`` if wanted and leave it
    out of the penalty through ``penalized_mask``.
    """
    X = np.asarray(X, dtype=float)
    t = np.asarray(targets, dtype=float)
    if X.ndim != 2 or t.shape != (X.shape[0],):
        raise ValueError(f"shape mismatch: X {X.shape}, targets {t.shape}")
    if np.any((t < 0) | (t > 1)):
        raise ValueError("targets must lie in [0, 1]")
    w = None
    if row_weights is not None:
        w = np.asarray(row_weights, dtype=float)
        if w.shape != t.shape or np.any(w < 0):
            raise ValueError("row_weights must be non-negative, one per row")
        if not np.any(w > 0):
            raise DegenerateInputError("all row weights are zero")
    elif X.shape[0] == 0:
        raise DegenerateInputError("no rows to fit")
    v0 = np.zeros(X.shape[1]) if start is None else np.asarray(start, dtype=float)
    v, report = minimize(lambda v: logistic_loss(v, X, t, w), v0, config or OptimizerConfig(),
                         penalized_mask=penalized_mask)
    return (v, report) if return_report else v


def with_intercept(X):
    """Append a column of ones."""
    X = np.asarray(X, dtype=float)
    return np.hstack([X, np.ones((X.shape[0], 1))])
