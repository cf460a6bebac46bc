"""Comparator estimators: weighted-CDF IPW, Firpo's weighted check-loss
quantiles, and the outcome-regression estimator under a Box-Cox normal
linear model.

The propensity model is a logistic regression fitted by damped Newton
iterations to full maximum likelihood. For weighting, fitted
probabilities are clamped away from 0 and 1 (default [0.01, 0.99]);
unclamped weights explode on heavy-tailed designs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtr, ndtri

from ._util import frozen_array
from .counterfactual import ESTIMANDS, EffectEstimate
from .data import Dataset
from .errors import (
    EstimandUndefinedError,
    InvalidArgumentError,
    SeparationError,
    SingularDesignError,
    SolverFailureError,
    TransformError,
)

__all__ = [
    "PropensityFit",
    "BoxCoxFit",
    "BoxCoxConfig",
    "fit_propensity",
    "ipw_effects",
    "firpo_effects",
    "or_boxcox_effects",
    "fit_boxcox",
    "weighted_quantile",
]

DEFAULT_CLAMP = (0.01, 0.99)
BOXCOX_GRID = (-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0)


@dataclass(frozen=True)
class PropensityFit:
    """Logistic MLE: coefficients over (intercept, covariates) and fitted
    per-unit treatment probabilities."""

    gamma: np.ndarray
    fitted: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", frozen_array(self.gamma, ndim=1))
        object.__setattr__(self, "fitted", frozen_array(self.fitted, ndim=1))


@dataclass(frozen=True)
class BoxCoxFit:
    """Normal linear model of the power-transformed (and shifted) outcome."""

    bc_exponent: float
    regression_coefficients: np.ndarray
    residual_sd: float
    shift: float
    interactions: bool = False

    def __post_init__(self):
        object.__setattr__(
            self,
            "regression_coefficients",
            frozen_array(self.regression_coefficients, ndim=1),
        )
        if self.residual_sd <= 0.0:
            raise InvalidArgumentError("residual sd must be positive")
        if self.shift < 0.0:
            raise InvalidArgumentError("shift must be nonnegative")


@dataclass(frozen=True)
class BoxCoxConfig:
    exponent_grid: tuple[float, ...] = BOXCOX_GRID
    interactions: bool = False


def _loglik(eta: np.ndarray, d: np.ndarray) -> float:
    return float(np.sum(d * eta - np.logaddexp(0.0, eta)))


def fit_propensity(data: Dataset) -> PropensityFit:
    """Logistic regression of treatment on (intercept, covariates).

    Damped Newton iterations; converged when the log-likelihood change is
    <= 1e-10 or the score norm is <= 1e-8, within 100 iterations.
    Perfectly separated groups raise rather than returning a diverging
    fit.
    """
    d = data.treatments
    n1 = d.sum()
    if n1 == 0 or n1 == data.n:
        raise InvalidArgumentError("both treatment groups must be nonempty")
    X = np.column_stack([np.ones(data.n), data.covariate_matrix])
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularDesignError("propensity design is rank deficient")

    beta = np.zeros(X.shape[1])
    eta = X @ beta
    ll = _loglik(eta, d)
    for _ in range(100):
        pr = expit(eta)
        grad = X.T @ (d - pr)
        if np.linalg.norm(grad) <= 1e-8:
            break
        w = np.clip(pr * (1.0 - pr), 1e-12, None)
        hess = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise SolverFailureError("propensity Hessian is singular") from None
        scale = 1.0
        while True:
            cand = beta + scale * step
            eta_c = X @ cand
            ll_c = _loglik(eta_c, d)
            if ll_c >= ll or scale < 1e-8:
                break
            scale *= 0.5
        if ll_c < ll:
            break  # no ascent direction left; already at the optimum
        _check_separation(eta_c, d)
        improved = ll_c - ll
        beta, eta, ll = cand, eta_c, ll_c
        if improved <= 1e-10:
            break
    else:
        raise SolverFailureError("propensity fit did not converge in 100 iterations")
    return PropensityFit(gamma=beta, fitted=expit(eta))


def _check_separation(eta: np.ndarray, d: np.ndarray) -> None:
    if np.max(np.abs(eta)) > 30.0:
        perfect = np.all(eta[d == 1.0] > 0.0) and np.all(eta[d == 0.0] < 0.0)
        if perfect:
            raise SeparationError(
                "treatment is perfectly separated; the logistic likelihood "
                "is unbounded"
            )


def weighted_quantile(values, weights, p: float) -> float:
    """Smallest value whose normalised cumulative weight reaches ``p``.

    With uniform weights this is the lower empirical quantile; it is also
    the minimiser of the weighted check loss at level ``p`` (lower
    endpoint under ties).
    """
    if not 0.0 < p < 1.0:
        raise InvalidArgumentError(f"p must lie in (0, 1), got {p!r}")
    v = np.asarray(values, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if v.size == 0 or v.size != w.size:
        raise InvalidArgumentError("values and weights must match and be nonempty")
    if np.any(w < 0.0) or w.sum() <= 0.0:
        raise InvalidArgumentError("weights must be nonnegative with positive sum")
    order = np.argsort(v, kind="stable")
    cum = np.cumsum(w[order])
    cum /= cum[-1]
    idx = min(int(np.searchsorted(cum, p, side="left")), v.size - 1)
    return float(v[order][idx])


def _arm_weights(
    data: Dataset, propensity: PropensityFit, estimand: str, clamp: tuple[float, float]
):
    """(values, weights) per arm; arm 1 first. Weights are unnormalised."""
    if propensity.fitted.size != data.n:
        raise InvalidArgumentError("propensity fit does not match the dataset")
    pi = np.clip(propensity.fitted, clamp[0], clamp[1])
    d = data.treatments
    y = data.outcomes
    treated = d == 1.0
    control = ~treated
    if not np.any(treated) or not np.any(control):
        raise EstimandUndefinedError("an arm has no units")
    if estimand == "QTE":
        w1 = 1.0 / pi[treated]
        w0 = 1.0 / (1.0 - pi[control])
    else:
        w1 = np.ones(int(treated.sum()))
        w0 = pi[control] / (1.0 - pi[control])
    return (y[treated], w1), (y[control], w0)


def _weighted_effects(data, propensity, p_list, estimand, clamp) -> list[EffectEstimate]:
    if estimand not in ESTIMANDS:
        raise InvalidArgumentError(
            f"estimand must be one of {ESTIMANDS}, got {estimand!r}"
        )
    (y1, w1), (y0, w0) = _arm_weights(data, propensity, estimand, clamp)
    out = []
    for p in np.atleast_1d(np.asarray(p_list, dtype=float)):
        q1 = weighted_quantile(y1, w1, float(p))
        q0 = weighted_quantile(y0, w0, float(p))
        out.append(
            EffectEstimate(p=float(p), estimand=estimand, point=q1 - q0, q1=q1, q0=q0)
        )
    return out


def ipw_effects(
    data: Dataset,
    propensity: PropensityFit,
    p_list,
    estimand: str,
    clamp: tuple[float, float] = DEFAULT_CLAMP,
) -> list[EffectEstimate]:
    """Inverse-propensity-weighted empirical CDF estimator.

    For the population effect, arm ``t`` reweights its units by the
    inverse probability of landing in that arm; for the effect on the
    treated, the treated arm keeps unit weights and the control arm gets
    odds weights ``pi / (1 - pi)``.
    """
    return _weighted_effects(data, propensity, p_list, estimand, clamp)


def firpo_effects(
    data: Dataset,
    propensity: PropensityFit,
    p_list,
    estimand: str,
    clamp: tuple[float, float] = DEFAULT_CLAMP,
) -> list[EffectEstimate]:
    """Weighted check-loss quantile estimator.

    The minimiser of the inverse-probability-weighted check loss is the
    weighted quantile with the same weights and lower tie rule as
    :func:`ipw_effects`, so the two agree at every level; this entry
    point exists to mirror that estimator's definition.
    """
    return _weighted_effects(data, propensity, p_list, estimand, clamp)


def _boxcox_transform(y: np.ndarray, lam: float) -> np.ndarray:
    return np.log(y) if lam == 0.0 else (np.power(y, lam) - 1.0) / lam


def _boxcox_inverse(z: float, lam: float) -> float:
    if lam == 0.0:
        return math.exp(z)
    base = lam * z + 1.0
    return base ** (1.0 / lam) if base > 0.0 else 0.0


def _or_design(data: Dataset, t: float | None, interactions: bool) -> np.ndarray:
    d = data.treatments if t is None else np.full(data.n, float(t))
    cols = [np.ones(data.n), d, data.covariate_matrix]
    if interactions:
        cols.append(data.covariate_matrix * d[:, None])
    return np.column_stack(cols)


def fit_boxcox(data: Dataset, config: BoxCoxConfig = BoxCoxConfig()) -> BoxCoxFit:
    """Profile the Box-Cox exponent over a fixed grid and fit the normal
    linear outcome model at the best exponent.

    Outcomes are shifted by ``1 - min(y)`` when any outcome is
    nonpositive. The profile log-likelihood includes the transform's
    Jacobian term; ties on the grid resolve to the first (smallest)
    exponent.
    """
    y = data.outcomes
    shift = 0.0 if y.min() > 0.0 else 1.0 - float(y.min())
    ys = y + shift
    if np.any(ys <= 0.0) or not np.all(np.isfinite(ys)):
        raise TransformError("outcomes are not positive even after shifting")
    Z = _or_design(data, None, config.interactions)
    if np.linalg.matrix_rank(Z) < Z.shape[1]:
        raise SingularDesignError("outcome design is rank deficient")
    n, k = Z.shape
    log_y_sum = float(np.sum(np.log(ys)))
    best = None
    for lam in config.exponent_grid:
        h = _boxcox_transform(ys, lam)
        coef, *_ = np.linalg.lstsq(Z, h, rcond=None)
        rss = float(np.sum((h - Z @ coef) ** 2))
        if rss <= 0.0:
            rss = np.finfo(float).tiny
        ll = -0.5 * n * math.log(rss / n) + (lam - 1.0) * log_y_sum
        if best is None or ll > best[0]:
            best = (ll, lam, coef, rss)
    _, lam, coef, rss = best
    sd = math.sqrt(rss / (n - k)) if n > k else math.sqrt(rss / n)
    return BoxCoxFit(
        bc_exponent=float(lam),
        regression_coefficients=coef,
        residual_sd=sd,
        shift=shift,
        interactions=config.interactions,
    )


def _mixture_quantile(mu: np.ndarray, sd: float, p: float, lam: float) -> float:
    """Invert z -> mean(Phi((z - mu)/sd)) at ``p`` in transformed space.

    Bisection on the monotone mixture CDF; the bracket is exact because
    the mixture quantile lies between the smallest and largest component
    quantiles. For negative exponents the transform's range is bounded
    above, so the bracket is clipped into it (quantile capped at the
    model's reachable maximum).
    """
    z_lo = float(mu.min() + sd * ndtri(p))
    z_hi = float(mu.max() + sd * ndtri(p))
    if lam < 0.0:
        bound = -1.0 / lam
        z_hi = min(z_hi, bound * (1.0 - 1e-12))
        z_lo = min(z_lo, z_hi)
    for _ in range(200):
        mid = 0.5 * (z_lo + z_hi)
        if float(np.mean(ndtr((mid - mu) / sd))) >= p:
            z_hi = mid
        else:
            z_lo = mid
        if z_hi - z_lo <= 1e-14 * max(1.0, abs(z_hi)):
            break
    return z_hi


def or_boxcox_effects(
    data: Dataset,
    p_list,
    estimand: str,
    config: BoxCoxConfig = BoxCoxConfig(),
) -> list[EffectEstimate]:
    """Outcome-regression effects from the Box-Cox normal linear model.

    The conditional CDF is the fitted normal law in transformed space;
    averaging it over the relevant units (all for QTE, treated for QTT)
    gives the counterfactual distribution, which is inverted in
    transformed space and mapped back through the inverse transform and
    the shift.
    """
    if estimand not in ESTIMANDS:
        raise InvalidArgumentError(
            f"estimand must be one of {ESTIMANDS}, got {estimand!r}"
        )
    fit = fit_boxcox(data, config)
    mask = (
        np.ones(data.n, dtype=bool) if estimand == "QTE" else data.treatments == 1.0
    )
    if not np.any(mask):
        raise EstimandUndefinedError("no treated units; the QTT is undefined")
    out = []
    mus = {
        t: (_or_design(data, t, fit.interactions) @ fit.regression_coefficients)[mask]
        for t in (0.0, 1.0)
    }
    for p in np.atleast_1d(np.asarray(p_list, dtype=float)):
        if not 0.0 < p < 1.0:
            raise InvalidArgumentError(f"p must lie in (0, 1), got {p!r}")
        q = {}
        for t in (0.0, 1.0):
            z = _mixture_quantile(mus[t], fit.residual_sd, float(p), fit.bc_exponent)
            q[t] = _boxcox_inverse(z, fit.bc_exponent) - fit.shift
        out.append(
            EffectEstimate(
                p=float(p),
                estimand=estimand,
                point=q[1.0] - q[0.0],
                q1=q[1.0],
                q0=q[0.0],
            )
        )
    return out
