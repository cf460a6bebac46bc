"""Linear quantile regression via exact linear programming.

Single-level fits minimise the check loss
``rho_tau(r) = r * (tau - 1{r < 0})``; the simultaneous fit minimises the
summed check losses over a grid of levels subject to non-crossing
constraints ``w_i' beta(tau_{j+1}) >= w_i' beta(tau_j)`` at every observed
design row. Because predictions are affine in the design vector,
enforcing the constraints at the data points enforces them on the whole
convex hull of the data.

Both problems are solved through their LP duals, which have only
``levels x columns`` equality rows: the dual of the check-loss problem has
one box variable per (observation, level) pair, the non-crossing
constraints contribute nonnegative slack columns, and the primal
coefficients are recovered from the equality multipliers. Optimality is
certified by the primal-dual objective gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from ._util import frozen_array
from .data import Dataset
from .errors import (
    InternalError,
    InvalidArgumentError,
    SingularDesignError,
    SolverFailureError,
)

__all__ = [
    "QuantileFit",
    "fit_single_qr",
    "fit_noncrossing_qr",
    "predict_quantiles",
    "check_loss",
]

GAP_TOL = 1e-8


@dataclass(frozen=True)
class QuantileFit:
    """Coefficient matrix of simultaneous quantile regressions.

    Row ``j`` of ``coefficients`` belongs to ``levels[j]``; column 0 is the
    intercept, column 1 the treatment coefficient, and the remaining
    columns follow the dataset's covariate order. ``objective_value`` is
    the summed check loss at the fit and ``duality_gap`` the relative
    primal-dual gap certifying it.
    """

    levels: tuple[float, ...]
    coefficients: np.ndarray
    objective_value: float
    duality_gap: float

    def __post_init__(self):
        coef = frozen_array(self.coefficients, ndim=2)
        object.__setattr__(self, "coefficients", coef)
        if coef.shape[0] != len(self.levels):
            raise InvalidArgumentError("one coefficient row per level required")
        if not np.all(np.isfinite(coef)):
            raise InvalidArgumentError("coefficients must be finite")


def check_loss(residuals: np.ndarray, tau: float) -> float:
    """Sum of ``rho_tau`` over the residuals."""
    r = np.asarray(residuals, dtype=float)
    return float(np.sum(r * (tau - (r < 0.0))))


def _validate_levels(levels) -> np.ndarray:
    taus = np.asarray(levels, dtype=float).ravel()
    if taus.size == 0:
        raise InvalidArgumentError("at least one probability level is required")
    if np.any(taus <= 0.0) or np.any(taus >= 1.0):
        raise InvalidArgumentError("levels must lie strictly inside (0, 1)")
    if np.any(np.diff(taus) <= 0.0):
        raise InvalidArgumentError("levels must be strictly increasing")
    return taus


def _check_rank(W: np.ndarray) -> None:
    if np.linalg.matrix_rank(W) < W.shape[1]:
        raise SingularDesignError(
            f"design matrix has rank < {W.shape[1]}; drop collinear columns"
        )


def _constant_column_fit(W: np.ndarray, y: np.ndarray, taus: np.ndarray):
    # Intercept-only designs: solve by order statistics and take the lower
    # endpoint of the minimizer interval, which keeps ties deterministic.
    c = W[0, 0]
    ys = np.sort(y)
    n = y.size
    B = np.empty((taus.size, 1))
    obj = 0.0
    for j, tau in enumerate(taus):
        k = n * tau
        idx = int(math.ceil(k)) if abs(k - round(k)) > 1e-12 else int(round(k))
        q = ys[min(max(idx, 1), n) - 1]
        B[j, 0] = q / c
        obj += check_loss(y - q, tau)
    return B, obj, 0.0


def _solve_qr_lp(W: np.ndarray, y: np.ndarray, taus: np.ndarray):
    """Dual-LP solve; returns (coefficients, objective, relative gap).

    The outcome is standardised to a canonical frame (median/MAD) before
    the solve and the coefficients are mapped back. Quantile-regression
    optima need not be unique (binary regressors create flat optimal
    faces), so without a canonical frame the solver could return
    different vertices for ``y`` and ``a*y + c``; standardising makes the
    returned solution shift- and scale-stable.
    """
    n, p = W.shape
    _check_rank(W)
    if p == 1 and np.ptp(W[:, 0]) == 0.0 and W[0, 0] != 0.0:
        return _constant_column_fit(W, y, taus)

    has_intercept = np.ptp(W[:, 0]) == 0.0 and W[0, 0] == 1.0
    loc = float(np.median(y)) if has_intercept else 0.0
    scale = float(np.median(np.abs(y - loc)))
    if scale <= 0.0:
        scale = 1.0
    y_std = (y - loc) / scale

    B_std, obj_std, gap = _solve_qr_lp_raw(W, y_std, taus)
    B = scale * B_std
    if has_intercept:
        B[:, 0] += loc
    residuals = y[:, None] - W @ B.T
    primal = float(np.sum(residuals * (taus[None, :] - (residuals < 0.0))))
    return B, primal, gap


def _solve_qr_lp_raw(W: np.ndarray, y: np.ndarray, taus: np.ndarray):
    n, p = W.shape
    K = taus.size
    WT = sp.csr_matrix(W.T)
    blocks = [sp.kron(sp.eye(K), WT)]
    if K > 1:
        # slack columns of the non-crossing rows: -W' in block j, +W' in j+1
        diff = sp.lil_matrix((K, K - 1))
        for m in range(K - 1):
            diff[m, m] = -1.0
            diff[m + 1, m] = 1.0
        blocks.append(sp.kron(diff.tocsr(), WT))
    A_eq = sp.hstack(blocks, format="csc")

    n_mu = n * (K - 1)
    c = np.concatenate([-np.tile(y, K), np.zeros(n_mu)])
    lo = np.concatenate([np.repeat(taus - 1.0, n), np.zeros(n_mu)])
    hi = np.concatenate([np.repeat(taus, n), np.full(n_mu, np.inf)])
    res = linprog(
        c,
        A_eq=A_eq,
        b_eq=np.zeros(K * p),
        bounds=np.column_stack([lo, hi]),
        method="highs",
    )
    if res.status == 2:
        raise InternalError(
            "solver reported infeasibility, which the problem cannot exhibit"
        )
    if res.status != 0 or res.eqlin is None:
        raise SolverFailureError(f"LP solver failed: {res.message}", gap=None)

    B = -np.asarray(res.eqlin.marginals, dtype=float).reshape(K, p)
    residuals = y[:, None] - W @ B.T
    primal = float(np.sum(residuals * (taus[None, :] - (residuals < 0.0))))
    dual = float(-res.fun)
    gap = abs(primal - dual) / max(1.0, abs(primal))
    if not np.isfinite(gap) or gap > GAP_TOL:
        raise SolverFailureError(
            f"duality gap {gap:.3e} exceeds tolerance {GAP_TOL:.0e}", gap=gap
        )
    return B, primal, gap


def fit_single_qr(data: Dataset, tau: float) -> np.ndarray:
    """Coefficients of the linear quantile regression at level ``tau``.

    The design is (intercept, treatment, covariates); the optimum is
    certified to relative tolerance 1e-8 through the duality gap.
    """
    taus = _validate_levels([tau])
    B, _, _ = _solve_qr_lp(data.design_matrix, data.outcomes, taus)
    return B[0]


def fit_noncrossing_qr(data: Dataset, levels) -> QuantileFit:
    """Jointly fit all ``levels`` under non-crossing constraints.

    The constraints are imposed at every observed design row; a constant
    solution is always feasible, so infeasibility cannot occur. With a
    single level this reduces exactly to :func:`fit_single_qr`.
    """
    taus = _validate_levels(levels)
    B, obj, gap = _solve_qr_lp(data.design_matrix, data.outcomes, taus)
    return QuantileFit(
        levels=tuple(float(t) for t in taus),
        coefficients=B,
        objective_value=obj,
        duality_gap=gap,
    )


def predict_quantiles(fit: QuantileFit, treatment: int, covariates) -> np.ndarray:
    """Affine predictions, one value per level of the fit."""
    x = np.asarray(covariates, dtype=float).ravel()
    p = fit.coefficients.shape[1]
    if x.size != p - 2:
        raise InvalidArgumentError(
            f"expected {p - 2} covariates for this fit, got {x.size}"
        )
    if treatment not in (0, 1):
        raise InvalidArgumentError(f"treatment must be 0 or 1, got {treatment!r}")
    w = np.concatenate([[1.0, float(treatment)], x])
    return fit.coefficients @ w
