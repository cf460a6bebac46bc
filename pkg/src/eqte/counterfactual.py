"""Bulk-plus-tail counterfactual distributions and quantile effects.

A fitted model carries a non-crossing quantile-regression fit on the bulk
probability levels and a generalized Pareto exceedance law above a
covariate-dependent threshold at the transition level. Each unit's
conditional quantile vector over the full grid is sorted into
nondecreasing order (monotone rearrangement) to bridge the bulk/tail
seam, averaged into step CDFs over the relevant unit set, inverted via
``inf{z : F(z) >= p}``, and differenced into quantile treatment effects.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._util import exceedance_mask, frozen_array
from .data import Dataset, ProbabilityGrid, build_grid
from .errors import (
    EstimandUndefinedError,
    InsufficientTailError,
    InternalError,
    InvalidArgumentError,
    TailShapeWarning,
)
from .gpd import MIN_EXCEEDANCES, GpdTailFit, fit_gpd_mle, gpd_tail_quantile
from .quantreg import QuantileFit, fit_noncrossing_qr
from .threshold import TransitionSelection

__all__ = [
    "GridConfig",
    "ProposedFit",
    "StepCdf",
    "EffectEstimate",
    "ESTIMANDS",
    "fit_proposed",
    "conditional_quantiles",
    "marginal_cdf",
    "treated_cdf",
    "invert_cdf",
    "estimate_effects",
]

ESTIMANDS = ("QTE", "QTT")


@dataclass(frozen=True)
class GridConfig:
    """Probability-grid sizes for the assembled distribution."""

    bulk_count: int = 75
    extreme_count: int = 25
    tau_max: float = 0.9995


@dataclass(frozen=True)
class StepCdf:
    """Discrete distribution: sorted support with cumulative mass."""

    support: np.ndarray
    cum_mass: np.ndarray

    def __post_init__(self):
        s = frozen_array(self.support, ndim=1)
        c = frozen_array(self.cum_mass, ndim=1)
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "cum_mass", c)
        if s.size != c.size or s.size == 0:
            raise InvalidArgumentError("support and cum_mass must match and be nonempty")
        if np.any(np.diff(s) <= 0.0):
            raise InvalidArgumentError("support must be strictly increasing")
        if np.any(np.diff(c) < 0.0) or c[0] < 0.0:
            raise InvalidArgumentError("cumulative mass must be nondecreasing from 0")
        if abs(c[-1] - 1.0) > 1e-12:
            raise InvalidArgumentError("cumulative mass must end at 1")

    @staticmethod
    def from_pairs(values: np.ndarray, masses: np.ndarray) -> "StepCdf":
        """Pool (value, mass) pairs, merging exact ties by summing mass.

        The accumulated mass is renormalised by its final value to absorb
        float summation drift; the drift itself must be below 1e-9.
        """
        v = np.asarray(values, dtype=float).ravel()
        m = np.asarray(masses, dtype=float).ravel()
        if v.size != m.size or v.size == 0:
            raise InvalidArgumentError("values and masses must match and be nonempty")
        support, inverse = np.unique(v, return_inverse=True)
        mass = np.bincount(inverse, weights=m, minlength=support.size)
        cum = np.cumsum(mass)
        total = cum[-1]
        if abs(total - 1.0) > 1e-9:
            raise InternalError(f"step CDF mass sums to {total!r}, expected 1")
        return StepCdf(support=support, cum_mass=cum / total)


@dataclass(frozen=True)
class EffectEstimate:
    """Point estimate of a quantile treatment effect at one level."""

    p: float
    estimand: str
    point: float
    q1: float
    q0: float

    def __post_init__(self):
        if self.estimand not in ESTIMANDS:
            raise InvalidArgumentError(
                f"estimand must be one of {ESTIMANDS}, got {self.estimand!r}"
            )
        if self.point != self.q1 - self.q0:
            raise InvalidArgumentError("point must equal q1 - q0")

    def to_json_dict(self) -> dict:
        return {
            "p": self.p,
            "estimand": self.estimand,
            "point": self.point,
            "q1": self.q1,
            "q0": self.q0,
        }


@dataclass(frozen=True)
class ProposedFit:
    """Bulk quantile fit plus tail exceedance law on a shared grid."""

    grid: ProbabilityGrid
    bulk: QuantileFit
    tail: GpdTailFit
    n: int
    n_treated: int

    def __post_init__(self):
        if tuple(self.bulk.levels) != tuple(self.grid.bulk_levels):
            raise InvalidArgumentError("bulk fit levels must equal the grid bulk segment")

    @property
    def tail_depths(self) -> np.ndarray:
        """Tail quantile offsets above the threshold, one per extreme level."""
        d = np.array(
            [
                gpd_tail_quantile(t, 0.0, self.tail.params, self.tail.exceedance_rate)
                for t in self.grid.extreme_levels
            ]
        )
        d.setflags(write=False)
        return d


def fit_proposed(
    data: Dataset,
    selection: TransitionSelection,
    grid_config: GridConfig = GridConfig(),
) -> ProposedFit:
    """Fit the bulk-plus-tail model at the selected transition level.

    The bulk is a non-crossing quantile regression over the grid's bulk
    levels; the threshold plane is the selection's fitted coefficient
    vector at the transition level; the GPD is fitted by maximum
    likelihood to the pooled positive residuals above that plane, and the
    exceedance rate is their fraction of the sample.
    """
    grid = build_grid(
        selection.selected_level,
        grid_config.bulk_count,
        grid_config.extreme_count,
        grid_config.tau_max,
    )
    alpha = selection.selected_candidate.coefficients
    W = data.design_matrix
    if alpha.size != W.shape[1]:
        raise InvalidArgumentError(
            "selection was fitted on a different covariate dimension"
        )
    fitted = W @ alpha
    magnitudes = (data.outcomes - fitted)[exceedance_mask(data.outcomes, fitted)]
    if magnitudes.size < MIN_EXCEEDANCES:
        raise InsufficientTailError(
            f"only {magnitudes.size} exceedances above the transition threshold; "
            f"need at least {MIN_EXCEEDANCES}"
        )
    rate = magnitudes.size / data.n
    first_extreme = grid.extreme_levels[0]
    if 1.0 - first_extreme > rate:
        # the fitted plane interpolates m+1 points, so the observed rate can
        # undershoot 1 - tau_u far enough to leave the first extreme level
        # outside the tail model's reach
        raise InsufficientTailError(
            f"exceedance rate {rate:.6f} cannot cover the first extreme level "
            f"{first_extreme:.6f} (needs at least {1.0 - first_extreme:.6f})"
        )
    params = fit_gpd_mle(magnitudes)
    if params.xi <= 0.0:
        warnings.warn(
            f"fitted tail shape {params.xi:.4f} is not heavy; extreme quantiles "
            "are effectively bounded",
            TailShapeWarning,
            stacklevel=2,
        )
    bulk = fit_noncrossing_qr(data, grid.bulk_levels)
    tail = GpdTailFit(
        threshold_coefficients=alpha,
        params=params,
        exceedance_rate=rate,
        n_exceedances=int(magnitudes.size),
    )
    return ProposedFit(
        grid=grid, bulk=bulk, tail=tail, n=data.n, n_treated=data.n_treated
    )


def _quantile_matrix(fit: ProposedFit, design: np.ndarray) -> np.ndarray:
    """Per-row conditional quantile vectors over the grid, rows sorted."""
    bulk_part = design @ fit.bulk.coefficients.T
    u_star = design @ fit.tail.threshold_coefficients
    ext_part = u_star[:, None] + fit.tail_depths[None, :]
    return np.sort(np.hstack([bulk_part, ext_part]), axis=1)


def _design_for(data: Dataset, t: int) -> np.ndarray:
    if t not in (0, 1):
        raise InvalidArgumentError(f"treatment must be 0 or 1, got {t!r}")
    return np.column_stack(
        [np.ones(data.n), np.full(data.n, float(t)), data.covariate_matrix]
    )


def conditional_quantiles(fit: ProposedFit, t: int, covariates) -> np.ndarray:
    """One unit's conditional quantiles over the full grid, rearranged.

    Bulk levels come from the non-crossing fit, extreme levels from the
    tail law anchored at the unit's threshold value; the combined vector
    is sorted nondecreasing before use.
    """
    x = np.asarray(covariates, dtype=float).ravel()
    if t not in (0, 1):
        raise InvalidArgumentError(f"treatment must be 0 or 1, got {t!r}")
    p = fit.bulk.coefficients.shape[1]
    if x.size != p - 2:
        raise InvalidArgumentError(f"expected {p - 2} covariates, got {x.size}")
    design = np.concatenate([[1.0, float(t)], x])[None, :]
    return _quantile_matrix(fit, design)[0]


def _assemble_cdf(fit: ProposedFit, design: np.ndarray) -> StepCdf:
    q = _quantile_matrix(fit, design)
    n_rows = q.shape[0]
    weights = np.tile(np.asarray(fit.grid.weights) / n_rows, n_rows)
    return StepCdf.from_pairs(q.ravel(), weights)


def marginal_cdf(fit: ProposedFit, data: Dataset, t: int) -> StepCdf:
    """Counterfactual distribution of the outcome under treatment ``t``,
    averaging the conditional distribution over every unit's covariates."""
    return _assemble_cdf(fit, _design_for(data, t))


def treated_cdf(fit: ProposedFit, data: Dataset, t: int) -> StepCdf:
    """As :func:`marginal_cdf` but averaging over treated units only."""
    mask = data.treatments == 1.0
    if not np.any(mask):
        raise EstimandUndefinedError("no treated units; the QTT is undefined")
    design = _design_for(data, t)[mask]
    return _assemble_cdf(fit, design)


def invert_cdf(cdf: StepCdf, p: float) -> float:
    """Smallest support point whose cumulative mass reaches ``p``."""
    if not 0.0 < p <= 1.0:
        raise InvalidArgumentError(f"p must lie in (0, 1], got {p!r}")
    idx = int(np.searchsorted(cdf.cum_mass, p, side="left"))
    if idx >= cdf.support.size:
        if p <= cdf.cum_mass[-1] + 1e-9:
            idx = cdf.support.size - 1
        else:
            raise InternalError(
                f"requested mass {p!r} exceeds total mass {cdf.cum_mass[-1]!r}"
            )
    return float(cdf.support[idx])


def estimate_effects(
    fit: ProposedFit, data: Dataset, p_list, estimand: str
) -> list[EffectEstimate]:
    """Quantile treatment effects at each requested level.

    QTE inverts the marginal counterfactual CDFs, QTT the treated-only
    ones. Levels above the grid's ``tau_max`` are rejected up front.
    """
    if estimand not in ESTIMANDS:
        raise InvalidArgumentError(
            f"estimand must be one of {ESTIMANDS}, got {estimand!r}"
        )
    ps = [float(p) for p in np.atleast_1d(np.asarray(p_list, dtype=float))]
    for p in ps:
        if not 0.0 < p <= fit.grid.tau_max:
            raise InvalidArgumentError(
                f"level {p!r} outside (0, tau_max={fit.grid.tau_max}]"
            )
    if estimand == "QTE":
        f1 = marginal_cdf(fit, data, 1)
        f0 = marginal_cdf(fit, data, 0)
    else:
        f1 = treated_cdf(fit, data, 1)
        f0 = treated_cdf(fit, data, 0)
    out = []
    for p in ps:
        q1 = invert_cdf(f1, p)
        q0 = invert_cdf(f0, p)
        out.append(EffectEstimate(p=p, estimand=estimand, point=q1 - q0, q1=q1, q0=q0))
    return out
