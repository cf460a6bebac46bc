"""Two-step selection of the bulk/tail transition level.

Step one fits a separate quantile regression at each candidate level, so
each candidate is a covariate-dependent threshold plane. Step two tests,
for each candidate in increasing order, whether the exceedances above its
plane follow a generalized Pareto law (Anderson-Darling test with a
parametric-bootstrap p-value) and applies the ForwardStop rule

    k_hat = max{ k : -(1/k) * sum_{i<=k} log(1 - p_i) <= lambda }

to the ordered p-values, with k_hat = 0 when no k qualifies.

The selected level depends on the convention: the ``paper-literal``
convention takes the level at position k_hat (the last rejected
candidate, falling back to the lowest level when k_hat = 0), while
``first-accepted`` takes the first non-rejected candidate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from ._util import check_seed, exceedance_mask, frozen_array, subseed
from .data import Dataset
from .errors import ConventionWarning, InvalidArgumentError, SelectionFailureError
from .gpd import MIN_EXCEEDANCES, ad_pvalue
from .quantreg import _solve_qr_lp, _validate_levels

__all__ = [
    "ThresholdCandidate",
    "TransitionSelection",
    "generate_candidates",
    "forward_stop",
    "select_transition",
    "CONVENTIONS",
]

CONVENTIONS = ("paper-literal", "first-accepted")


@dataclass(frozen=True)
class ThresholdCandidate:
    """One candidate transition level and its fitted threshold plane.

    ``p_value`` is None until the goodness-of-fit step has run; untestable
    candidates (fewer than 10 exceedances) receive p = 0, i.e. they count
    as rejected.
    """

    level: float
    coefficients: np.ndarray
    n_exceedances: int
    p_value: float | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "coefficients", frozen_array(self.coefficients, ndim=1)
        )

    @property
    def testable(self) -> bool:
        return self.n_exceedances >= MIN_EXCEEDANCES


@dataclass(frozen=True)
class TransitionSelection:
    candidates: tuple[ThresholdCandidate, ...]
    k_hat: int
    selected_level: float
    fdr_level: float
    convention: str

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise InvalidArgumentError(
                f"convention must be one of {CONVENTIONS}, got {self.convention!r}"
            )
        if not 0 <= self.k_hat <= len(self.candidates):
            raise InvalidArgumentError("k_hat must lie in [0, number of candidates]")
        if self.selected_level not in [c.level for c in self.candidates]:
            raise InvalidArgumentError("selected level is not a candidate level")

    @property
    def selected_candidate(self) -> ThresholdCandidate:
        for c in self.candidates:
            if c.level == self.selected_level:
                return c
        raise InvalidArgumentError("selected level is not a candidate level")


def generate_candidates(data: Dataset, levels) -> list[ThresholdCandidate]:
    """Fit one quantile regression per level and count exceedances.

    Exceedances are observations strictly above the fitted plane. Levels
    must be strictly increasing; candidates with fewer than 10 exceedances
    are kept but will be treated as rejected by the selection step.
    """
    taus = _validate_levels(levels)
    W = data.design_matrix
    y = data.outcomes
    out = []
    for tau in taus:
        B, _, _ = _solve_qr_lp(W, y, np.array([tau]))
        coef = B[0]
        n_exc = int(np.sum(exceedance_mask(y, W @ coef)))
        out.append(
            ThresholdCandidate(level=float(tau), coefficients=coef, n_exceedances=n_exc)
        )
    return out


def forward_stop(p_values, fdr_level: float) -> int:
    """Largest k whose running mean of -log(1 - p_i) stays within the level.

    Returns 0 when even the first p-value overshoots ("no rejection is
    made"). p-values equal to 1 are clamped to 1 - 1e-15 so their term is
    large but finite.
    """
    if fdr_level <= 0.0:
        raise InvalidArgumentError(f"the FDR level must be positive, got {fdr_level!r}")
    p = np.asarray(p_values, dtype=float).ravel()
    if p.size == 0:
        return 0
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise InvalidArgumentError("p-values must lie in [0, 1]")
    terms = -np.log1p(-np.minimum(p, 1.0 - 1e-15))
    running_mean = np.cumsum(terms) / np.arange(1, p.size + 1)
    qualifying = np.nonzero(running_mean <= fdr_level)[0]
    return int(qualifying[-1] + 1) if qualifying.size else 0


def select_transition(
    data: Dataset,
    levels,
    fdr_level: float = 0.05,
    n_boot: int = 500,
    seed: int = 0,
    convention: str = "paper-literal",
) -> TransitionSelection:
    """Run the full two-step transition-level selection.

    Each candidate's exceedance magnitudes get an Anderson-Darling
    bootstrap p-value (a per-candidate RNG stream is derived from
    ``(seed, candidate index)``, so the result does not depend on
    evaluation order); ForwardStop is then applied to the ordered
    p-values. Raises if no candidate has enough exceedances to test.
    """
    if convention not in CONVENTIONS:
        raise InvalidArgumentError(
            f"convention must be one of {CONVENTIONS}, got {convention!r}"
        )
    if fdr_level <= 0.0:
        raise InvalidArgumentError(f"the FDR level must be positive, got {fdr_level!r}")
    check_seed(seed)
    candidates = generate_candidates(data, levels)
    if not any(c.testable for c in candidates):
        raise SelectionFailureError(
            "no candidate level has enough exceedances for a goodness-of-fit test"
        )
    W = data.design_matrix
    y = data.outcomes
    tested = []
    for i, cand in enumerate(candidates):
        if cand.testable:
            fitted = W @ cand.coefficients
            magnitudes = (y - fitted)[exceedance_mask(y, fitted)]
            result = ad_pvalue(magnitudes, n_boot=n_boot, seed=subseed(seed, i))
            tested.append(replace(cand, p_value=result.p_value))
        else:
            tested.append(replace(cand, p_value=0.0))

    k_hat = forward_stop([c.p_value for c in tested], fdr_level)
    n_cand = len(tested)
    if convention == "paper-literal":
        selected = tested[k_hat - 1].level if k_hat >= 1 else tested[0].level
    else:
        if k_hat < n_cand:
            selected = tested[k_hat].level
        else:
            warnings.warn(
                "every candidate threshold was rejected; falling back to the "
                "highest level",
                ConventionWarning,
                stacklevel=2,
            )
            selected = tested[-1].level
    return TransitionSelection(
        candidates=tuple(tested),
        k_hat=k_hat,
        selected_level=float(selected),
        fdr_level=float(fdr_level),
        convention=convention,
    )
