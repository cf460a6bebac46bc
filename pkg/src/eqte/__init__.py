"""Quantile treatment effects at intermediate and extreme levels.

Bulk-plus-tail semi-parametric estimation of quantile treatment effects:
non-crossing quantile regression below an automatically selected
transition level, a generalized Pareto exceedance law above it, weighted
and outcome-regression comparators, bootstrap inference, and a Monte
Carlo study harness.
"""

__version__ = "0.1.0"

from .baselines import (
    BoxCoxConfig,
    BoxCoxFit,
    PropensityFit,
    fit_boxcox,
    fit_propensity,
    firpo_effects,
    ipw_effects,
    or_boxcox_effects,
    weighted_quantile,
)
from .bootstrap import (
    BootstrapSummary,
    b_out_of_n_bootstrap,
    bootstrap_components,
    default_subsample_size,
    full_bootstrap,
)
from .counterfactual import (
    ESTIMANDS,
    EffectEstimate,
    GridConfig,
    ProposedFit,
    StepCdf,
    conditional_quantiles,
    estimate_effects,
    fit_proposed,
    invert_cdf,
    marginal_cdf,
    treated_cdf,
)
from .data import (
    Dataset,
    ObservedRecord,
    ProbabilityGrid,
    build_grid,
    ingest_csv,
    write_csv,
)
from .gpd import (
    AdTestResult,
    GpdParams,
    GpdTailFit,
    ad_pvalue,
    ad_statistic,
    fit_gpd_mle,
    gpd_cdf,
    gpd_tail_quantile,
)
from .quantreg import (
    QuantileFit,
    check_loss,
    fit_noncrossing_qr,
    fit_single_qr,
    predict_quantiles,
)
from .simulation import (
    DgpConfig,
    StudyResult,
    StudySettings,
    estimate_all_methods,
    generate_dgp,
    oracle_effect_table,
    oracle_true_quantiles,
    run_study,
)
from .threshold import (
    ThresholdCandidate,
    TransitionSelection,
    forward_stop,
    generate_candidates,
    select_transition,
)

from . import errors  # noqa: F401  (re-export the exception taxonomy)
