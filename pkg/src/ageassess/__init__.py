"""Bayesian analysis of a two-indicator medical age assessment procedure.

The package fits per-indicator maturity models from published study
summaries, samples the joint posterior over indicator parameters, latent
ages, and the population age profile given a 3x3 classification count
table, and reports per-cell classification error rates with credibility
intervals.
"""

__version__ = "0.1.0"

from .errors import AgeAssessError, DataError, FitError, ModelError
from .indicators import (
    PRIOR_PRESETS,
    IndicatorParams,
    IndicatorPrior,
    IndicatorState,
    prior_logdensity,
    prob_missing,
    prob_state,
    prob_vector,
)
from .population import (
    AgeGrid,
    ProfilePrior,
    build_grid,
    default_grid,
    profile_quantile_bands,
    sample_prior_profile,
    uniform_profile,
)
from .studies import (
    BinnedStudy,
    QuantileStudy,
    RawCohort,
    fit_probit_mle,
    reassign_stage_fraction,
    reconstruct_binned,
    reconstruct_quantiles,
)
from .inference import (
    ChainConfig,
    ChainOutput,
    ObservedTable,
    diagnostics,
    gibbs_update_profile,
    mh_update_params,
    run_chain,
    run_chains,
    sample_latent_counts,
)
from .assessment import (
    ClassificationRule,
    classify,
    credibility_interval,
    error_rate_table,
    prob_over_threshold,
    rmv_rule,
)
from .fitcheck import (
    bootstrap_pvalue,
    fit_missingness_mle,
    predicted_table,
)
