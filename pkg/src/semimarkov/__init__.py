"""Multi-state event-history modeling on the sojourn or calendar clock.

Estimation and prediction for Markov renewal processes under proportional
transition hazards: counting-process construction, Nelson-Aalen/product-limit
estimators, the plug-in semi-Markov kernel, partial-likelihood fitting with
Breslow baselines, renewal-convolution and product-integral transition
probabilities, trajectory simulation, and model-based bootstrap inference.
"""

from .bootstrap import (
    BootstrapConfig,
    BootstrapRun,
    CensoringDistribution,
    bootstrap_distribution,
    percentile_interval,
    resample_cohort,
)
from .cox import (
    AGGREGATE,
    FitConfig,
    FitResult,
    RiskSums,
    TransitionCovariates,
    baseline_asymptotic_variance,
    breslow_baseline,
    covariate_hazard,
    expand_transition_covariates,
    fit,
    information,
    profile_loglik,
    risk_sums,
    score,
)
from .events import (
    CENSORED,
    Clock,
    CountingSystem,
    CovariateProfile,
    SojournRecord,
    StateSpace,
    TransitionFrequencyTable,
    ValidatedHistory,
    build_counting_system,
    summarize_transitions,
    validate_records,
)
from .nonparametric import (
    IntensityEstimate,
    KernelEstimate,
    SurvivalEstimate,
    nelson_aalen,
    semi_markov_kernel,
    state_survival,
)
from .simulate import (
    SimConfig,
    SimulatedCohort,
    ad_five_state,
    draw_next_state,
    invert_total_hazard,
    simulate_cohort,
)
from .steps import (
    StepFunction,
    StepMatrix,
    convolve,
    evaluate,
    product_integral_matrix,
    product_integral_scalar,
    sum_functions,
)
from .transition import (
    Occupant,
    RenewalEstimate,
    TransitionEstimate,
    aalen_johansen,
    dsh_pipeline,
    dsh_transition,
    n_step_kernel,
    predict_from,
    renewal_function,
)

__version__ = "0.1.0"

__all__ = [
    "AGGREGATE",
    "BootstrapConfig",
    "BootstrapRun",
    "CENSORED",
    "CensoringDistribution",
    "Clock",
    "CountingSystem",
    "CovariateProfile",
    "FitConfig",
    "FitResult",
    "IntensityEstimate",
    "KernelEstimate",
    "Occupant",
    "RenewalEstimate",
    "RiskSums",
    "SimConfig",
    "SimulatedCohort",
    "SojournRecord",
    "StateSpace",
    "StepFunction",
    "StepMatrix",
    "SurvivalEstimate",
    "TransitionCovariates",
    "TransitionEstimate",
    "TransitionFrequencyTable",
    "ValidatedHistory",
    "aalen_johansen",
    "ad_five_state",
    "baseline_asymptotic_variance",
    "bootstrap_distribution",
    "breslow_baseline",
    "build_counting_system",
    "convolve",
    "covariate_hazard",
    "draw_next_state",
    "dsh_pipeline",
    "dsh_transition",
    "evaluate",
    "expand_transition_covariates",
    "fit",
    "information",
    "invert_total_hazard",
    "n_step_kernel",
    "nelson_aalen",
    "percentile_interval",
    "predict_from",
    "product_integral_matrix",
    "product_integral_scalar",
    "profile_loglik",
    "renewal_function",
    "resample_cohort",
    "risk_sums",
    "score",
    "semi_markov_kernel",
    "simulate_cohort",
    "state_survival",
    "sum_functions",
    "summarize_transitions",
    "validate_records",
]
