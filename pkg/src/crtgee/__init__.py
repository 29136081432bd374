"""GEE analysis of two-arm cluster randomized trials with binary outcomes.

Marginal models with an exchangeable working correlation, five small-sample
corrections to the robust sandwich variance (KC, MD, FG, MBN, and the KC/MD
average), t-based Wald inference, a calibrated correlated-binary data
generator, and a deterministic Monte Carlo harness.
"""

from .data import Cluster, TrialDataset
from .datagen import (
    FixedSize,
    GammaSize,
    Scenario,
    gamma_cluster_sizes,
    generate_cluster,
    generate_clusters,
    generate_trial,
    qaqish_coeff,
    substream,
)
from .errors import (
    CorrectionSingularityError,
    CrtGeeError,
    DataError,
    DegenerateVarianceError,
    DomainError,
    GeneratorInvalidError,
    NonConvergenceError,
    SingularityError,
    UnsupportedDesignError,
    UsageError,
)
from .families import Family, Link, MeanModel, ModelSpec, parse_family, parse_link
from .gee import GeeFit, WorkingCorrelation, alpha_bounds, estimate_alpha_phi, fit_gee
from .inference import EffectMeasure, InferenceResult, default_measure, wald_inference
from .sandwich import (
    ALL_KINDS,
    DEFAULT_FG_BOUND,
    MULTIPLICATIVE_KINDS,
    CorrectionContext,
    EstimatorKind,
    VarianceEstimate,
    avg,
    compute_estimates,
    correction_context,
    mbn,
    model_based,
    robust_sandwich,
)
from .simulate import (
    ALL_MODELS,
    ALPHA_LEVEL,
    TYPE1_BAND,
    EstimatorSummary,
    FactorialGrid,
    ModelReplicate,
    ScenarioResult,
    aggregate,
    result_rows,
    run_grid,
    run_replicate,
    run_scenario,
)
from .tdist import betainc, student_t_quantile, student_t_sf, student_t_two_sided_p

__version__ = "0.1.0"

__all__ = [
    "ALL_KINDS",
    "ALL_MODELS",
    "ALPHA_LEVEL",
    "DEFAULT_FG_BOUND",
    "TYPE1_BAND",
    "Cluster",
    "CorrectionSingularityError",
    "CrtGeeError",
    "DataError",
    "DegenerateVarianceError",
    "DomainError",
    "EffectMeasure",
    "EstimatorKind",
    "EstimatorSummary",
    "ModelReplicate",
    "FactorialGrid",
    "Family",
    "FixedSize",
    "GammaSize",
    "GeeFit",
    "GeneratorInvalidError",
    "InferenceResult",
    "Link",
    "MeanModel",
    "ModelSpec",
    "NonConvergenceError",
    "Scenario",
    "ScenarioResult",
    "SingularityError",
    "TrialDataset",
    "UnsupportedDesignError",
    "UsageError",
    "VarianceEstimate",
    "WorkingCorrelation",
    "aggregate",
    "alpha_bounds",
    "betainc",
    "compute_estimates",
    "default_measure",
    "estimate_alpha_phi",
    "fit_gee",
    "gamma_cluster_sizes",
    "generate_cluster",
    "generate_clusters",
    "generate_trial",
    "mbn",
    "avg",
    "correction_context",
    "CorrectionContext",
    "MULTIPLICATIVE_KINDS",
    "model_based",
    "parse_family",
    "parse_link",
    "qaqish_coeff",
    "result_rows",
    "robust_sandwich",
    "run_grid",
    "run_replicate",
    "run_scenario",
    "student_t_quantile",
    "student_t_sf",
    "student_t_two_sided_p",
    "substream",
    "wald_inference",
]
