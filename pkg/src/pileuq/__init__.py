"""Uncertainty quantification for laterally loaded monopiles.

Latin hypercube designs over box priors, a finite-difference beam-on-springs
forward model, PCA-compressed sparse polynomial chaos surrogates, and
affine-invariant ensemble MCMC for sequential Bayesian updating.
"""
from .beam import (
    DeflectionProfile,
    PileConfig,
    SoilInputs,
    run_ensemble,
    solve_linear,
    solve_nonlinear,
    solve_stage,
    subgrade_profile,
)
from .config import RunConfig, load_config
from .doe import DesignMatrix, PriorEntry, PriorSpec, lhs_design, prior_logpdf, sample_prior
from .errors import (
    NumericalError,
    PileUqError,
    ValidationError,
)
from .inference import (
    AugmentedPoint,
    ChainEnsemble,
    McmcConfig,
    ObservationSet,
    StagePosterior,
    TruncatedKde,
    aies_sample,
    autocorr_time,
    burn_in,
    kde_fit,
    log_likelihood,
    log_posterior,
    map_estimate,
    predictive_interval,
    run_sequence,
    run_stage,
)
from .pca import PcaReducer, reconstruction_error, select_components
from .pce import (
    MultiIndexSet,
    PceModel,
    adapt_degree,
    design_matrix,
    eval_pce,
    fit_lars,
    fit_ols,
    gen_multi_indices,
    legendre_orthonormal,
    loo_error,
)
from .surrogate import (
    PcaPceSurrogate,
    PointwisePceSurrogate,
    ValidationReport,
    load_surrogate,
    mape,
    save_surrogate,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentedPoint",
    "ChainEnsemble",
    "DeflectionProfile",
    "DesignMatrix",
    "McmcConfig",
    "MultiIndexSet",
    "NumericalError",
    "ObservationSet",
    "PcaPceSurrogate",
    "PcaReducer",
    "PceModel",
    "PileConfig",
    "PileUqError",
    "PointwisePceSurrogate",
    "PriorEntry",
    "PriorSpec",
    "RunConfig",
    "SoilInputs",
    "StagePosterior",
    "TruncatedKde",
    "ValidationError",
    "ValidationReport",
    "adapt_degree",
    "aies_sample",
    "autocorr_time",
    "burn_in",
    "design_matrix",
    "eval_pce",
    "fit_lars",
    "fit_ols",
    "gen_multi_indices",
    "kde_fit",
    "legendre_orthonormal",
    "lhs_design",
    "load_config",
    "load_surrogate",
    "log_likelihood",
    "log_posterior",
    "loo_error",
    "map_estimate",
    "mape",
    "predictive_interval",
    "prior_logpdf",
    "reconstruction_error",
    "run_ensemble",
    "run_sequence",
    "run_stage",
    "sample_prior",
    "save_surrogate",
    "select_components",
    "solve_linear",
    "solve_nonlinear",
    "solve_stage",
    "subgrade_profile",
]
