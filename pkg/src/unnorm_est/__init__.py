"""Estimation for un-normalised statistical models.

Fits exponential-family (and general) models whose normalising constant
is intractable, using either a logistic-classification objective or an
importance-sampling likelihood approximation over an extended parameter
(theta, nu). Ships asymptotic-variance calculators and a reproducible
replication harness with a CLI front end.
"""

# Pin BLAS threading before numpy loads anywhere in this process: keeps
# matrix reductions single-threaded so outputs do not depend on core count.
import os as _os

for _key in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    _os.environ.setdefault(_key, "1")
del _os, _key

from .models import (
    ExpFamilySpec,
    ExtendedParam,
    ModelSpec,
    TruncGaussParams,
    flatten_triu,
    half_normal_proposal_params,
    log_partition,
    model_from_exp_family,
    moment_from_natural,
    natural_1d,
    natural_dim,
    natural_from_moment,
    natural_in_domain,
    nu_star,
    oracle_1d_model,
    positive_orthant_prob,
    trunc_gauss_model,
    unflatten_sym,
)
from .objectives import (
    Dataset,
    ObjectiveEval,
    is_loglik,
    is_loglik_ratio,
    nce_loglik,
    poisson_loglik,
    profile_nu,
)
from .optim import (
    FitResult,
    SolverOptions,
    default_init,
    fit,
    fit_profiled_is,
)
from .sampling import (
    ChainDiagnostics,
    RngStream,
    TruthSample,
    batch_means_se,
    lag_autocovariances,
    rw_metropolis_psi,
    sample_proposal_iid,
    sample_truth_iid,
)
from .asymptotics import (
    QRWeights,
    VarianceReport,
    VarianceSuite,
    asy_variance,
    bootstrap_se,
    compute_qr,
    estimator_gap_limit,
    extended_likelihood_hessian,
    loewner_gap,
    reduced_variance_forms,
    variance_suite,
)
from .experiments import (
    MODES,
    ExperimentConfig,
    config_from_mapping,
    parse_config_file,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "ExpFamilySpec",
    "ExtendedParam",
    "ModelSpec",
    "TruncGaussParams",
    "flatten_triu",
    "unflatten_sym",
    "half_normal_proposal_params",
    "log_partition",
    "model_from_exp_family",
    "moment_from_natural",
    "natural_1d",
    "natural_dim",
    "natural_from_moment",
    "natural_in_domain",
    "nu_star",
    "oracle_1d_model",
    "positive_orthant_prob",
    "trunc_gauss_model",
    "Dataset",
    "ObjectiveEval",
    "is_loglik",
    "is_loglik_ratio",
    "nce_loglik",
    "poisson_loglik",
    "profile_nu",
    "FitResult",
    "SolverOptions",
    "default_init",
    "fit",
    "fit_profiled_is",
    "ChainDiagnostics",
    "RngStream",
    "TruthSample",
    "batch_means_se",
    "lag_autocovariances",
    "rw_metropolis_psi",
    "sample_proposal_iid",
    "sample_truth_iid",
    "QRWeights",
    "VarianceReport",
    "VarianceSuite",
    "asy_variance",
    "bootstrap_se",
    "compute_qr",
    "estimator_gap_limit",
    "extended_likelihood_hessian",
    "loewner_gap",
    "reduced_variance_forms",
    "variance_suite",
    "MODES",
    "ExperimentConfig",
    "config_from_mapping",
    "parse_config_file",
    "run_experiment",
    "__version__",
]
