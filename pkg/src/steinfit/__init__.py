"""Particle-based Gaussian process regression and classification.

An ensemble of parameter particles is transported along a kernelized
gradient flow toward the posterior over kernel hyperparameters (and,
for non-Gaussian likelihoods or sparse models, whitened latent values).
Predictions pool Monte Carlo draws from every particle's conditional.
"""

from .data import (
    DataError,
    SplitSpec,
    generate_neal,
    generate_sign,
    load_csv,
    neal_mean,
    split,
    standardize,
)
from .kernels import GramMatrix, KernelFamily, KernelSpec, gram, gram_grad, make
from .models import (
    Dataset,
    Likelihood,
    ModelSpec,
    NumericalError,
    Standardization,
    build_model,
    log_joint_whitened,
    log_marginal_gaussian,
    log_target,
    minibatch_score,
    score,
    select_inducing,
)
from .params import GammaPrior, ParamEntry, ParamLayout, StandardNormalPrior, Transform
from .prediction import Metrics, PredictiveSummary, metrics, predict
from .svgd import (
    AdamState,
    ParticleEnsemble,
    RunTrace,
    SvgdConfig,
    TraceRow,
    empirical_ksd,
    median_bandwidth,
    run,
    step,
    svgd_kernel,
    transport,
    update_direction,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "DataError",
    "Dataset",
    "GammaPrior",
    "GramMatrix",
    "KernelFamily",
    "KernelSpec",
    "Likelihood",
    "Metrics",
    "ModelSpec",
    "NumericalError",
    "ParamEntry",
    "ParamLayout",
    "ParticleEnsemble",
    "PredictiveSummary",
    "RunTrace",
    "SplitSpec",
    "StandardNormalPrior",
    "Standardization",
    "SvgdConfig",
    "TraceRow",
    "Transform",
    "build_model",
    "empirical_ksd",
    "generate_neal",
    "generate_sign",
    "gram",
    "gram_grad",
    "load_csv",
    "log_joint_whitened",
    "log_marginal_gaussian",
    "log_target",
    "make",
    "median_bandwidth",
    "metrics",
    "minibatch_score",
    "neal_mean",
    "predict",
    "run",
    "score",
    "select_inducing",
    "split",
    "standardize",
    "step",
    "svgd_kernel",
    "transport",
    "update_direction",
]
