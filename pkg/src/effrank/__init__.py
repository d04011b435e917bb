"""Effective rank tr(K)^2 / ||K||_F^2 of kernel Gram matrices: exact values,
sketch/probe estimates and desk-scale limit-law experiments."""

from .errors import (
    BudgetError, ConfigError, DegenerateEstimate, DimError, DomainError, EffrankError,
    FitError, InvalidMatrix, NumericalError, UnsupportedAlpha, ZeroMatrix, ZeroSpectrum,
)
from .estimator import (
    EstimatorConfig, Estimate, ExactGramSource, KernelSource, SketchProbeSource,
    estimate_frobenius, estimate_reff, estimate_trace,
)
from .kernels import (
    RBF, Dataset, Linear, MercerPowerLaw, Polynomial, gram, mc_kernel_moments,
    mercer_moments, powerlaw_growth, sample_dataset,
)
from .linalg_core import (
    GramMatrix, effective_rank_exact, grad_f, operator_norm, sym_eigenvalues,
)
from .ntk import MLPJacobians, MLPSpec, mlp_init, mlp_jacobian, ntk_finite, ntk_infinite_relu
from .sketch_probe import CountSketchSpec, FactorJacobians, ProbeSpec, countsketch_apply, khat, \
    sketch_inner

__version__ = "0.1.0"

__all__ = [
    "BudgetError",
    "ConfigError",
    "DegenerateEstimate",
    "DimError",
    "DomainError",
    "EffrankError",
    "FitError",
    "InvalidMatrix",
    "NumericalError",
    "UnsupportedAlpha",
    "ZeroMatrix",
    "ZeroSpectrum",
    "EstimatorConfig",
    "Estimate",
    "ExactGramSource",
    "KernelSource",
    "SketchProbeSource",
    "estimate_frobenius",
    "estimate_reff",
    "estimate_trace",
    "RBF",
    "Dataset",
    "Linear",
    "MercerPowerLaw",
    "Polynomial",
    "gram",
    "mc_kernel_moments",
    "mercer_moments",
    "powerlaw_growth",
    "sample_dataset",
    "GramMatrix",
    "effective_rank_exact",
    "grad_f",
    "operator_norm",
    "sym_eigenvalues",
    "MLPJacobians",
    "MLPSpec",
    "mlp_init",
    "mlp_jacobian",
    "ntk_finite",
    "ntk_infinite_relu",
    "CountSketchSpec",
    "FactorJacobians",
    "ProbeSpec",
    "countsketch_apply",
    "khat",
    "sketch_inner",
]

