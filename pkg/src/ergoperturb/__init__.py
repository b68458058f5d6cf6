"""Perturbation analysis of invariant measures for V-geometrically ergodic chains.

The reference model is the AR(1) chain X_n = alpha X_{n-1} + theta_n,
discretized on a truncated uniform grid.
"""
__version__ = "0.1.0"

from .ar_model import (
    ARKernelSpec,
    ExpansionCoefficients,
    build_kernel,
    derivative_kernel,
    derivative_kernels,
    holder_modulus_check,
    run_counterexample,
    taylor_expansion,
)
from .ergodicity import (
    estimate_rate,
    generalized_potential,
    invariant_measure,
    resolvent,
    spectral_projection,
)
from .errors import (
    DomainError,
    EligibilityError,
    ErgoError,
    NumericalError,
    PreconditionError,
    TruncationError,
)
from .kernel_calculus import DiscretizedKernel, certify_family, fit_drift, operator_norm
from .noise import NoiseModel, gaussian, make_noise, student_t
from .perturbation import (
    check_holder_bound,
    check_lipschitz_bound,
    continuity_profile,
    kartashov_expansion,
)
from .simulation import mc_oracle
from .weighted_space import (
    Grid,
    SignedDensity,
    WeightedFunction,
    WeightSpec,
    dual_distance,
    uniform_grid,
    weighted_norm,
)

__all__ = [name for name in dir() if not name.startswith("_")]
