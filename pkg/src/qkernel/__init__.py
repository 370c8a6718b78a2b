"""Non-Gaussian transition kernels of the translation quantum Black-Scholes model."""
__version__ = "0.1.0"

from .errors import QKernelError  # noqa: E402
from .model import (  # noqa: E402
    ModelParams,
    TruncationSpec,
    characteristic_exponent,
    dispersion_omega,
    hamiltonian_symbol,
    lagrangian,
    stationary_momentum,
)
from .kernel import (  # noqa: E402
    CumulantSet,
    KernelDensity,
    SpatialGrid,
    analytic_cumulants,
    auto_grid,
    compose,
    compute_kernel,
    empirical_moments,
    spectral_propagate,
)

__all__ = [
    "QKernelError", "ModelParams", "TruncationSpec", "characteristic_exponent",
    "dispersion_omega", "hamiltonian_symbol", "lagrangian", "stationary_momentum",
    "CumulantSet", "KernelDensity", "SpatialGrid", "analytic_cumulants", "auto_grid",
    "compose", "compute_kernel", "empirical_moments", "spectral_propagate",
]
