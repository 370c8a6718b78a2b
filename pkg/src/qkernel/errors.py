"""Exception hierarchy.

Every error carries a module-qualified ``code`` so the CLI can print a
one-line machine-parseable reason (``<code>: <message>``).
"""


class QKernelError(Exception):
    code = "qkernel.error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def reason(self):
        return f"{self.code}: {self}"


class DomainError(QKernelError, ValueError):
    code = "model.domain"


class ConfigurationError(QKernelError, ValueError):
    code = "config.invalid"


class ConvergenceError(QKernelError, ArithmeticError):
    code = "model.convergence"


class GridError(QKernelError, ValueError):
    code = "kernel.grid"


class CompositionError(QKernelError, ValueError):
    code = "kernel.compose"


class StabilityError(QKernelError, ArithmeticError):
    code = "kernel.stability"


class ValidationError(QKernelError, ValueError):
    code = "kernel.validation"


class MetricError(QKernelError, ValueError):
    code = "geometry.metric"


class DegenerateBlurError(QKernelError, ValueError):
    code = "geometry.degenerate"


class StatisticsError(QKernelError, ValueError):
    code = "simulate.statistics"


class SimulationError(QKernelError, ArithmeticError):
    code = "simulate.nan"


class ArbitrageBoundError(QKernelError, ValueError):
    code = "pricing.arbitrage_bound"


class PricingError(QKernelError, ValueError):
    code = "pricing.failed"
