"""Model parameters and the analytic symbols of the translation model.

The backward equation is

    du/dt + sigma^2 * sum_{k>=2} eps^(k-2)/k! d^k u/dx^k = 0

and every quantity here is a resummation of that series.  The kernel law
is pinned by its characteristic function

    E[exp(i p X_t)] = exp(t * m(p)),
    m(p) = (sigma^2/eps^2) * (exp(-i eps p) + i eps p - 1),

so the cumulants are kappa_k = t sigma^2 (-eps)^(k-2): a positive
translation produces a negative third cumulant (downside skew).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ConvergenceError, DomainError

# below this |eps * p| (or |eps * xdot / sigma^2|) closed forms use Taylor branches
SMALL_ARG = 1e-4


@dataclass(frozen=True)
class ModelParams:
    """Volatility ``sigma`` (x per sqrt-year), translation ``epsilon`` (x units)
    and ``horizon`` (years)."""

    sigma: float
    epsilon: float = 0.0
    horizon: float = 1.0

    def __post_init__(self):
        for name in ("sigma", "epsilon", "horizon"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
        if self.sigma <= 0:
            raise DomainError(f"sigma must be > 0, got {self.sigma}")
        if self.horizon <= 0:
            raise DomainError(f"horizon must be > 0, got {self.horizon}")

    @property
    def variance(self) -> float:
        return self.sigma ** 2 * self.horizon

    @property
    def stdev(self) -> float:
        return math.sqrt(self.variance)

    @property
    def quantumness(self) -> float:
        """|eps| / (sigma^2 t); small values mean a near-classical kernel."""
        return abs(self.epsilon) / self.variance

    @property
    def jump_intensity(self) -> float:
        """Expected number of eps-jumps over the horizon, sigma^2 t / eps^2."""
        if self.epsilon == 0:
            return math.inf
        return self.variance / self.epsilon ** 2

    @property
    def compensator(self) -> float:
        """Deterministic drift sigma^2 t / eps that keeps the kernel centred."""
        if self.epsilon == 0:
            return 0.0
        return self.variance / self.epsilon

    def with_horizon(self, horizon: float) -> "ModelParams":
        return ModelParams(self.sigma, self.epsilon, horizon)

    def with_epsilon(self, epsilon: float) -> "ModelParams":
        return ModelParams(self.sigma, epsilon, self.horizon)


@dataclass(frozen=True)
class TruncationSpec:
    """Either the resummed closed form or the first ``order`` terms (k = 2..K)."""

    order: Optional[int] = None

    def __post_init__(self):
        if self.order is not None and (int(self.order) != self.order or self.order < 2):
            raise ConfigurationError(f"series truncation needs integer K >= 2, got {self.order}")

    @classmethod
    def closed(cls) -> "TruncationSpec":
        return cls(None)

    @classmethod
    def series(cls, order: int) -> "TruncationSpec":
        return cls(order)

    @property
    def is_closed(self) -> bool:
        return self.order is None

    def label(self) -> str:
        return "closed" if self.is_closed else f"series({self.order})"


CLOSED = TruncationSpec.closed()


def _finite_complex(value: complex, what: str) -> complex:
    value = complex(value)
    if not (math.isfinite(value.real) and math.isfinite(value.imag)):
        raise DomainError(f"{what} is not finite: {value!r}")
    return value


def _check_wavenumber(p):
    arr = np.asarray(p)
    if not np.all(np.isfinite(arr)):
        raise DomainError("wavenumber must be finite")
    return arr


def _exponent_array(p: np.ndarray, sigma: float, eps: float, order: Optional[int]) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    s2 = sigma * sigma
    if order is not None:
        term = np.ones_like(p, dtype=complex)
        out = np.zeros_like(p, dtype=complex)
        minus_ip = -1j * p
        # term_k = eps^(k-2) (-ip)^k / k!
        term = minus_ip * minus_ip / 2.0
        out += term
        for k in range(3, order + 1):
            term = term * eps * minus_ip / k
            out += term
        return s2 * out
    if eps == 0.0:
        return (-0.5 * s2 * p * p).astype(complex)
    u = eps * p
    small = np.abs(u) < SMALL_ARG
    out = np.empty(p.shape, dtype=complex)
    # Taylor branch written in p so tiny eps never divides by eps^2
    ps = p[small]
    e2 = eps * eps * ps * ps
    out[small] = s2 * ps * ps * ((-0.5 + e2 / 24.0 - e2 * e2 / 720.0)
                                 + 1j * eps * ps * (1.0 / 6.0 - e2 / 120.0 + e2 * e2 / 5040.0))
    ub = u[~small]
    if ub.size:
        # exp(-iu) + iu - 1 = -2 sin^2(u/2) + i (u - sin u)
        out[~small] = (s2 / (eps * eps)) * (-2.0 * np.sin(0.5 * ub) ** 2 + 1j * (ub - np.sin(ub)))
    return out


def characteristic_exponent(p, params: ModelParams, trunc: TruncationSpec = CLOSED):
    """Transform-space multiplier m(p) of the forward equation.

    Accepts a scalar (returns ``complex``) or an array (returns a complex
    array).  ``E[exp(i p X_t)] = exp(t m(p))`` for the closed form.
    """
    arr = _check_wavenumber(p)
    out = _exponent_array(arr, params.sigma, params.epsilon, trunc.order)
    if not np.all(np.isfinite(out)):
        raise DomainError("characteristic exponent overflowed")
    if out.ndim == 0:
        return _finite_complex(out[()], "characteristic exponent")
    return out


def log_characteristic(p, params: ModelParams, trunc: TruncationSpec = CLOSED):
    """t * m(p), the log characteristic function at the model horizon."""
    return params.horizon * characteristic_exponent(p, params, trunc)


def _symbol_body(p: np.ndarray, eps: float) -> np.ndarray:
    """(exp(eps p) - eps p - 1) / eps^2 for real or complex p."""
    p = np.asarray(p)
    u = eps * p
    small = np.abs(u) < SMALL_ARG
    out = np.empty(p.shape, dtype=np.result_type(p, float))
    ps = p[small]
    out[small] = ps * ps * (0.5 + eps * ps / 6.0 + (eps * ps) ** 2 / 24.0 + (eps * ps) ** 3 / 120.0)
    ub = u[~small]
    if ub.size:
        out[~small] = (np.expm1(ub) - ub) / (eps * eps)
    return out


def hamiltonian_symbol(p, params: ModelParams, order: Optional[int] = None):
    """Real momentum symbol sigma^2 sum_{k>=2} eps^(k-2) p^k / k!.

    Closed form ``sigma^2 (exp(eps p) - eps p - 1) / eps^2``.  This is the
    function that is Legendre-transformed into the Lagrangian.
    """
    p = np.asarray(p, dtype=float)
    eps, s2 = params.epsilon, params.sigma ** 2
    if order is not None:
        term = p * p / 2.0
        out = term.copy()
        for k in range(3, order + 1):
            term = term * eps * p / k
            out = out + term
        res = s2 * out
    elif eps == 0.0:
        res = 0.5 * s2 * p * p
    else:
        res = s2 * _symbol_body(p, eps)
    return res[()] if res.ndim == 0 else res


def dispersion_omega(p, params: ModelParams, order: Optional[int] = None):
    """Dispersion relation omega(p) = i sigma^2 sum_{k>=2} eps^(k-2) p^k / k!.

    The inverse mass of the Schroedinger Hamiltonian is identified with
    sigma^2.  ``p`` may be complex; the double Wick rotation is the
    identity ``-1j * omega(-1j * p) == m(p)`` (see :func:`wick_rotated_exponent`).
    """
    p = np.asarray(p)
    if not np.all(np.isfinite(p)):
        raise DomainError("wavenumber must be finite")
    p = p.astype(complex)
    eps, s2 = params.epsilon, params.sigma ** 2
    if order is not None:
        term = p * p / 2.0
        out = term.copy()
        for k in range(3, order + 1):
            term = term * eps * p / k
            out = out + term
        res = 1j * s2 * out
    elif eps == 0.0:
        res = 0.5j * s2 * p * p
    else:
        res = 1j * s2 * _symbol_body(p, eps)
    if not np.all(np.isfinite(res)):
        raise DomainError("dispersion overflowed")
    return complex(res[()]) if res.ndim == 0 else res


def wick_rotated_exponent(p, params: ModelParams, order: Optional[int] = None):
    """Schroedinger exponent -i omega(q) continued to q = -i p.

    Equals the forward exponent m(p) term by term, which is the content of
    the double rotation (s, tau) = (i x, i t).
    """
    return -1j * dispersion_omega(-1j * np.asarray(p, dtype=float), params, order)


def _legendre_arg(xdot: float, params: ModelParams) -> float:
    if not math.isfinite(xdot):
        raise DomainError("velocity must be finite")
    return params.epsilon * xdot / params.sigma ** 2


def stationary_momentum(xdot: float, params: ModelParams) -> float:
    """Saddle point p0 = log(1 + eps xdot / sigma^2) / eps of the momentum integral."""
    u = _legendre_arg(xdot, params)
    if u <= -1.0:
        raise DomainError("logarithm branch: eps * xdot / sigma^2 must exceed -1",
                          ratio=u)
    s2 = params.sigma ** 2
    if params.epsilon == 0.0:
        return xdot / s2
    if abs(u) < SMALL_ARG:
        # log1p(u)/eps = (xdot/sigma^2)(1 - u/2 + u^2/3)
        return (xdot / s2) * (1.0 - u / 2.0 + u * u / 3.0)
    return math.log1p(u) / params.epsilon


def momentum_gradient(p: float, xdot: float, params: ModelParams) -> float:
    """h'(p) for h(p) = p xdot - hamiltonian_symbol(p)."""
    eps, s2 = params.epsilon, params.sigma ** 2
    if eps == 0.0:
        return xdot - s2 * p
    return xdot - s2 * math.expm1(eps * p) / eps


def lagrangian(xdot: float, params: ModelParams, trunc: TruncationSpec = CLOSED) -> float:
    """Lagrangian L(xdot), the Legendre transform of the momentum symbol.

    Series mode sums ``sum_k (-eps)^k xdot^(k+2) / (sigma^(2(k+1)) (k+1)(k+2))``
    for k < K and requires |eps xdot / sigma^2| < 1.
    """
    u = _legendre_arg(xdot, params)
    s2 = params.sigma ** 2
    if not trunc.is_closed:
        if abs(u) >= 1.0:
            raise ConvergenceError("Lagrangian series diverges: |eps xdot / sigma^2| >= 1",
                                   ratio=u)
        total = 0.0
        lead = xdot * xdot / s2
        power = 1.0
        for k in range(trunc.order):
            total += lead * power / ((k + 1) * (k + 2))
            power *= -u
        return total
    if u <= -1.0:
        raise DomainError("logarithm branch: eps * xdot / sigma^2 must exceed -1", ratio=u)
    if params.epsilon == 0.0 or abs(u) < SMALL_ARG:
        lead = xdot * xdot / s2
        return lead * (0.5 - u / 6.0 + u * u / 12.0)
    p0 = stationary_momentum(xdot, params)
    # closed form p0 xdot - (sigma^2/eps^2)(e^{eps p0} - eps p0 - 1) with e^{eps p0} = 1 + u
    return p0 * xdot - (s2 / params.epsilon ** 2) * (u - params.epsilon * p0)


def fluctuation_width(xdot: float, params: ModelParams, dt: float) -> float:
    """Gaussian estimate of the fluctuation integral about the saddle point,
    sqrt(pi / (sigma^2 dt (1 + eps xdot / sigma^2))).

    Only meaningful when eps / (sigma^2 dt) is small.
    """
    u = _legendre_arg(xdot, params)
    if u <= -1.0:
        raise DomainError("logarithm branch: eps * xdot / sigma^2 must exceed -1", ratio=u)
    return math.sqrt(math.pi / (params.sigma ** 2 * dt * (1.0 + u)))
