"""European options under the translation kernel, implied vols and smiles.

The underlier is arithmetic, ``S_T = S_0 + X_T`` with ``X_T`` drawn from the
kernel, and rates are zero.  Normal (Bachelier) vols are in price units per
sqrt-year, so an eps = 0 kernel reprices at normal vol ``sigma`` exactly.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import bernoulli, comb, ndtr

from . import __version__
from .errors import (ArbitrageBoundError, ConfigurationError, DomainError, GridError, PricingError,
                     QKernelError)
from .kernel import KernelDensity, _to_characteristic, compute_kernel
from .model import ModelParams

NORMAL = "normal"
LOGNORMAL = "lognormal"
_SQRT_2PI = math.sqrt(2.0 * math.pi)
# prices within this many spot units of intrinsic are at the arbitrage bound
BOUND_MARGIN = 1e-13
# Euler-Maclaurin terms used to correct the payoff kink on smooth kernels
KINK_TERMS = 8


@dataclass(frozen=True)
class OptionSpec:
    spot: float
    strike: float
    maturity: float
    side: str = "call"

    def __post_init__(self):
        if not (self.spot > 0 and self.strike > 0 and self.maturity > 0):
            raise DomainError("spot, strike and maturity must be positive")
        if self.side not in ("call", "put"):
            raise DomainError(f"side must be 'call' or 'put', got {self.side!r}")

    def payoff(self, s):
        if self.side == "call":
            return np.maximum(s - self.strike, 0.0)
        return np.maximum(self.strike - s, 0.0)

    def intrinsic(self) -> float:
        return float(self.payoff(np.float64(self.spot)))


def price_european(spec: OptionSpec, params: ModelParams,
                   kernel: Optional[KernelDensity] = None, discount: float = 1.0) -> float:
    """E[payoff(S_0 + X_T)] by quadrature against the kernel at ``spec.maturity``.

    ``discount`` is a presentation-layer multiplier; the model itself has r = 0.
    """
    run = params.with_horizon(spec.maturity)
    if kernel is None:
        kernel = compute_kernel(run)
    elif not math.isclose(kernel.params.horizon, spec.maturity, rel_tol=1e-12):
        raise ConfigurationError("kernel horizon does not match the option maturity")
    w = kernel.masses()
    s = spec.spot + kernel.grid.x
    pay = spec.payoff(s)
    # mass leaking past the grid ends, weighted by the payoff there
    leak = (abs(w[0]) + abs(w[1])) * (pay[0] + spec.spot) + (abs(w[-1]) + abs(w[-2])) * (pay[-1] + spec.spot)
    if leak > 1e-8 * spec.spot:
        raise GridError("kernel grid does not cover the payoff support", leak=leak)
    if kernel.lattice:
        # point masses: the sum is the expectation
        return discount * float(np.dot(w, pay))
    a = spec.strike - spec.spot
    call = _smooth_call_value(kernel, a)
    if spec.side == "put":
        call -= float(np.dot(w, kernel.grid.x)) - a
    return discount * call


def _bernoulli_poly(n: int, theta: float) -> float:
    b = bernoulli(n)
    return float(sum(comb(n, k, exact=True) * b[k] * theta ** (n - k) for k in range(n + 1)))


def _smooth_call_value(kernel: KernelDensity, a: float) -> float:
    """E[(X - a)^+] for a smooth kernel.

    The trapezoid sum of g(x) = (x - a)^+ rho(x) loses its spectral accuracy
    at the kink, with an O(dx^2) error.  The offset Euler-Maclaurin formula

        h sum_j g(a + (j + theta) h) = int_a g - sum_k h^k B_k(theta) g^(k-1)(a) / k!

    restores it, with g^(k-1)(a) = (k - 1) rho^(k-2)(a) taken spectrally.
    """
    grid = kernel.grid
    x = grid.x
    h = grid.spacing
    right = x >= a
    total = h * float(np.dot(x[right] - a, kernel.values[right]))
    if not np.any(right):
        return 0.0
    theta = (float(x[right][0]) - a) / h
    p = grid.wavenumbers
    phi = _to_characteristic(kernel.values, grid) * np.exp(-1j * p * a)
    norm = grid.n * h
    for k in range(2, KINK_TERMS + 1):
        deriv = float(np.sum((-1j * p) ** (k - 2) * phi).real) / norm
        total += h ** k * _bernoulli_poly(k, theta) * (k - 1) * deriv / math.factorial(k)
    return total


def normal_price(spot: float, strike: float, vol: float, maturity: float, side: str = "call") -> float:
    s = vol * math.sqrt(maturity)
    if s <= 0:
        return max(spot - strike, 0.0) if side == "call" else max(strike - spot, 0.0)
    d = (spot - strike) / s
    call = (spot - strike) * ndtr(d) + s * math.exp(-0.5 * d * d) / _SQRT_2PI
    return call if side == "call" else call - (spot - strike)


def lognormal_price(spot: float, strike: float, vol: float, maturity: float, side: str = "call") -> float:
    s = vol * math.sqrt(maturity)
    if s <= 0:
        return max(spot - strike, 0.0) if side == "call" else max(strike - spot, 0.0)
    d1 = math.log(spot / strike) / s + 0.5 * s
    call = spot * ndtr(d1) - strike * ndtr(d1 - s)
    return call if side == "call" else call - (spot - strike)


def implied_vol(price: float, spec: OptionSpec, convention: str = NORMAL) -> float:
    """Invert the normal or lognormal formula for ``price``.

    Brent's method on a bracket grown until it contains the root; the
    returned vol reprices to within 1e-10 * spot.
    """
    if convention == NORMAL:
        formula = normal_price
        upper_bound = math.inf
    elif convention == LOGNORMAL:
        formula = lognormal_price
        upper_bound = spec.spot if spec.side == "call" else spec.strike
    else:
        raise ConfigurationError(f"unknown vol convention {convention!r}")
    lower_bound = spec.intrinsic()
    tol = 1e-10 * spec.spot
    if not (lower_bound < price < upper_bound) or not math.isfinite(price):
        raise ArbitrageBoundError(f"price {price!r} outside ({lower_bound}, {upper_bound}) "
                                  f"for {spec.side} K={spec.strike}")

    def gap(v):
        return formula(spec.spot, spec.strike, v, spec.maturity, spec.side) - price

    hi = 0.1 * spec.spot if convention == NORMAL else 0.5
    while gap(hi) < 0:
        hi *= 2.0
        if hi > 1e6 * spec.spot:
            raise PricingError("implied vol bracket did not close")
    vol = brentq(gap, 0.0, hi, xtol=1e-18, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(gap(vol)) > tol:
        raise PricingError(f"implied vol residual {gap(vol):.3g} above tolerance")
    return vol


def implied_vol_or_nan(price: float, spec: OptionSpec, convention: str = NORMAL) -> float:
    """Implied vol, or NaN when ``price`` is within ``BOUND_MARGIN * spot`` of
    intrinsic (no time value to invert, e.g. beyond a lattice kernel's support)."""
    if price - spec.intrinsic() <= BOUND_MARGIN * spec.spot:
        return math.nan
    return implied_vol(price, spec, convention)


@dataclass(frozen=True)
class SmileSurface:
    """Implied vols on a (maturity x strike-offset) grid; ``strikes[i, j]`` is
    ``spot + offsets[j] * sigma * sqrt(maturities[i])``.  Strikes whose
    out-of-the-money price sits at the arbitrage bound (beyond the support of
    a lattice kernel) have no implied vol and hold NaN."""

    maturities: np.ndarray
    offsets: np.ndarray
    strikes: np.ndarray
    vols: np.ndarray
    convention: str
    params: ModelParams
    spot: float

    def to_csv(self, path_or_file) -> None:
        p = self.params
        lines = [f"# qkernel {__version__} smile sigma={p.sigma!r} epsilon={p.epsilon!r} "
                 f"spot={self.spot!r} convention={self.convention}\n", "maturity,strike,vol\n"]
        for i, t in enumerate(self.maturities):
            for k, v in zip(self.strikes[i], self.vols[i]):
                lines.append(f"{t:.17g},{k:.17g},{v:.17g}\n")
        text = "".join(lines)
        if hasattr(path_or_file, "write"):
            path_or_file.write(text)
        else:
            with open(path_or_file, "w", newline="") as fh:
                fh.write(text)


def _smile_row(params: ModelParams, maturity: float, offsets: np.ndarray, spot: float,
               convention: str) -> tuple:
    run = params.with_horizon(maturity)
    kernel = compute_kernel(run)
    sd = run.stdev
    strikes = spot + offsets * sd
    vols = np.empty(len(offsets))
    for j, k in enumerate(strikes):
        # out-of-the-money side keeps the inversion well conditioned
        side = "put" if k < spot else "call"
        spec = OptionSpec(spot, float(k), maturity, side)
        try:
            vols[j] = implied_vol_or_nan(price_european(spec, run, kernel), spec, convention)
        except QKernelError as exc:
            raise type(exc)(f"{exc} (maturity={maturity}, strike={k})") from exc
    return strikes, vols


def build_smile(params: ModelParams, maturities: Sequence[float],
                strike_offsets: Sequence[float], convention: str = NORMAL,
                spot: float = 1.0, workers: Optional[int] = None) -> SmileSurface:
    """Implied-vol surface; strikes are offsets in standard deviations
    ``sigma * sqrt(T)`` from the spot."""
    mats = np.array(sorted(float(t) for t in maturities))
    offsets = np.asarray(strike_offsets, dtype=float)
    if mats.size == 0 or offsets.size == 0:
        raise ConfigurationError("smile needs at least one maturity and one strike")
    if np.any(np.abs(offsets) > 4.0):
        raise ConfigurationError("strike offsets must lie within 4 standard deviations")
    if np.any(mats <= 0):
        raise ConfigurationError("maturities must be positive")
    jobs = [(params, t, offsets, spot, convention) for t in mats]
    if workers and workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda a: _smile_row(*a), jobs))
    else:
        rows = [_smile_row(*a) for a in jobs]
    strikes = np.array([r[0] for r in rows])
    vols = np.array([r[1] for r in rows])
    return SmileSurface(mats, offsets, strikes, vols, convention, params, spot)


def skew_term_structure(surface: SmileSurface, window: float = 1.0) -> np.ndarray:
    """ATM skew per maturity: least-squares slope of vol against the strike
    offset (in standard deviations) over offsets within ``window``.

    A two-point difference is not used because few-jump kernels are lattice
    laws whose smiles are piecewise smooth between atoms.
    """
    z = surface.offsets
    sel = np.abs(z) <= window + 1e-12
    if np.count_nonzero(sel) < 3 or not (np.any(z[sel] < 0) and np.any(z[sel] > 0)):
        raise ConfigurationError("skew needs at least 3 strikes bracketing ATM inside the window")
    slopes = []
    for row in surface.vols:
        use = sel & np.isfinite(row)
        if np.count_nonzero(use) < 3 or not (np.any(z[use] < 0) and np.any(z[use] > 0)):
            raise ConfigurationError("skew needs at least 3 finite vols bracketing ATM")
        slopes.append(np.polyfit(z[use], row[use], 1)[0])
    return np.array(slopes)
