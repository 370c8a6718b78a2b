"""Self-checks run by ``qkernel validate``.

Each check returns ``(passed, detail)``.  Sizes are chosen so the whole
suite finishes in well under a minute.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .geometry import (dirac_blur, fit_metric_weights, lemma1_moments, lemma2_moments,
                       recurrence_residuals, triangular_blur)
from .kernel import (analytic_cumulants, auto_grid, compose, compute_kernel, empirical_cumulants,
                     gaussian_density, point_mass, spectral_propagate, SpatialGrid)
from .model import (ModelParams, TruncationSpec, characteristic_exponent, hamiltonian_symbol,
                    lagrangian, momentum_gradient, stationary_momentum, wick_rotated_exponent)
from .pricing import OptionSpec, build_smile, price_european
from .simulate import ensemble_stats, sample_oracle

DAY = 1.0 / 252.0
SIGMA = 0.2


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def semigroup_gap(params: ModelParams) -> float:
    """sup |compose(K_{t/2}, K_{t/2}) - K_t| on K_t's grid."""
    full = compute_kernel(params)
    half_params = params.with_horizon(params.horizon / 2)
    grid = full.grid
    if full.lattice:
        grid = grid.with_offset(half_params.compensator % grid.spacing)
    half = compute_kernel(half_params, grid)
    both = compose(half, half)
    if not math.isclose(both.grid.offset, full.grid.offset, rel_tol=0, abs_tol=1e-9 * grid.spacing):
        return math.inf
    return float(np.max(np.abs(both.values - full.values)))


def truncation_errors(params: ModelParams, orders=(2, 4, 6, 8, 10, 12), grid=None) -> list:
    """Sup-norm distance between K-truncated and closed-symbol propagation of
    a point mass at 0, on one fixed grid (default: the kernel's lattice
    spacing with zero offset)."""
    if grid is None:
        g = auto_grid(params)
        grid = SpatialGrid(g.spacing, g.n, 0.0)
    init = point_mass(grid, 0.0, params)
    ref = spectral_propagate(init, params, TruncationSpec.closed(), params.horizon)
    out = []
    for k in orders:
        run = spectral_propagate(init, params, TruncationSpec.series(k), params.horizon,
                                 filter_unstable=True)
        out.append(float(np.max(np.abs(run.values - ref.values))))
    return out


def _gaussian():
    p = ModelParams(SIGMA, 0.0, DAY)
    k = compute_kernel(p)
    err = float(np.max(np.abs(k.values - gaussian_density(p, k.grid))))
    return err <= 1e-6, f"sup error {err:.3g}"


def _cumulants():
    p = ModelParams(SIGMA, 0.01, DAY)
    got = empirical_cumulants(compute_kernel(p))
    want = analytic_cumulants(p)
    ds = abs(got.skewness / want.skewness - 1)
    dk = abs(got.excess_kurtosis / want.excess_kurtosis - 1)
    return ds <= 0.01 and dk <= 0.02, f"skew {got.skewness:.5f} kurt {got.excess_kurtosis:.5f}"


def _oracle():
    p = ModelParams(SIGMA, 0.01, DAY)
    n = 200_000
    st = ensemble_stats(sample_oracle(p, n, seed=2024), compute_kernel(p))
    bound = 1.63 / math.sqrt(n)
    return st.ks <= bound, f"KS {st.ks:.4g} (bound {bound:.3g})"


def _semigroup():
    gaps = {e: semigroup_gap(ModelParams(SIGMA, e, DAY)) for e in (0.0, 0.005, -0.005, 0.01, -0.01)}
    worst = max(gaps.values())
    return worst <= 1e-5, f"worst sup gap {worst:.3g}"


def _truncation_monotone():
    errs = truncation_errors(ModelParams(SIGMA, 0.01, DAY))
    ok = all(b < a for a, b in zip(errs, errs[1:]))
    return ok, "errors " + ", ".join(f"{e:.2g}" for e in errs)


def _resummation():
    p = ModelParams(SIGMA, 0.01, DAY)
    d = abs(characteristic_exponent(50.0, p) - characteristic_exponent(50.0, p, TruncationSpec.series(12)))
    q = np.linspace(-100, 100, 401)
    w = float(np.max(np.abs(wick_rotated_exponent(q, p) - characteristic_exponent(q, p))))
    return d < 1e-10 and w < 1e-10, f"series gap {d:.2g}, rotation gap {w:.2g}"


def _legendre():
    p = ModelParams(SIGMA, 0.01, 1.0)
    worst = 0.0
    for u in np.linspace(-0.5, 0.5, 41):
        xdot = u * SIGMA ** 2 / p.epsilon
        p0 = stationary_momentum(xdot, p)
        worst = max(worst, abs(lagrangian(xdot, p) - (p0 * xdot - hamiltonian_symbol(p0, p))),
                    abs(momentum_gradient(p0, xdot, p)),
                    abs(lagrangian(xdot, p) - lagrangian(xdot, p, TruncationSpec.series(60))))
    return worst <= 1e-9, f"worst {worst:.2g}"


def _moments():
    e = 0.01
    d1 = float(np.max(np.abs(triangular_blur(e).moments(8) - lemma1_moments(e, 8).values)))
    seq = lemma2_moments(e, 2.0, 10)
    scale = np.array([max(abs(2 * k * (k - 1) * seq[k - 2]), 4 * abs(e) ** (k - 2)) for k in range(2, 12)])
    d2 = float(np.max(recurrence_residuals(seq) / scale))
    return d1 <= 1e-10 and d2 <= 1e-12, f"lemma1 {d1:.2g}, lemma2 {d2:.2g}"


def _metric():
    fit = fit_metric_weights(triangular_blur(0.01), 0.01)
    dirac = fit_metric_weights(dirac_blur(0.01), 0.01)
    ok = fit.feasible and float(np.max(np.abs(fit.weights - 1))) <= 1e-8 and not dirac.feasible
    dev = np.max(np.abs(fit.weights - 1)) if fit.feasible else math.inf
    return ok, f"max |w-1| {dev:.2g}, dirac feasible={dirac.feasible}"


def _pricing():
    p = ModelParams(SIGMA, 0.01, DAY)
    worst = 0.0
    for k in (0.97, 0.99, 1.0, 1.01, 1.03):
        c = price_european(OptionSpec(1.0, k, DAY, "call"), p)
        q = price_european(OptionSpec(1.0, k, DAY, "put"), p)
        worst = max(worst, abs(c - q - (1.0 - k)))
    z = np.linspace(-2, 2, 9)
    flat = build_smile(ModelParams(SIGMA, 0.0, DAY), [DAY, 1.0], z)
    up = build_smile(ModelParams(SIGMA, 0.01, DAY), [DAY], z)
    down = build_smile(ModelParams(SIGMA, -0.01, DAY), [DAY], z)
    f = float(np.max(np.abs(flat.vols - SIGMA)))
    a, b = up.vols[0], down.vols[0][::-1]
    same = bool(np.array_equal(np.isnan(a), np.isnan(b)))
    m = float(np.nanmax(np.abs(a - b))) if same else math.inf
    return worst <= 1e-6 and f <= 1e-4 and m <= 1e-6, f"parity {worst:.2g}, flat {f:.2g}, mirror {m:.2g}"


CHECKS = [
    ("gaussian-baseline", _gaussian),
    ("cumulant-law", _cumulants),
    ("oracle-ks", _oracle),
    ("semigroup", _semigroup),
    ("truncation-monotone", _truncation_monotone),
    ("resummation", _resummation),
    ("legendre", _legendre),
    ("moments", _moments),
    ("metric-round-trip", _metric),
    ("pricing-coherence", _pricing),
]


def run_all(names=None) -> list:
    results = []
    for name, fn in CHECKS:
        if names and name not in names:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, not a crashed suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return results
