import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import poisson

from qkernel import KernelDensity, ModelParams, SpatialGrid, compute_kernel
from qkernel.errors import ArbitrageBoundError, ConfigurationError, DomainError, GridError
from qkernel.pricing import (LOGNORMAL, NORMAL, OptionSpec, build_smile, implied_vol, implied_vol_or_nan,
                             lognormal_price, normal_price, price_european, skew_term_structure)

DAY = 1.0 / 252
GAUSS = ModelParams(0.2, 0.0, DAY)
SKEWED = ModelParams(0.2, 0.01, DAY)


def _poisson_price(spec, params):
    # independent price: sum over the jump count of X = c - eps N
    n = np.arange(200)
    x = params.compensator - params.epsilon * n
    return float(np.dot(poisson.pmf(n, params.jump_intensity), spec.payoff(spec.spot + x)))


def test_option_spec_validation():
    with pytest.raises(DomainError):
        OptionSpec(1.0, 0.0, DAY)
    with pytest.raises(DomainError):
        OptionSpec(1.0, 1.0, DAY, "straddle")
    assert OptionSpec(1.0, 0.9, DAY).intrinsic() == pytest.approx(0.1)
    assert OptionSpec(1.0, 0.9, DAY, "put").intrinsic() == 0.0


def test_atm_gaussian_price():
    price = price_european(OptionSpec(1.0, 1.0, DAY), GAUSS)
    assert price == pytest.approx(0.2 * math.sqrt(DAY / (2 * math.pi)), rel=1e-12)


@pytest.mark.parametrize("strike", [0.96, 0.9931, 1.0, 1.00017, 1.0037, 1.03])
@pytest.mark.parametrize("side", ["call", "put"])
def test_smooth_price_matches_bachelier_off_node(strike, side):
    # strikes between grid nodes exercise the kink correction
    for t in (DAY, 0.25):
        p = GAUSS.with_horizon(t)
        got = price_european(OptionSpec(1.0, strike, t, side), p)
        assert got == pytest.approx(normal_price(1.0, strike, 0.2, t, side), abs=1e-14)


def _refined(kernel, r):
    # exact trigonometric interpolant of the band-limited density, r times finer
    n = kernel.grid.n
    c = np.fft.fft(kernel.values)
    padded = np.zeros(n * r, dtype=complex)
    padded[: n // 2] = c[: n // 2]
    padded[-n // 2 + 1:] = c[n // 2 + 1:]
    padded[n // 2] = padded[-n // 2] = 0.5 * c[n // 2]
    fine = np.fft.ifft(padded).real * r
    x = kernel.grid.x[0] + np.arange(n * r) * kernel.grid.spacing / r
    return x, fine


def test_smooth_skewed_price_matches_refined_quadrature():
    p = ModelParams(0.2, 0.01, 0.25)
    kernel = compute_kernel(p)
    h = kernel.grid.spacing
    # strike a quarter-cell past a node, a node of both refinements
    a = kernel.grid.x[kernel.grid.n // 2 + 3] + 0.25 * h
    est = []
    for r in (32, 64):
        x, rho = _refined(kernel, r)
        est.append(h / r * float(np.sum(np.maximum(x - a, 0.0) * rho)))
    richardson = (4 * est[1] - est[0]) / 3
    got = price_european(OptionSpec(1.0, 1.0 + a, p.horizon), p, kernel)
    assert got == pytest.approx(richardson, abs=1e-12)
    assert abs(got - est[1]) > 1e-10


@pytest.mark.parametrize("strike", [0.97, 0.99, 1.0, 1.005, 1.02])
@pytest.mark.parametrize("side", ["call", "put"])
def test_lattice_price_matches_poisson_sum(strike, side):
    spec = OptionSpec(1.0, strike, DAY, side)
    assert price_european(spec, SKEWED) == pytest.approx(_poisson_price(spec, SKEWED), abs=1e-12)


def test_deep_in_the_money_is_intrinsic():
    spec = OptionSpec(1.0, 0.8, DAY)
    assert price_european(spec, GAUSS) == pytest.approx(0.2, abs=1e-12)


def test_parity_and_shape():
    kernel = compute_kernel(SKEWED)
    strikes = np.linspace(0.96, 1.04, 41)
    calls = np.array([price_european(OptionSpec(1.0, k, DAY), SKEWED, kernel) for k in strikes])
    puts = np.array([price_european(OptionSpec(1.0, k, DAY, "put"), SKEWED, kernel) for k in strikes])
    assert np.max(np.abs(calls - puts - (1.0 - strikes))) < 1e-12
    assert np.all(np.diff(calls) <= 1e-15)
    assert np.all(np.diff(calls, 2) >= -1e-15)


def test_discount_and_horizon_checks():
    spec = OptionSpec(1.0, 1.0, DAY)
    assert price_european(spec, GAUSS, discount=0.5) == pytest.approx(0.5 * price_european(spec, GAUSS))
    with pytest.raises(ConfigurationError):
        price_european(OptionSpec(1.0, 1.0, 2 * DAY), GAUSS, compute_kernel(GAUSS))
    full = compute_kernel(GAUSS)
    mid = full.grid.n // 2
    # a kernel cut off 2 sd from the centre leaks mass past its ends
    cut = round(2 * GAUSS.stdev / full.grid.spacing)
    narrow = KernelDensity(SpatialGrid(full.grid.spacing, 2 * cut), full.values[mid - cut: mid + cut], GAUSS)
    with pytest.raises(GridError):
        price_european(OptionSpec(1.0, 1.0, DAY), GAUSS, narrow)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(-2.0, 2.0), st.sampled_from(["call", "put"]),
       st.sampled_from([NORMAL, LOGNORMAL]))
def test_implied_vol_round_trip(vol, z, side, convention):
    t = 0.5
    strike = 1.0 + z * 0.2 * math.sqrt(t)
    formula = normal_price if convention == NORMAL else lognormal_price
    price = formula(1.0, strike, vol, t, side)
    spec = OptionSpec(1.0, strike, t, side)
    if price - spec.intrinsic() < 1e-9:
        return
    got = implied_vol(price, spec, convention)
    assert abs(formula(1.0, strike, got, t, side) - price) <= 1e-10


def test_implied_vol_bounds():
    spec = OptionSpec(1.0, 0.9, DAY)
    with pytest.raises(ArbitrageBoundError):
        implied_vol(0.05, spec)
    with pytest.raises(ArbitrageBoundError):
        implied_vol(1.5, spec, LOGNORMAL)
    with pytest.raises(ConfigurationError):
        implied_vol(0.11, spec, "shifted")
    assert math.isnan(implied_vol_or_nan(0.1, spec))
    assert implied_vol(normal_price(1, 1, 0.2, 1.0), OptionSpec(1.0, 1.0, 1.0)) == pytest.approx(0.2)


def test_flat_smile_at_zero_epsilon():
    surface = build_smile(ModelParams(0.2, 0.0, 1.0), [DAY, 1.0], np.linspace(-2, 2, 9))
    assert np.max(np.abs(surface.vols - 0.2)) < 1e-12
    assert np.allclose(skew_term_structure(surface), 0.0, atol=1e-12)


@pytest.mark.parametrize("eps", [0.01, -0.01])
def test_skew_sign_follows_epsilon(eps):
    surface = build_smile(ModelParams(0.2, eps, 1.0), [DAY, 1 / 12, 1.0], np.linspace(-1, 1, 21))
    slopes = skew_term_structure(surface)
    assert np.all(np.sign(slopes) == -np.sign(eps))
    # skew dies out like t^(-1/2)
    assert abs(slopes[0] / slopes[-1]) == pytest.approx(math.sqrt(252), rel=0.15)


def test_left_skew_lifts_downside_vol():
    surface = build_smile(ModelParams(0.2, 0.01, 1.0), [1 / 52], [-2.0, 0.0, 2.0])
    low, atm, high = surface.vols[0]
    assert low > atm > high


def test_smile_mirror_symmetry():
    z = np.linspace(-2, 2, 9)
    up = build_smile(ModelParams(0.2, 0.01, 1.0), [DAY, 1.0], z)
    down = build_smile(ModelParams(0.2, -0.01, 1.0), [DAY, 1.0], z)
    assert np.array_equal(np.isnan(up.vols), np.isnan(down.vols[:, ::-1]))
    assert np.nanmax(np.abs(up.vols - down.vols[:, ::-1])) < 1e-6


def test_smile_threads_match_serial():
    z = np.linspace(-1, 1, 5)
    a = build_smile(SKEWED, [DAY, 1 / 12], z)
    b = build_smile(SKEWED, [DAY, 1 / 12], z, workers=2)
    assert np.array_equal(a.vols, b.vols, equal_nan=True)


def test_smile_validation_and_csv():
    with pytest.raises(ConfigurationError):
        build_smile(SKEWED, [], [0.0])
    with pytest.raises(ConfigurationError):
        build_smile(SKEWED, [DAY], [5.0])
    with pytest.raises(ConfigurationError):
        build_smile(SKEWED, [-1.0], [0.0])
    surface = build_smile(SKEWED, [DAY], [-1.0, 1.0])
    with pytest.raises(ConfigurationError):
        skew_term_structure(surface)
    buf = io.StringIO()
    surface.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[1] == "maturity,strike,vol" and len(lines) == 4
