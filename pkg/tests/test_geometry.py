import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from qkernel.errors import ConfigurationError, DegenerateBlurError, DomainError, MetricError
from qkernel.geometry import (MetricProfile, connection_terms, coordinate_transform, dirac_blur,
                              fit_metric_weights, kramers_moyal_coefficients, laplacian_coefficients,
                              lemma1_moments, lemma2_moments, recurrence_residuals, tabulated_blur,
                              translation_coefficients, triangular_blur, uniform_blur)


@pytest.mark.parametrize("eps", [0.01, -0.01, 0.3])
def test_triangular_moments_match_direct_integration(eps):
    blur = triangular_blur(eps)
    lo, hi = sorted((0.0, eps))
    for i in range(7):
        direct, _ = integrate.quad(lambda y: y ** i * 2 * (abs(eps) - abs(y)) / eps ** 2, lo, hi)
        assert blur.moments(6)[i] == pytest.approx(direct, rel=1e-12, abs=1e-300)
    assert np.allclose(blur.moments(6), lemma1_moments(eps, 6).values, rtol=1e-12)


def test_blur_validation():
    with pytest.raises(DegenerateBlurError):
        triangular_blur(0.0)
    with pytest.raises(DomainError):
        uniform_blur(0.02, 0.0)
    with pytest.raises(DomainError):
        tabulated_blur([0.0, 1.0], [-1.0, 3.0])
    with pytest.raises(DegenerateBlurError):
        dirac_blur(0.0)(0.0)
    assert dirac_blur(0.5).support == (0.5, 0.5)


def test_lemma2_recurrence():
    seq = lemma2_moments(0.01, 2.0, 12)
    assert seq[0] == 1.0
    # k = 2: H_1 = (4 H_0 - 4) / (2 alpha) = 0
    assert seq[1] == 0.0
    # k = 3: H_2 = (12 H_1 - 4 eps) / (3 alpha)
    assert seq[2] == pytest.approx(-4 * 0.01 / 6)
    h = seq.values
    terms = np.array([abs(2 * k * (k - 1) * h[k - 2]) + 4 * 0.01 ** (k - 2) for k in range(2, 14)])
    assert np.max(recurrence_residuals(seq) / terms) < 1e-14
    with pytest.raises(ConfigurationError):
        lemma2_moments(0.01, 0.0, 4)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.05, 0.05).filter(lambda e: abs(e) > 1e-4), st.floats(0.1, 5.0))
def test_lemma2_residuals_small(eps, alpha):
    seq = lemma2_moments(eps, alpha, 8)
    h = seq.values
    scale = max(1.0, float(np.max(np.abs(h))) * 200)
    assert np.max(recurrence_residuals(seq)) <= 1e-12 * scale


def test_moment_sequence_csv():
    buf = io.StringIO()
    lemma1_moments(0.01, 3).to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[1] == "order,value"
    assert lines[2] == "0,1"
    assert float(lines[3].split(",")[1]) == pytest.approx(0.01 / 3)


def test_flat_kramers_moyal_matches_translation():
    blur = triangular_blur(0.01)
    km = kramers_moyal_coefficients(blur, MetricProfile.flat(), 0.2, 8)
    ref = translation_coefficients(0.2, 0.01, 8)
    assert km.first_order[0] == 0.0
    for k in range(2, 9):
        assert km.multipliers[k][0] == pytest.approx(ref[k], rel=1e-10)


def test_exponential_metric_coefficients():
    alpha, sigma = 2.0, 0.2
    x = np.array([0.0, 0.5])
    km = kramers_moyal_coefficients(triangular_blur(0.01), MetricProfile.exponential(alpha), sigma, 4, x)
    # first order: sigma^2/4 * d(e^{alpha x})/dx
    assert np.allclose(km.first_order, 0.25 * sigma ** 2 * alpha * np.exp(alpha * x))
    assert np.allclose(km.drift, -km.first_order)
    assert km.multipliers[2][0] == pytest.approx(0.5 * sigma ** 2 * (1 - alpha * 0.01 / 6))


def test_dirac_blur_kramers_moyal_is_diffusion():
    km = kramers_moyal_coefficients(dirac_blur(0.0), MetricProfile.flat(), 0.2, 6)
    assert km.multipliers[2][0] == pytest.approx(0.02)
    assert all(km.multipliers[k][0] == 0 for k in range(3, 7))


def test_connection_collapses_laplacian():
    x = np.linspace(-0.5, 0.5, 101)
    for metric in (MetricProfile.exponential(2.0), MetricProfile.tabulated(x, np.exp(-2.0 * x))):
        A, Q = connection_terms(metric, x)
        second, first, zeroth = laplacian_coefficients(metric, x, A, Q)
        inner = slice(5, -5)
        assert np.allclose(second, np.exp(2 * x))
        assert np.max(np.abs(first[inner])) < 1e-3
        assert np.max(np.abs(zeroth[inner])) < 1e-3
    A, Q = connection_terms(MetricProfile.exponential(2.0), x)
    assert np.allclose(A, -1.0) and np.allclose(Q, -np.exp(2 * x))


def test_coordinate_transform():
    assert coordinate_transform(MetricProfile.flat(), 0.7) == pytest.approx(0.7)
    assert coordinate_transform(MetricProfile.exponential(2.0), 1.0) == pytest.approx(math.e - 1)
    x = np.linspace(-1, 2, 3001)
    tab = MetricProfile.tabulated(x, np.exp(-2.0 * x))
    assert coordinate_transform(tab, 1.0) == pytest.approx(math.e - 1, rel=1e-6)
    with pytest.raises(MetricError):
        coordinate_transform(tab, 3.0)


def test_metric_validation():
    with pytest.raises(MetricError):
        MetricProfile.tabulated([0, 1, 2], [1.0, 0.0, 1.0])
    with pytest.raises(MetricError):
        MetricProfile()
    with pytest.raises(MetricError):
        MetricProfile.tabulated([0, 1, 2], [1.0, 1.0, 1.0]).metric(5.0)


@pytest.mark.parametrize("eps", [0.01, -0.01])
def test_triangular_fit_recovers_flat_metric(eps):
    fit = fit_metric_weights(triangular_blur(eps, points=257), eps)
    assert fit.feasible
    assert np.max(np.abs(fit.weights - 1)) < 1e-8
    assert fit.metric().metric(0.5 * eps) == pytest.approx(1.0, abs=1e-7)


def _moments_of_weighted(blur, w, order):
    # independent check: fine trapezoid on the piecewise-linear product
    y = np.linspace(blur.y[0], blur.y[-1], 200001)
    f = np.interp(y, blur.y, blur.h) * np.interp(y, blur.y, w)
    return np.array([np.trapezoid(f * y ** i, y) for i in range(order + 1)])


def test_uniform_fit_feasible_and_matches_targets():
    blur = uniform_blur(0.0, 0.02, points=257)
    fit = fit_metric_weights(blur, 0.01)
    assert fit.feasible
    assert np.all(fit.weights >= 0)
    got = _moments_of_weighted(blur, fit.weights, 8)
    want = lemma1_moments(0.01, 8).values
    assert np.allclose(got / 0.01 ** np.arange(9), want / 0.01 ** np.arange(9), rtol=1e-6, atol=1e-7)
    # the weight concentrates mass near y = 0 where the triangle peaks
    assert fit.weights[0] == pytest.approx(3.99, abs=0.02)
    assert fit.weights[-1] < 0.01


def test_wide_uniform_fit_is_infeasible():
    fit = fit_metric_weights(uniform_blur(-0.01, 0.03, points=257), 0.01)
    assert not fit.feasible and fit.weights is None
    with pytest.raises(MetricError):
        fit.metric()
    with pytest.raises(MetricError):
        fit.to_csv(io.StringIO())


def test_dirac_fit_is_infeasible():
    fit = fit_metric_weights(dirac_blur(0.0), 0.01)
    assert not fit.feasible
    # H_1 target eps/3 cannot be met by a point mass at 0
    assert fit.max_residual > 1e-3


def test_fit_validation():
    with pytest.raises(ConfigurationError):
        fit_metric_weights(triangular_blur(0.01), 0.01, order=13)
    with pytest.raises(DegenerateBlurError):
        fit_metric_weights(triangular_blur(0.01), 0.0)


def test_fit_csv():
    fit = fit_metric_weights(triangular_blur(0.01, points=33), 0.01)
    buf = io.StringIO()
    fit.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[1] == "y,w" and len(lines) == 2 + 33
    y, w = map(float, lines[2].split(","))
    assert y == 0.0 and w == pytest.approx(1.0, abs=1e-8)
