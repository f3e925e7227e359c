import math

import numpy as np
import pytest
from scipy import integrate

from adaptmc.market import BasketCall, MarketModel
from adaptmc.models import GaussianShiftModel
from adaptmc.oracles import (
    UnsupportedDimensionError,
    call_kink,
    central_difference,
    gaussian_expectation,
    golden_section,
    quadrature_theta_star,
    quadrature_v,
)

from conftest import unit_phi


def test_gaussian_moments():
    assert gaussian_expectation(lambda x: x**2) == pytest.approx(1.0, rel=1e-13)
    assert gaussian_expectation(lambda x: x**4) == pytest.approx(3.0, rel=1e-12)
    assert gaussian_expectation(lambda x: np.maximum(x, 0), breakpoints=(0.0,)) == pytest.approx(
        1 / math.sqrt(2 * math.pi), rel=1e-13
    )


def test_unit_payoff():
    assert quadrature_v(unit_phi, 1.0) == pytest.approx(2.718282, abs=5e-7)
    assert abs(quadrature_theta_star(unit_phi)) < 1e-6
    assert abs(quadrature_theta_star(lambda x: 7.0 * unit_phi(x))) < 1e-6


def test_scaled_drift_matrix():
    # A = 2 doubles the drift: v(theta) = exp(4 theta^2)
    m = GaussianShiftModel(unit_phi, [[2.0]])
    assert quadrature_v(m, 0.5) == pytest.approx(math.e, rel=1e-12)


def test_call_second_moment_matches_scipy(call_phi):
    mm = MarketModel(100.0, 0.2, 0.05)
    kink = call_kink(mm, BasketCall([1.0], 100.0))
    assert kink == pytest.approx((0.0 - 0.03) / 0.2)
    for theta in (0.0, 1.0, 2.0):
        def f(x):
            p = call_phi(np.array([[x]]))[0]
            return p * p * math.exp(-theta * x + 0.5 * theta**2 - 0.5 * x * x) / math.sqrt(2 * math.pi)

        ref, _ = integrate.quad(f, kink, 40, epsabs=0, epsrel=1e-13, limit=400)
        assert quadrature_v(call_phi, theta, breakpoints=(kink,)) == pytest.approx(ref, rel=1e-10)


def test_call_oracle_values(call_oracle, bs_price):
    theta_star, v_star, v = call_oracle
    assert theta_star == pytest.approx(1.136226, abs=2e-6)
    assert v_star - bs_price**2 == pytest.approx(22.890, abs=5e-3)
    assert v(0.0) - bs_price**2 == pytest.approx(216.6, rel=0.01)


def test_golden_section():
    assert golden_section(lambda t: (t - 1.234) ** 2, -10, 10, 1e-9) == pytest.approx(1.234, abs=1e-8)
    assert golden_section(lambda t: abs(t + 3), -10, 10) == pytest.approx(-3, abs=1e-6)


def test_central_difference():
    assert central_difference(math.exp, 0.0) == pytest.approx(1.0, abs=1e-8)


def test_rejects_multivariate():
    with pytest.raises(UnsupportedDimensionError):
        quadrature_v(GaussianShiftModel(unit_phi, None, 2), 0.0)
    with pytest.raises(UnsupportedDimensionError):
        quadrature_theta_star(GaussianShiftModel(unit_phi, np.ones((3, 1))))
    with pytest.raises(TypeError):
        quadrature_v(3.0, 0.0)
