import math

import numpy as np
import pytest

from adaptmc.market import BasketCall, MarketModel, bs_call_price, payoff_function
from adaptmc.models import GaussianShiftModel
from adaptmc.oracles import call_problem, quadrature_theta_star, quadrature_v

# 1-D at-the-money call used throughout
S0, STRIKE, RATE, SIGMA, T = 100.0, 100.0, 0.05, 0.2, 1.0

# acceptance outcomes, printed in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def call_market():
    return MarketModel(S0, SIGMA, RATE)


@pytest.fixture(scope="session")
def call_payoff():
    return BasketCall([1.0], STRIKE)


@pytest.fixture(scope="session")
def call_phi(call_market, call_payoff):
    return payoff_function(call_market, call_payoff)


@pytest.fixture
def call_model(call_phi):
    return GaussianShiftModel(call_phi, None, 1)


@pytest.fixture(scope="session")
def bs_price():
    return bs_call_price(S0, STRIKE, RATE, SIGMA, T)


@pytest.fixture(scope="session")
def call_oracle(call_market, call_payoff):
    """``(theta_star, v(theta_star), v)`` from quadrature."""
    phi, kinks = call_problem(call_market, call_payoff)
    theta_star = quadrature_theta_star(phi, breakpoints=kinks)

    def v(theta):
        return quadrature_v(phi, theta, breakpoints=kinks)

    return theta_star, v(theta_star), v


def unit_phi(x):
    return np.ones(np.shape(x)[0])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
