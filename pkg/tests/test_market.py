import math

import numpy as np
import pytest

from adaptmc.market import (
    BasketCall,
    DownOutBasketCall,
    MarketModel,
    bs_call_price,
    cholesky_factor,
    monthly_grid,
    payoff_function,
    payoff_value,
    simulate_path,
)
from adaptmc.rng import NormalStream


def test_cholesky():
    assert np.array_equal(cholesky_factor(4, 0.0), np.eye(4))
    assert np.allclose(cholesky_factor(2, 0.5), [[1, 0], [0.5, 0.866025]], atol=5e-7)
    L = cholesky_factor(40, 0.9)
    assert np.allclose(L @ L.T, np.full((40, 40), 0.9) + 0.1 * np.eye(40))


@pytest.mark.parametrize("dim,rho", [(3, -0.6), (3, -0.5), (2, 1.0), (40, -0.5)])
def test_cholesky_rejects(dim, rho):
    with pytest.raises(np.linalg.LinAlgError):
        cholesky_factor(dim, rho)


def test_path_examples():
    mm = MarketModel(100.0, 0.2, 0.05)
    assert simulate_path(mm, [1.0])[0, 0] == pytest.approx(100 * math.exp(0.23), rel=1e-14)
    assert simulate_path(mm, [1.0])[0, 0] == pytest.approx(125.860, abs=5e-4)
    flat = MarketModel(100.0, 0.0, 0.05, grid=[2.0])
    assert simulate_path(flat, [3.0])[0, 0] == pytest.approx(100 * math.exp(0.1))


def test_zero_noise_path():
    mm = MarketModel([50, 40], [0.2, 0.3], 0.05, 0.3, grid=monthly_grid(1.0))
    path = simulate_path(mm, np.zeros(24))
    t = monthly_grid(1.0)[:, None]
    assert np.allclose(path, np.array([50, 40]) * np.exp((0.05 - 0.5 * np.array([0.04, 0.09])) * t))


def test_path_matches_step_recursion():
    rng = np.random.default_rng(0)
    grid = np.array([0.2, 0.5, 1.5])
    mm = MarketModel([10.0, 20.0, 30.0], [0.1, 0.2, 0.3], 0.03, 0.4, grid)
    g = rng.normal(size=9)
    s = mm.spots.copy()
    prev = 0.0
    for k, t in enumerate(grid):
        dt = t - prev
        z = mm.chol @ g[3 * k : 3 * k + 3]
        s = s * np.exp((0.03 - 0.5 * mm.vols**2) * dt + mm.vols * math.sqrt(dt) * z)
        assert np.allclose(simulate_path(mm, g)[k], s, rtol=1e-13)
        prev = t


def test_path_rows_and_shape_check():
    mm = MarketModel([1.0, 2.0], 0.2, 0.0, 0.1, grid=[0.5, 1.0])
    g = np.random.default_rng(1).normal(size=(5, 4))
    rows = simulate_path(mm, g)
    assert rows.shape == (5, 2, 2)
    assert np.array_equal(rows[3], simulate_path(mm, g[3]))
    with pytest.raises(ValueError):
        simulate_path(mm, np.zeros(3))


def test_model_validation():
    with pytest.raises(ValueError):
        MarketModel(-1.0, 0.2, 0.0)
    with pytest.raises(ValueError):
        MarketModel(1.0, -0.2, 0.0)
    with pytest.raises(ValueError):
        MarketModel(1.0, 0.2, 0.0, grid=[1.0, 0.5])
    with pytest.raises(ValueError):
        monthly_grid(1.05)
    assert len(monthly_grid(2.0)) == 24


def test_call_payoffs():
    mm = MarketModel(100.0, 0.0, 0.05)
    assert payoff_value(mm, BasketCall([1.0], 1e9), [0.0]) == 0.0
    assert payoff_value(mm, BasketCall([1.0], 80.0), [0.7]) == pytest.approx(
        math.exp(-0.05) * (100 * math.exp(0.05) - 80)
    )
    assert payoff_value(mm, BasketCall([1.0], 80.0, discount=False), [0.0]) == pytest.approx(
        100 * math.exp(0.05) - 80
    )


def test_basket_weights_and_checks():
    mm = MarketModel([50.0, 60.0], 0.0, 0.0)
    assert payoff_value(mm, BasketCall([0.5, 0.5], 50.0), [0.0, 0.0]) == pytest.approx(5.0)
    assert payoff_value(mm, BasketCall([1.0, -1.0], 1.0), [0.0, 0.0]) == 0.0
    with pytest.raises(ValueError):
        payoff_function(mm, BasketCall([1.0], 50.0))
    with pytest.raises(ValueError):
        BasketCall([1.0], 0.0)


def test_down_and_out():
    mm = MarketModel([50, 40], 0.3, 0.05, 0.3, grid=monthly_grid(2.0))
    p = DownOutBasketCall([0.5, 0.5], 10.0, barriers=[40, 30])
    assert payoff_value(mm, p, np.full(48, -3.0)) == 0.0
    assert payoff_value(mm, p, np.full(48, 0.5)) > 0
    # one touch at a single date is enough
    g = np.zeros(48)
    g[1] = -20.0
    g[3] = 20.0
    assert payoff_value(mm, p, g) == 0.0
    with pytest.raises(ValueError):
        payoff_function(mm, DownOutBasketCall([0.5, 0.5], 10.0, barriers=[60, 30]))
    with pytest.raises(ValueError):
        DownOutBasketCall([0.5, 0.5], 10.0)


def test_black_scholes():
    assert bs_call_price(100, 100, 0.05, 0.2, 1) == pytest.approx(10.450584, abs=5e-7)
    assert bs_call_price(100, 80, 0.05, 1e-9, 1) == pytest.approx(23.9016, abs=5e-5)
    assert bs_call_price(100, 1e12, 0.05, 0.2, 1) == pytest.approx(0.0, abs=1e-300)
    with pytest.raises(ValueError):
        bs_call_price(100, 100, 0.05, 0.0, 1)


def test_discounted_assets_are_martingales():
    mm = MarketModel([50, 40, 60], [0.2, 0.3, 0.4], 0.05, 0.3, grid=monthly_grid(1.0))
    g = NormalStream(mm.noise_dim, seed=8).draw(200000)
    paths = simulate_path(mm, g)
    disc = paths[:, -1, :] * math.exp(-0.05)
    se = disc.std(axis=0) / math.sqrt(len(disc))
    assert np.all(np.abs(disc.mean(axis=0) - mm.spots) < 4 * se)


def test_log_return_correlation():
    mm = MarketModel([1.0, 1.0], [0.2, 0.2], 0.0, 0.6)
    g = NormalStream(2, seed=9).draw(100000)
    logs = np.log(simulate_path(mm, g)[:, 0, :])
    assert np.corrcoef(logs.T)[0, 1] == pytest.approx(0.6, abs=0.01)


def test_mc_matches_black_scholes(call_phi, bs_price):
    x = call_phi(NormalStream(1, seed=2).draw(400000))
    assert abs(x.mean() - bs_price) < 4 * x.std() / math.sqrt(x.size)
