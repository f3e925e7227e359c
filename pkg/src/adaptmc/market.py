"""Correlated Black-Scholes assets on a time grid, driven by a standard normal vector.

A path is a deterministic function of ``g`` in R^{N*D}: block ``k`` of ``g``
(entries ``k*D .. k*D + D - 1``) carries the Brownian increment of step ``k``,
correlated through the Cholesky factor of the constant-correlation matrix.
Steps use the exact lognormal transition, so there is no discretisation bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

__all__ = [
    "MarketModel",
    "BasketCall",
    "DownOutBasketCall",
    "cholesky_factor",
    "monthly_grid",
    "simulate_path",
    "payoff_value",
    "payoff_function",
    "bs_call_price",
]


def correlation_bounds(dim: int) -> tuple[float, float]:
    return (-1.0 / (dim - 1) if dim > 1 else -math.inf), 1.0


def cholesky_factor(dim: int, rho: float) -> np.ndarray:
    """Lower factor of the matrix with ones on the diagonal and ``rho`` elsewhere."""
    lo, hi = correlation_bounds(dim)
    if not lo < rho < hi:
        raise np.linalg.LinAlgError(
            f"rho={rho} outside ({lo:.6g}, {hi:g}): correlation matrix is not positive definite"
        )
    gamma = np.full((dim, dim), float(rho))
    np.fill_diagonal(gamma, 1.0)
    return np.linalg.cholesky(gamma)


def monthly_grid(maturity: float, steps_per_year: int = 12) -> np.ndarray:
    steps = round(maturity * steps_per_year)
    if steps < 1 or not math.isclose(steps, maturity * steps_per_year, rel_tol=1e-9):
        raise ValueError(
            f"maturity {maturity} is not a whole number of steps at {steps_per_year} per year"
        )
    return maturity * np.arange(1, steps + 1) / steps


@dataclass(frozen=True, eq=False)
class MarketModel:
    spots: np.ndarray
    vols: np.ndarray
    rate: float
    rho: float
    grid: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __init__(self, spots, vols, rate: float, rho: float = 0.0, grid=(1.0,)):
        spots = np.atleast_1d(np.asarray(spots, dtype=np.float64))
        vols = np.broadcast_to(np.asarray(vols, dtype=np.float64), spots.shape).copy()
        grid = np.atleast_1d(np.asarray(grid, dtype=np.float64))
        if np.any(spots <= 0):
            raise ValueError("spots must be positive")
        if np.any(vols < 0):
            raise ValueError("volatilities must be non-negative")
        if grid[0] <= 0 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing and start after 0")
        for name, value in [("spots", spots), ("vols", vols), ("grid", grid)]:
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "rate", float(rate))
        object.__setattr__(self, "rho", float(rho))
        chol = cholesky_factor(spots.size, rho)
        chol.setflags(write=False)
        object.__setattr__(self, "chol", chol)

        dt = np.diff(grid, prepend=0.0)
        object.__setattr__(self, "_log_drift", np.outer(dt, self.rate - 0.5 * vols**2))
        object.__setattr__(self, "_diffusion", np.outer(np.sqrt(dt), vols))
        object.__setattr__(self, "_log_spots", np.log(spots))
        object.__setattr__(self, "_offset", np.log(spots) + np.cumsum(self._log_drift, axis=0))
        object.__setattr__(self, "_independent", self.rho == 0.0)

    @property
    def assets(self) -> int:
        return self.spots.size

    @property
    def steps(self) -> int:
        return self.grid.size

    @property
    def noise_dim(self) -> int:
        return self.assets * self.steps

    @property
    def maturity(self) -> float:
        return float(self.grid[-1])

    @property
    def discount(self) -> float:
        return math.exp(-self.rate * self.maturity)


def simulate_path(mm: MarketModel, g) -> np.ndarray:
    """Asset values at ``t_1..t_N``: shape ``(N, D)``, or ``(R, N, D)`` for rows of ``g``."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape[-1] != mm.noise_dim:
        raise ValueError(f"noise has length {g.shape[-1]}, model needs {mm.noise_dim}")
    paths = _paths(mm, g.reshape(-1, mm.steps, mm.assets))
    return paths[0] if g.ndim == 1 else paths


def _paths(mm: MarketModel, z: np.ndarray) -> np.ndarray:
    if not mm._independent:
        z = z @ mm.chol.T
    shocks = mm._diffusion * z
    if mm.steps > 1:
        shocks = np.cumsum(shocks, axis=1)
    return np.exp(mm._offset + shocks)


@dataclass(frozen=True, eq=False)
class BasketCall:
    """``(sum_i w_i S^i_T - K)_+``; weights may carry either sign."""

    weights: np.ndarray
    strike: float
    discount: bool = True

    def __post_init__(self):
        object.__setattr__(self, "weights", np.atleast_1d(np.asarray(self.weights, dtype=np.float64)))
        if not self.strike > 0:
            raise ValueError("strike must be positive")

    def on_paths(self, paths: np.ndarray) -> np.ndarray:
        if self.weights.size == 1:
            basket = paths[:, -1, 0] * self.weights[0]
        else:
            basket = paths[:, -1, :] @ self.weights
        return np.maximum(basket - self.strike, 0.0)


@dataclass(frozen=True, eq=False)
class DownOutBasketCall(BasketCall):
    """Basket call knocked out if any asset is below its barrier at any grid date."""

    barriers: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        if self.barriers is None:
            raise ValueError("a down-and-out payoff needs barriers")
        object.__setattr__(self, "barriers", np.atleast_1d(np.asarray(self.barriers, dtype=np.float64)))

    def on_paths(self, paths: np.ndarray) -> np.ndarray:
        alive = np.all(paths >= self.barriers, axis=(1, 2))
        return np.where(alive, super().on_paths(paths), 0.0)


def _check_payoff(mm: MarketModel, payoff: BasketCall) -> None:
    if payoff.weights.size != mm.assets:
        raise ValueError(f"{payoff.weights.size} weights for {mm.assets} assets")
    if isinstance(payoff, DownOutBasketCall):
        if payoff.barriers.size != mm.assets:
            raise ValueError(f"{payoff.barriers.size} barriers for {mm.assets} assets")
        if np.any(payoff.barriers >= mm.spots):
            raise ValueError("every barrier must sit below its spot")


def payoff_function(mm: MarketModel, payoff: BasketCall) -> Callable[[np.ndarray], np.ndarray]:
    """The functional ``phi`` on rows of standard normal noise."""
    _check_payoff(mm, payoff)
    scale = mm.discount if payoff.discount else 1.0

    shape = (-1, mm.steps, mm.assets)

    def phi(x: np.ndarray) -> np.ndarray:
        return scale * payoff.on_paths(_paths(mm, x.reshape(shape)))

    return phi


def payoff_value(mm: MarketModel, payoff: BasketCall, g) -> float | np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    values = payoff_function(mm, payoff)(g)
    return float(values[0]) if g.ndim == 1 else values


def bs_call_price(s: float, strike: float, rate: float, sigma: float, maturity: float) -> float:
    """Black-Scholes value of a European call."""
    if min(s, strike, sigma, maturity) <= 0:
        raise ValueError("s, strike, sigma and maturity must be positive")
    vol = sigma * math.sqrt(maturity)
    d1 = (math.log(s / strike) + (rate + 0.5 * sigma * sigma) * maturity) / vol
    return s * float(ndtr(d1)) - strike * math.exp(-rate * maturity) * float(ndtr(d1 - vol))


def basket_of(weights: Sequence[float] | float, assets: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(weights, dtype=np.float64), (assets,)).copy()
