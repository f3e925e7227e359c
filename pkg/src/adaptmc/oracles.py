"""Deterministic reference values for one-dimensional problems.

``v(theta) = E[phi(G)^2 exp(-a theta G + (a theta)^2 / 2)]`` is the second moment
of the importance-sampling estimator for a scalar drift ``a theta``. It is
computed by Gauss-Hermite quadrature, or by piecewise Gauss-Legendre when the
payoff has kinks (a call payoff does), since a kink limits Gauss-Hermite to a
few significant digits. Its minimiser is found by golden-section search,
which is valid because ``v`` is strictly convex.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import roots_legendre

from .market import BasketCall, DownOutBasketCall, MarketModel, payoff_function
from .models import GaussianShiftModel

__all__ = [
    "UnsupportedDimensionError",
    "quadrature_v",
    "quadrature_theta_star",
    "golden_section",
    "central_difference",
    "gaussian_expectation",
    "call_kink",
    "scalar_problem",
    "call_problem",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_HALF_WIDTH = 40.0


class UnsupportedDimensionError(ValueError):
    """The oracle only handles a scalar Gaussian input and a scalar parameter."""


@lru_cache(maxsize=8)
def _hermite(nodes: int):
    x, w = hermegauss(nodes)
    return x, w * _INV_SQRT_2PI


@lru_cache(maxsize=8)
def _legendre(nodes: int):
    return roots_legendre(nodes)


def gaussian_expectation(
    f: Callable[[np.ndarray], np.ndarray],
    nodes: int = 200,
    breakpoints: Sequence[float] = (),
    center: float = 0.0,
) -> float:
    """``E[f(G)]`` for a standard normal ``G``.

    Without breakpoints this is ``nodes``-point Gauss-Hermite. With breakpoints,
    ``f * density`` is integrated piece by piece with ``nodes``-point
    Gauss-Legendre on ``[center - 40, center + 40]`` split at the breakpoints.
    """
    if not breakpoints:
        x, w = _hermite(nodes)
        return float(np.dot(w, f(x)))
    lo, hi = center - _HALF_WIDTH, center + _HALF_WIDTH
    cuts = [lo] + sorted(b for b in breakpoints if lo < b < hi) + [hi]
    t, w = _legendre(nodes)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        half = 0.5 * (b - a)
        x = a + half * (t + 1.0)
        total += half * float(np.dot(w, f(x) * np.exp(-0.5 * x * x)))
    return total * _INV_SQRT_2PI


def scalar_problem(model_or_phi) -> tuple[Callable[[np.ndarray], np.ndarray], float]:
    """``(phi, a)`` for a one-dimensional shift model or a bare payoff."""
    if isinstance(model_or_phi, GaussianShiftModel):
        m = model_or_phi
        if m.noise_dim != 1 or m.param_dim != 1:
            raise UnsupportedDimensionError(
                f"quadrature needs a 1-D model, got noise {m.noise_dim} and parameter {m.param_dim}"
            )
        a = 1.0 if m.A is None else float(m.A[0, 0])
        return m.phi, a
    if callable(model_or_phi):
        return model_or_phi, 1.0
    raise TypeError("expected a GaussianShiftModel or a payoff callable")


def quadrature_v(model_or_phi, theta: float, nodes: int = 200, breakpoints: Sequence[float] = ()) -> float:
    """Second moment ``v(theta)`` of ``H(theta, G)`` for a scalar Gaussian input."""
    phi, a = scalar_problem(model_or_phi)
    s = a * float(theta)

    def integrand(x):
        p = np.asarray(phi(x.reshape(-1, 1)), dtype=np.float64).reshape(-1)
        with np.errstate(over="ignore", invalid="ignore"):
            out = p * p * np.exp(-s * x + 0.5 * s * s)
        return np.where(p == 0.0, 0.0, out)

    # the tilted integrand peaks near -s plus the payoff's own growth
    return gaussian_expectation(integrand, nodes, breakpoints, center=-s)


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-6) -> float:
    """Minimiser of a unimodal ``f`` on ``[lo, hi]`` to an interval width ``tol``."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def quadrature_theta_star(
    model_or_phi,
    lo: float = -10.0,
    hi: float = 10.0,
    tol: float = 1e-6,
    nodes: int = 200,
    breakpoints: Sequence[float] = (),
) -> float:
    """Variance-optimal drift ``argmin v`` for a scalar Gaussian input."""
    return golden_section(lambda t: quadrature_v(model_or_phi, t, nodes, breakpoints), lo, hi, tol)


def central_difference(f: Callable[[float], float], x: float, h: float = 1e-4) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


def call_kink(mm: MarketModel, payoff: BasketCall) -> float:
    """Gaussian input at which a one-asset, one-step call starts paying."""
    if mm.noise_dim != 1 or isinstance(payoff, DownOutBasketCall):
        raise UnsupportedDimensionError("kink location is only defined for a one-step vanilla call")
    w = float(payoff.weights[0])
    if w <= 0:
        raise ValueError("kink needs a positive weight")
    sigma = float(mm.vols[0])
    t = mm.maturity
    return (math.log(payoff.strike / (w * mm.spots[0])) - (mm.rate - 0.5 * sigma * sigma) * t) / (
        sigma * math.sqrt(t)
    )


def call_problem(mm: MarketModel, payoff: BasketCall):
    """``(phi, breakpoints)`` ready for :func:`quadrature_v`."""
    return payoff_function(mm, payoff), (call_kink(mm, payoff),)
