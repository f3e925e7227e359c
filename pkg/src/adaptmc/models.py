"""Parametric representations ``E[Z] = E[H(theta, X)]`` and their variance gradients.

Every representation is driven by standard normal noise ``X`` and exposes

* ``h(theta, x)``   the reweighted payoff, unbiased for every ``theta``;
* ``u1(theta, x)``  a gradient sample of ``v(theta) = E[H(theta, X)^2]`` that
  evaluates the payoff on the raw noise;
* ``u2(theta, x)``  a gradient sample that evaluates the payoff at the
  shifted (tilted) point, the same point ``h`` uses;
* ``h_u2(theta, x)`` both of the latter from a single payoff evaluation.

Methods accept one pair ``theta (d,), x (m,)`` or stacks of rows
``theta (R, d), x (R, m)`` where row ``r`` is an independent pair.
"""

from __future__ import annotations

import math
import threading
from abc import ABC, abstractmethod
from typing import Callable

import numpy as np
from scipy.special import log_ndtr

__all__ = [
    "PayoffError",
    "ParametricRepresentation",
    "GaussianShiftModel",
    "EsscherModel",
    "build_identity_A",
    "build_cameron_martin_A",
    "build_block_drift_A",
    "gaussian_esscher",
    "exponential_esscher",
    "quiet",
]


class PayoffError(ArithmeticError):
    """The payoff functional returned NaN; ``row`` is the first offending input row."""

    def __init__(self, message: str, row: int = 0):
        super().__init__(message)
        self.row = row


def _nan_error(values: np.ndarray, what: str) -> PayoffError:
    return PayoffError(f"{what} returned NaN", int(np.flatnonzero(np.isnan(values))[0]))


def _rows(theta, x):
    theta = np.asarray(theta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        return theta.reshape(1, -1), x.reshape(1, -1), True
    if theta.ndim == 1:
        theta = np.broadcast_to(theta, (x.shape[0], theta.size))
    return theta, x, False


def _rowdot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] == 1:
        return (a * b)[:, 0]
    return np.einsum("ij,ij->i", a, b)


# Reductions dominate the cost of one-row calls, so the checks below take a
# scalar shortcut for single elements.
def has_nan(x: np.ndarray) -> bool:
    if x.size == 1:
        v = x.item()
        return v != v
    return bool(np.isnan(x).any())


def all_finite(x: np.ndarray) -> bool:
    if x.size == 1:
        return math.isfinite(x.item())
    return bool(np.isfinite(x).all())


def _weighted(values: np.ndarray, exponent: np.ndarray) -> np.ndarray:
    """``values * exp(exponent)`` where a zero factor wins over an infinite one."""
    out = values * np.exp(exponent)
    if has_nan(out):
        out[np.isnan(out)] = 0.0
    return out


def _squared_weighted(values: np.ndarray, exponent: np.ndarray) -> np.ndarray:
    """``values**2 * exp(exponent)`` without spurious overflow; zero payoffs give zero."""
    out = values * values * np.exp(exponent)
    if all_finite(out):
        return out
    zero = values == 0
    logs = np.exp(2.0 * np.log(np.abs(values)) + exponent)
    return np.where(zero, 0.0, logs)


# Overflowing importance weights are legitimate intermediate values; the
# kernels rely on IEEE semantics and callers decide what an inf means.
def quiet() -> np.errstate:
    return np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore")


class ParametricRepresentation(ABC):
    """Family ``H(theta, X)`` with gradient estimators of its second moment."""

    noise_dim: int
    param_dim: int

    def __init__(self):
        self._evaluations = 0
        self._lock = threading.Lock()

    @property
    def evaluations(self) -> int:
        """Number of payoff evaluations performed so far (one per point)."""
        return self._evaluations

    def _count(self, k: int) -> None:
        with self._lock:
            self._evaluations += k

    def h(self, theta, x):
        theta, x, single = _rows(theta, x)
        with quiet():
            out = self._h(theta, x)
        return float(out[0]) if single else out

    def u1(self, theta, x):
        theta, x, single = _rows(theta, x)
        with quiet():
            out = self._u1(theta, x)
        return out[0] if single else out

    def u2(self, theta, x):
        theta, x, single = _rows(theta, x)
        with quiet():
            out = self._u2(theta, x)
        return out[0] if single else out

    def h_u2(self, theta, x):
        theta, x, single = _rows(theta, x)
        with quiet():
            h, u = self._h_u2(theta, x)
        return (float(h[0]), u[0]) if single else (h, u)

    @abstractmethod
    def _h(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _u1(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _u2(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray: ...

    def _h_u2(self, theta, x):
        return self._h(theta, x), self._u2(theta, x)


class GaussianShiftModel(ParametricRepresentation):
    """``H(theta, G) = phi(G + A theta) exp(-A theta . G - |A theta|^2 / 2)``.

    ``phi`` maps rows of R^m to reals and must be vectorised over rows. ``A`` is
    ``m x d`` with full column rank; ``A = None`` means the identity (``d = m``).

    The gradient samples are

    * ``u1 = A^T (A theta - G) phi(G)^2 exp(-A theta . G + |A theta|^2 / 2)``
    * ``u2 = -A^T G phi(G + A theta)^2 exp(-2 A theta . G - |A theta|^2)``

    both with mean ``grad v(theta)``.
    """

    def __init__(self, phi: Callable[[np.ndarray], np.ndarray], A=None, noise_dim: int | None = None):
        super().__init__()
        if A is None:
            if noise_dim is None:
                raise ValueError("noise_dim is required when A is the identity")
            self.A = None
            self.noise_dim = self.param_dim = int(noise_dim)
        else:
            A = np.atleast_2d(np.asarray(A, dtype=np.float64))
            if noise_dim is not None and A.shape[0] != noise_dim:
                raise ValueError(f"A has {A.shape[0]} rows, noise has dimension {noise_dim}")
            if np.linalg.matrix_rank(A) < A.shape[1]:
                raise ValueError("A must have full column rank")
            self.noise_dim, self.param_dim = A.shape
            self.A = A
        self.phi = phi

    def payoff(self, x: np.ndarray) -> np.ndarray:
        """Counted evaluation of ``phi`` on the rows of ``x``."""
        values = np.asarray(self.phi(x), dtype=np.float64).reshape(-1)
        self._count(values.size)
        if has_nan(values):
            raise _nan_error(values, "payoff")
        return values

    def drift(self, theta: np.ndarray) -> np.ndarray:
        return theta if self.A is None else theta @ self.A.T

    def pull_back(self, y: np.ndarray) -> np.ndarray:
        """Rows of ``A^T y``."""
        return y if self.A is None else y @ self.A

    def _exponent(self, theta, g):
        shift = self.drift(theta)
        return shift, -_rowdot(shift, g + 0.5 * shift)

    def _h(self, theta, g):
        shift, e = self._exponent(theta, g)
        return _weighted(self.payoff(g + shift), e)

    def _u1(self, theta, g):
        shift = self.drift(theta)
        e = 0.5 * _rowdot(shift, shift) - _rowdot(shift, g)
        scale = _squared_weighted(self.payoff(g), e)
        return self.pull_back(shift - g) * scale[:, None]

    # phi(g + A theta)^2 exp(-2 A theta . g - |A theta|^2) is exactly H^2, so the
    # second gradient is -A^T g H^2 and shares everything with H.
    def _u2(self, theta, g):
        return self._h_u2(theta, g)[1]

    def _h_u2(self, theta, g):
        h = self._h(theta, g)
        return h, self.pull_back(-g) * (h * h)[:, None]

    def second_moment_exact_unit(self, theta) -> float:
        """``v(theta)`` when ``phi == 1``: ``exp(|A theta|^2)``."""
        shift = self.drift(np.atleast_2d(np.asarray(theta, dtype=np.float64)))
        return float(np.exp(_rowdot(shift, shift))[0])


def build_identity_A(steps: int, assets: int) -> np.ndarray:
    return np.eye(steps * assets)


def _increments(grid) -> np.ndarray:
    grid = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    if grid.size == 0 or grid[0] <= 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing and start after 0")
    return np.diff(grid, prepend=0.0)


def build_cameron_martin_A(grid) -> np.ndarray:
    """Column ``(sqrt(t_1), sqrt(t_2 - t_1), ...)``: a constant drift on one Brownian motion."""
    return np.sqrt(_increments(grid))[:, None]


def build_block_drift_A(grid, assets: int) -> np.ndarray:
    """Stacked blocks ``sqrt(t_k - t_{k-1}) I_D``: one constant drift per asset."""
    return np.kron(np.sqrt(_increments(grid))[:, None], np.eye(assets))


class EsscherModel(ParametricRepresentation):
    """Exponential tilting of a base law sampled from standard normal noise.

    ``tilt(theta, g)`` returns the tilted variate ``X^(theta)`` built from noise
    ``g``; at ``theta = 0`` it must be a sample of the base law. ``psi`` is the
    cumulant ``log E[exp(theta . X)]`` and ``grad_psi`` its gradient.
    """

    def __init__(self, f, psi, grad_psi, tilt, dim: int, domain=None):
        super().__init__()
        self.f = f
        self.psi = psi
        self.grad_psi = grad_psi
        self.tilt = tilt
        self.noise_dim = self.param_dim = int(dim)
        self._domain = domain

    def check_domain(self, theta: np.ndarray) -> None:
        if self._domain is not None and not np.all(self._domain(theta)):
            raise ValueError(f"theta={np.asarray(theta).tolist()} is outside the cumulant domain")

    def integrand(self, x: np.ndarray) -> np.ndarray:
        values = np.asarray(self.f(x), dtype=np.float64).reshape(-1)
        self._count(values.size)
        if has_nan(values):
            raise _nan_error(values, "integrand")
        return values

    def h_tilted(self, theta, x_tilted):
        """``f(x) exp(-theta . x + psi(theta))`` for an already tilted sample ``x``."""
        theta, x, single = _rows(theta, x_tilted)
        self.check_domain(theta)
        with quiet():
            out = _weighted(self.integrand(x), -_rowdot(theta, x) + self.psi(theta))
        return float(out[0]) if single else out

    def _h(self, theta, g):
        self.check_domain(theta)
        x = self.tilt(theta, g)
        return _weighted(self.integrand(x), -_rowdot(theta, x) + self.psi(theta))

    def _u1(self, theta, g):
        self.check_domain(theta)
        x = self.tilt(np.zeros_like(theta), g)
        scale = _squared_weighted(self.integrand(x), -_rowdot(theta, x) + self.psi(theta))
        return (self.grad_psi(theta) - x) * scale[:, None]

    def _u2(self, theta, g):
        self.check_domain(theta)
        x = self.tilt(theta, g)
        scale = _squared_weighted(self.integrand(x), -2.0 * _rowdot(theta, x) + 2.0 * self.psi(theta))
        return (self.grad_psi(theta) - x) * scale[:, None]


def gaussian_esscher(f, dim: int) -> EsscherModel:
    """Standard normal base: tilting is a mean shift."""
    return EsscherModel(
        f,
        psi=lambda th: 0.5 * _rowdot(th, th),
        grad_psi=lambda th: th,
        tilt=lambda th, g: g + th,
        dim=dim,
    )


def exponential_esscher(f, rate: float = 1.0) -> EsscherModel:
    """Exponential base of the given rate; the tilted law is Exp(rate - theta)."""
    if not rate > 0:
        raise ValueError("rate must be positive")

    def tilt(th, g):
        # survival-side inversion keeps precision in the upper tail
        return -log_ndtr(-g) / (rate - th)

    return EsscherModel(
        f,
        psi=lambda th: np.log(rate / (rate - th[:, 0])),
        grad_psi=lambda th: 1.0 / (rate - th),
        tilt=tilt,
        dim=1,
        domain=lambda th: th < rate,
    )
