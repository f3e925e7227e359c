"""Randomly truncated Robbins-Monro iteration and moving-window averaging.

The iterate is pushed along ``-gain * U`` and reset to its starting point
whenever the candidate leaves the current ball; every reset enlarges the ball.
All functions accept either a single parameter vector of shape ``(d,)`` or a
stack of independent iterates of shape ``(R, d)`` advanced in lockstep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

__all__ = [
    "GainSchedule",
    "CompactSchedule",
    "TruncatedSAState",
    "IterateHistory",
    "DivergedGradientError",
    "InsufficientHistoryError",
    "sa_step",
    "truncate",
    "WindowTracker",
    "window_start",
    "averaged_iterate",
]

Normalization = Literal["verbatim", "count"]


class DivergedGradientError(ValueError):
    """A gradient sample contained NaN entries."""


class InsufficientHistoryError(LookupError):
    """The averaging window reaches iterates that are no longer stored."""


@dataclass(frozen=True)
class GainSchedule:
    """Step sequence ``gamma / (n + 1) ** a``.

    ``gamma = 0`` is accepted and freezes the iterate, which turns the adaptive
    estimator into crude Monte Carlo.
    """

    gamma: float = 1.0
    a: float = 0.75

    def __post_init__(self):
        if not (self.gamma >= 0.0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma}")
        if not 0.5 < self.a <= 1.0:
            raise ValueError(f"exponent a must lie in (1/2, 1], got {self.a}")

    def gain_at(self, n: int) -> float:
        return self.gamma / (n + 1) ** self.a

    def gains(self, start: int, count: int) -> np.ndarray:
        """Vector of ``gain_at(start), ..., gain_at(start + count - 1)``."""
        idx = np.arange(start + 1, start + count + 1, dtype=np.float64)
        return self.gamma / idx**self.a


@dataclass(frozen=True)
class CompactSchedule:
    """Euclidean balls of radius ``r0 * growth ** j``."""

    r0: float = 5.0
    growth: float = 2.0

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValueError(f"r0 must be positive, got {self.r0}")
        if not self.growth > 1:
            raise ValueError(f"growth must exceed 1, got {self.growth}")

    def radius(self, j):
        # Overflows to inf for huge j, which is the right membership answer for any finite point.
        with np.errstate(over="ignore"):
            return self.r0 * np.power(self.growth, np.asarray(j, dtype=np.float64))

    def contains(self, j, theta) -> np.ndarray | bool:
        """Membership of ``theta`` (or of each row of it) in ball ``j``.

        Non-finite points are never contained.
        """
        theta = np.asarray(theta, dtype=np.float64)
        norm = np.sqrt(np.sum(theta * theta, axis=-1))
        inside = np.isfinite(norm) & (norm <= self.radius(j))
        return bool(inside) if inside.ndim == 0 else inside


@dataclass(frozen=True)
class TruncatedSAState:
    theta: np.ndarray
    alpha: np.ndarray | int
    n: int
    theta0: np.ndarray

    @classmethod
    def start(cls, theta0, replicates: int | None = None) -> "TruncatedSAState":
        theta0 = np.array(theta0, dtype=np.float64, ndmin=1)
        if replicates is None:
            return cls(theta0.copy(), 0, 0, theta0)
        theta = np.tile(theta0, (replicates, 1))
        return cls(theta, np.zeros(replicates, dtype=np.int64), 0, theta0)

    @property
    def dim(self) -> int:
        return self.theta.shape[-1]


def truncate(theta, alpha, theta0, candidate, compacts: CompactSchedule):
    """Accept ``candidate`` where it lies in ``K_alpha``, otherwise reset to ``theta0``.

    Works on rows: ``theta`` and ``candidate`` are ``(R, d)`` and ``alpha`` is ``(R,)``.
    Returns the new ``(theta, alpha, inside)``.
    """
    inside = compacts.contains(alpha, candidate)
    if np.all(inside):
        return candidate, alpha, inside
    return np.where(inside[:, None], candidate, theta0), alpha + ~inside, inside


def sa_step(
    state: TruncatedSAState,
    gains: GainSchedule,
    compacts: CompactSchedule,
    u_value,
    overflow: Literal["raise", "truncate"] = "raise",
) -> TruncatedSAState:
    """One truncated Robbins-Monro step driven by the gradient sample ``u_value``.

    Non-finite entries raise :class:`DivergedGradientError`. With
    ``overflow="truncate"`` only NaN raises: an infinite entry, which comes from
    an importance weight overflowing double precision, puts the candidate
    outside every ball and so triggers an ordinary truncation.
    """
    u = np.asarray(u_value, dtype=np.float64)
    if u.shape != state.theta.shape:
        raise ValueError(f"gradient shape {u.shape} does not match iterate {state.theta.shape}")
    bad = np.isnan(u) if overflow == "truncate" else ~np.isfinite(u)
    if bad.any():
        raise DivergedGradientError(f"non-finite gradient sample at step {state.n + 1}")
    step = gains.gain_at(state.n + 1)
    if step == 0.0:
        return replace(state, n=state.n + 1)
    with np.errstate(invalid="ignore", over="ignore"):
        candidate = state.theta - step * u
    single = candidate.ndim == 1
    theta, alpha, _ = truncate(
        np.atleast_2d(state.theta),
        np.atleast_1d(state.alpha),
        state.theta0,
        np.atleast_2d(candidate),
        compacts,
    )
    if single:
        return replace(state, theta=theta[0].copy(), alpha=int(alpha[0]), n=state.n + 1)
    return replace(state, theta=theta, alpha=alpha, n=state.n + 1)


def window_start(gains: GainSchedule, tau: float, n: int) -> int:
    """First index ``p`` of the averaging window at time ``n``.

    ``p = sup{k >= 1 : k + tau / gain_at(k) <= n}``, capped at ``n`` and equal to
    ``n`` when no ``k`` qualifies.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")

    def fits(k: int) -> bool:
        g = gains.gain_at(k)
        if tau == 0.0:
            return k <= n
        return g > 0.0 and k + tau / g <= n

    if not fits(1):
        return n
    lo, hi = 1, n
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if fits(mid):
            lo = mid
        else:
            hi = mid - 1
    return lo


def window_end(gains: GainSchedule, tau: float, p: int, n: int) -> int:
    g = gains.gain_at(p)
    if g == 0.0:
        return n
    return min(p + math.floor(tau / g), n)


class WindowTracker:
    """Incremental :func:`window_start` for ``n = 1, 2, ...`` in order.

    The defining inequality is monotone in ``k``, so the start index only moves
    forward and each call costs amortised O(1).
    """

    def __init__(self, gains: GainSchedule, tau: float):
        if tau < 0:
            raise ValueError(f"tau must be >= 0, got {tau}")
        self.gains = gains
        self.tau = tau
        self._fit = 0  # largest k satisfying the inequality so far, 0 if none
        self._next_bound = self._bound(1)

    def _bound(self, k: int) -> float:
        g = self.gains.gain_at(k)
        if self.tau == 0.0:
            return float(k)
        return k + self.tau / g if g > 0.0 else math.inf

    def start(self, n: int) -> int:
        while self._next_bound <= n:
            self._fit += 1
            self._next_bound = self._bound(self._fit + 1)
        return self._fit if self._fit >= 1 else n

    def window(self, n: int) -> tuple[int, int]:
        p = self.start(n)
        return p, window_end(self.gains, self.tau, p, n)

    @property
    def retain_from(self) -> int:
        """Oldest index a later window can still reach.

        Until some ``k`` qualifies the start is ``n`` itself, but the first
        qualifying ``k`` is 1, so nothing may be dropped before that.
        """
        return self._fit if self._fit >= 1 else 0


class IterateHistory:
    """Trailing iterates kept as running prefix sums.

    ``append`` takes the iterates in order, starting with ``theta_0``. Sums over
    any window ``[lo, hi]`` with ``lo >= first_index`` cost two lookups;
    :meth:`forget_before` drops the prefix sums that no window will need again.
    """

    def __init__(self, theta0=None):
        self._buf: np.ndarray | None = None
        self._len = 0  # number of prefix sums stored, including the leading zero
        self._offset = 0
        if theta0 is not None:
            self.append(theta0)

    @property
    def last_index(self) -> int:
        return self._offset + self._len - 2

    @property
    def first_index(self) -> int:
        return self._offset

    def __len__(self) -> int:
        return max(self._len - 1, 0)

    def append(self, theta) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if self._buf is None:
            self._buf = np.zeros((64,) + theta.shape)
            self._len = 1
        elif self._len == self._buf.shape[0]:
            grown = np.empty((2 * self._len,) + self._buf.shape[1:])
            grown[: self._len] = self._buf
            self._buf = grown
        np.add(self._buf[self._len - 1], theta, out=self._buf[self._len])
        self._len += 1

    def window_sum(self, lo: int, hi: int) -> np.ndarray:
        if lo < self._offset or hi > self.last_index or lo > hi:
            raise InsufficientHistoryError(
                f"window [{lo}, {hi}] not inside stored range [{self._offset}, {self.last_index}]"
            )
        return self._buf[hi + 1 - self._offset] - self._buf[lo - self._offset]

    def forget_before(self, index: int) -> None:
        drop = index - self._offset
        # Amortised: compact only once the dead prefix outweighs the live part.
        if drop > 0 and drop >= self._len // 2:
            keep = self._len - drop
            self._buf[:keep] = self._buf[drop : self._len]
            self._len = keep
            self._offset = index


def averaged_iterate(
    history: IterateHistory,
    gains: GainSchedule,
    tau: float,
    n: int,
    normalize: Normalization = "verbatim",
) -> np.ndarray:
    """Moving-window average of the iterates at time ``n``.

    ``"verbatim"`` weights every window term by ``gain_at(p) / tau``;
    ``"count"`` takes the arithmetic mean over the same window.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    p = window_start(gains, tau, n)
    hi = window_end(gains, tau, p, n)
    total = history.window_sum(p, hi)
    if normalize == "verbatim":
        return (gains.gain_at(p) / tau) * total
    if normalize == "count":
        return total / (hi - p + 1)
    raise ValueError(f"unknown normalization {normalize!r}")
