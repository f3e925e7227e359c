"""Online adaptive importance-sampling estimators.

``adis_run`` couples the stochastic approximation of the optimal parameter with
the Monte Carlo mean: the ``i``-th Gaussian sample feeds both the estimator
term ``H(theta_{i-1}, X_i)`` and the gradient sample ``U(theta_{i-1}, X_i)``.
``nadis_run`` is the two-phase alternative (learn ``theta`` on ``n`` samples, then
plain Monte Carlo on ``n`` fresh ones) and ``crude_run`` is plain Monte Carlo.

All runners accept either a single :class:`~adaptmc.rng.NormalStream` or a
:class:`~adaptmc.rng.StreamBatch`. A batch advances independent replicates in
lockstep, and row ``r`` reproduces exactly the run on ``batch.streams[r]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Literal

import numpy as np
from scipy.special import ndtri

from .rng import NormalStream, StreamBatch
from .sa import (
    CompactSchedule,
    DivergedGradientError,
    GainSchedule,
    IterateHistory,
    WindowTracker,
)
from .models import ParametricRepresentation, all_finite, has_nan, quiet

__all__ = [
    "AdaptiveAccumulator",
    "EmptyAccumulatorError",
    "EstimateReport",
    "SASettings",
    "SAResult",
    "TraceRecord",
    "RunError",
    "VARIANTS",
    "adis_run",
    "nadis_run",
    "crude_run",
    "run_sa",
    "normal_quantile",
]

VARIANTS = ("xi1", "xi2", "xi1_avg", "xi2_avg")
CHUNK = 2048


class EmptyAccumulatorError(LookupError):
    """Statistics were requested before any sample was submitted."""


class RunError(RuntimeError):
    """A run failed; ``iteration`` is the 1-based step that raised."""

    def __init__(self, iteration: int, cause: BaseException):
        super().__init__(f"iteration {iteration}: {type(cause).__name__}: {cause}")
        self.iteration = iteration
        self.cause = cause


def normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    return float(ndtri(p))


class AdaptiveAccumulator:
    """Running means of ``H`` and ``H^2``.

    ``xi`` and ``m2`` are floats for a single run and ``(R,)`` arrays for a batch.
    The recursion ``xi <- xi + (h - xi) / (n + 1)`` is the online form of the
    sample mean and keeps rounding drift small over millions of updates.
    """

    def __init__(self, replicates: int | None = None):
        self.n = 0
        self.payoff_evals = 0
        self._single = replicates is None
        if self._single:
            self.xi = 0.0
            self.m2 = 0.0
        else:
            self.xi = np.zeros(replicates)
            self.m2 = np.zeros(replicates)

    def update(self, h) -> "AdaptiveAccumulator":
        k = self.n + 1
        if self._single:
            h = float(h)
            if not math.isfinite(h):
                raise ValueError(f"non-finite sample submitted at update {k}")
        else:
            h = np.asarray(h, dtype=np.float64)
            if not all_finite(h):
                raise ValueError(f"non-finite sample submitted at update {k}")
        self.xi = self.xi + (h - self.xi) / k
        self.m2 = self.m2 + (h * h - self.m2) / k
        self.n = k
        return self

    def update_many(self, h) -> "AdaptiveAccumulator":
        """Absorb a block of samples, ``h`` of shape ``(k,)`` or ``(k, R)``."""
        h = np.asarray(h, dtype=np.float64)
        if h.shape[0] == 0:
            return self
        if not np.isfinite(h).all():
            raise ValueError(f"non-finite sample submitted after update {self.n}")
        k = h.shape[0]
        total = self.n + k
        # per-column contiguous sums give a batch row the same rounding as a lone run
        cols = np.ascontiguousarray(h.T)
        xi = self.xi + (cols.sum(axis=-1) - k * self.xi) / total
        m2 = self.m2 + ((cols * cols).sum(axis=-1) - k * self.m2) / total
        self.xi, self.m2 = (float(xi), float(m2)) if self._single else (xi, m2)
        self.n = total
        return self

    def variance(self):
        """``m2 - xi^2``; can be slightly negative for small ``n``."""
        if self.n == 0:
            raise EmptyAccumulatorError("no samples yet")
        return self.m2 - self.xi * self.xi

    def confidence_interval(self, level: float = 0.95):
        """``(low, high, degenerate)`` for the mean at the given level.

        A non-positive variance estimate collapses the interval onto ``xi`` and
        sets ``degenerate``.
        """
        z = normal_quantile((1.0 + level) / 2.0)
        var = self.variance()
        half = z * np.sqrt(np.maximum(var, 0.0) / self.n)
        if self._single:
            half = float(half)
        return self.xi - half, self.xi + half, var <= 0.0

    def report(self, level=0.95, truncations=0, theta=None, label="") -> "EstimateReport":
        lo, hi, degenerate = self.confidence_interval(level)
        return EstimateReport(
            estimate=float(self.xi),
            variance=float(self.variance()),
            ci_low=float(lo),
            ci_high=float(hi),
            n=self.n,
            payoff_evals=self.payoff_evals,
            truncations=int(truncations),
            theta_final=np.atleast_1d(np.asarray(theta if theta is not None else [], dtype=float)),
            level=level,
            degenerate=bool(degenerate),
            variant=label,
        )

    def row(self, r: int) -> "AdaptiveAccumulator":
        one = AdaptiveAccumulator()
        one.n, one.xi, one.m2, one.payoff_evals = self.n, self.xi[r], self.m2[r], self.payoff_evals
        return one


@dataclass(frozen=True, eq=False)
class EstimateReport:
    estimate: float
    variance: float
    ci_low: float
    ci_high: float
    n: int
    payoff_evals: int
    truncations: int = 0
    theta_final: np.ndarray = field(default_factory=lambda: np.zeros(0))
    level: float = 0.95
    degenerate: bool = False
    variant: str = ""

    @property
    def std_error(self) -> float:
        return math.sqrt(max(self.variance, 0.0) / self.n)

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def __eq__(self, other):
        if not isinstance(other, EstimateReport):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def as_dict(self) -> dict:
        return {
            "variant": self.variant,
            "estimate": self.estimate,
            "variance": self.variance,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "level": self.level,
            "degenerate": self.degenerate,
            "n": self.n,
            "payoff_evals": self.payoff_evals,
            "truncations": self.truncations,
            "theta_final": [float(t) for t in self.theta_final],
        }


@dataclass(frozen=True)
class SASettings:
    """Everything the stochastic approximation needs besides the noise.

    ``overflow="truncate"`` turns infinite gradient samples into truncations;
    see :func:`adaptmc.sa.sa_step`.
    """

    gains: GainSchedule = field(default_factory=GainSchedule)
    compacts: CompactSchedule = field(default_factory=CompactSchedule)
    theta0: tuple | np.ndarray | None = None
    tau: float = 1.0
    normalize: Literal["verbatim", "count"] = "verbatim"
    overflow: Literal["raise", "truncate"] = "truncate"

    def start(self, dim: int) -> np.ndarray:
        if self.theta0 is None:
            return np.zeros(dim)
        theta0 = np.array(self.theta0, dtype=np.float64, ndmin=1)
        if theta0.shape != (dim,):
            raise ValueError(f"theta0 has shape {theta0.shape}, parameter dimension is {dim}")
        if not self.compacts.contains(0, theta0):
            raise ValueError("theta0 must lie in the first compact set")
        return theta0


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    xi: float
    sigma2: float
    theta_norm: float
    alpha: int
    payoff_evals: int


TraceHook = Callable[[TraceRecord], None]


def _chunks(stream, n: int, size: int = CHUNK) -> Iterator[np.ndarray]:
    """Noise blocks of shape ``(k, R, m)`` covering ``n`` steps."""
    batch = isinstance(stream, StreamBatch)
    done = 0
    while done < n:
        k = min(size, n - done)
        g = stream.draw(k)
        yield g if batch else g[:, None, :]
        done += k


def _replicates(stream) -> int | None:
    return len(stream) if isinstance(stream, StreamBatch) else None


class _Iterate:
    """Truncated SA state on rows plus the optional window average."""

    def __init__(self, settings: SASettings, dim: int, rows: int, averaged: bool):
        self.s = settings
        self.theta0 = settings.start(dim)
        self.theta = np.tile(self.theta0, (rows, 1))
        self.alpha = np.zeros(rows, dtype=np.int64)
        self.last_truncation = np.zeros(rows, dtype=np.int64)
        self.frozen = settings.gains.gamma == 0.0
        self.wide = dim > 1
        self.scalar = dim == 1 and rows == 1
        self._set_radius()
        self.averaged = averaged
        if averaged:
            if not settings.tau > 0:
                raise ValueError("averaged variants need tau > 0")
            self.history = IterateHistory(self.theta)
            self.window = WindowTracker(settings.gains, settings.tau)
            self.avg = self.theta.copy()  # the average at time 0 is theta_0

    def _set_radius(self) -> None:
        self.r2 = self.s.compacts.radius(self.alpha) ** 2

    def step(self, i: int, gain: float, u: np.ndarray) -> None:
        """Advance from ``theta_{i-1}`` to ``theta_i``; same rule as :func:`adaptmc.sa.sa_step`."""
        if self.scalar and not self.frozen:
            # one row, one parameter: same IEEE operations on Python floats
            uu = u.item()
            bad = uu != uu if self.s.overflow == "truncate" else not math.isfinite(uu)
            if bad:
                raise DivergedGradientError("non-finite gradient sample")
            c = self.theta.item() - gain * uu
            sq = c * c
            if sq <= self.r2.item() and sq < math.inf:
                self.theta = np.array([[c]])
            else:
                self.theta = self.theta0.reshape(1, 1).copy()
                self.alpha = self.alpha + 1
                self.last_truncation[0] = i
                self._set_radius()
        elif not self.frozen:
            if has_nan(u) if self.s.overflow == "truncate" else not all_finite(u):
                raise DivergedGradientError("non-finite gradient sample")
            candidate = self.theta - gain * u
            sq = (candidate * candidate).sum(axis=1) if self.wide else (candidate * candidate)[:, 0]
            inside = (sq <= self.r2) & (sq < np.inf)
            if inside.item() if inside.size == 1 else inside.all():
                self.theta = candidate
            else:
                self.theta = np.where(inside[:, None], candidate, self.theta0)
                self.alpha = self.alpha + ~inside
                self.last_truncation[~inside] = i
                self._set_radius()
        if self.averaged:
            self.history.append(self.theta)
            p, hi = self.window.window(i)
            total = self.history.window_sum(p, hi)
            if self.s.normalize == "verbatim":
                self.avg = (self.s.gains.gain_at(p) / self.s.tau) * total
            elif self.s.normalize == "count":
                self.avg = total / (hi - p + 1)
            else:
                raise ValueError(f"unknown normalization {self.s.normalize!r}")
            self.history.forget_before(self.window.retain_from)


def _trace_row(acc: AdaptiveAccumulator, it: _Iterate, i: int, evals: int) -> TraceRecord:
    return TraceRecord(
        iter=i,
        xi=float(acc.xi),
        sigma2=float(acc.variance()),
        theta_norm=float(np.linalg.norm(it.theta[0])),
        alpha=int(it.alpha[0]),
        payoff_evals=evals,
    )


def _finish(acc, it, rows, level, label, evals_start, model):
    total = model.evaluations - evals_start
    acc.payoff_evals = total // (rows or 1)
    if rows is None:
        return acc.report(level, it.alpha[0], it.theta[0], label)
    return [acc.row(r).report(level, it.alpha[r], it.theta[r], label) for r in range(rows)]


def adis_run(
    model: ParametricRepresentation,
    settings: SASettings,
    variant: str,
    n: int,
    stream: NormalStream | StreamBatch,
    level: float = 0.95,
    trace: TraceHook | None = None,
    trace_every: int = 1,
):
    """Adaptive importance sampling estimate of ``E[H(theta, X)]``.

    Variants: ``xi1`` / ``xi2`` use the gradient ``u1`` / ``u2`` and evaluate ``H``
    at the raw iterate; ``xi1_avg`` / ``xi2_avg`` evaluate ``H`` at the window
    average while the iterate itself is still driven by ``u1`` / ``u2``. Only
    ``xi2`` shares a single payoff evaluation between ``H`` and ``U``.

    Returns one :class:`EstimateReport`, or a list of them for a stream batch.
    Failures are re-raised as :class:`RunError` carrying the step index.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if trace is not None and trace_every < 1:
        raise ValueError("trace_every must be >= 1")
    rows = _replicates(stream)
    if trace is not None and rows is not None:
        raise ValueError("tracing needs a single stream")
    averaged = variant.endswith("_avg")
    first = variant.startswith("xi1")
    it = _Iterate(settings, model.param_dim, rows or 1, averaged)
    acc = AdaptiveAccumulator(rows)
    start = model.evaluations
    gains = settings.gains
    i = 0
    try:
        with quiet():
            for g in _chunks(stream, n):
                steps = gains.gains(i + 1, g.shape[0])
                for j in range(g.shape[0]):
                    i += 1
                    x = g[j]
                    if variant == "xi2":
                        h, u = model._h_u2(it.theta, x)
                    else:
                        h = model._h(it.avg if averaged else it.theta, x)
                        u = model._u1(it.theta, x) if first else model._u2(it.theta, x)
                    acc.update(h if rows else h.item())
                    it.step(i, steps[j], u)
                    if trace is not None and (i % trace_every == 0 or i == n):
                        trace(_trace_row(acc, it, i, model.evaluations - start))
    except (ArithmeticError, ValueError, LookupError) as exc:
        raise RunError(i, exc) from exc
    return _finish(acc, it, rows, level, variant, start, model)


@dataclass(frozen=True, eq=False)
class SAResult:
    """Outcome of a pure stochastic-approximation run (rows for a batch)."""

    theta: np.ndarray
    theta_avg: np.ndarray | None
    alpha: np.ndarray
    last_truncation: np.ndarray
    n: int


def run_sa(
    model: ParametricRepresentation,
    settings: SASettings,
    n: int,
    stream: NormalStream | StreamBatch,
    gradient: Literal["u1", "u2"] = "u2",
    averaged: bool = False,
) -> SAResult:
    """Iterate the truncated SA for ``n`` steps without estimating anything.

    ``last_truncation`` holds, per row, the step of the latest reset (0 if none).
    One payoff evaluation per step.
    """
    if gradient not in ("u1", "u2"):
        raise ValueError(f"gradient must be 'u1' or 'u2', got {gradient!r}")
    rows = _replicates(stream) or 1
    it = _Iterate(settings, model.param_dim, rows, averaged)
    grad = model._u1 if gradient == "u1" else model._u2
    i = 0
    try:
        with quiet():
            for g in _chunks(stream, n):
                steps = settings.gains.gains(i + 1, g.shape[0])
                for j in range(g.shape[0]):
                    i += 1
                    it.step(i, steps[j], grad(it.theta, g[j]))
    except (ArithmeticError, ValueError, LookupError) as exc:
        raise RunError(i, exc) from exc
    return SAResult(
        theta=it.theta,
        theta_avg=it.avg if averaged else None,
        alpha=it.alpha,
        last_truncation=it.last_truncation,
        n=n,
    )


def _frozen_mc(model, theta, n, stream, acc, trace, trace_every, it, start, offset):
    """Plain Monte Carlo of ``H(theta, X)`` with ``theta`` fixed, chunk-vectorised."""
    rows = theta.shape[0]
    done = 0
    for g in _chunks(stream, n):
        k = g.shape[0]
        try:
            with quiet():
                h = model._h(np.tile(theta, (k, 1)), g.reshape(k * rows, -1)).reshape(k, rows)
        except (ArithmeticError, ValueError) as exc:
            # rows are laid out step-major, so the failing step is row // replicates
            raise RunError(done + getattr(exc, "row", 0) // rows + 1, exc) from exc
        if not np.isfinite(h).all():
            bad = int(np.argwhere(~np.isfinite(h))[0, 0])
            raise RunError(done + bad + 1, ValueError("non-finite estimator term"))
        if trace is None:
            acc.update_many(h if rows > 1 or _is_batch(acc) else h[:, 0])
        else:
            _traced_block(acc, h[:, 0], done, n, trace, trace_every, it, model, start, offset)
        done += k


def _is_batch(acc) -> bool:
    return np.ndim(acc.xi) > 0


def _traced_block(acc, h, done, n, trace, every, it, model, start, offset):
    # absorb up to each trace point so the emitted running values are exact prefix means
    k = h.shape[0]
    cuts = [c - done for c in range(done + 1, done + k + 1) if c % every == 0 or c == n]
    prev = 0
    for c in cuts:
        acc.update_many(h[prev:c])
        prev = c
        evals = offset + (done + c)
        trace(_trace_row(acc, it, done + c, evals))
    acc.update_many(h[prev:])


def nadis_run(
    model: ParametricRepresentation,
    settings: SASettings,
    n: int,
    stream: NormalStream | StreamBatch,
    plug_in: Literal["raw", "avg"] = "raw",
    level: float = 0.95,
    trace: TraceHook | None = None,
    trace_every: int = 1,
):
    """Two-phase estimator: ``n`` SA steps driven by ``u2``, then ``n`` fresh
    Monte Carlo samples of ``H`` at the learnt parameter.

    ``plug_in="avg"`` freezes the window average instead of the last iterate.
    The trace covers the Monte Carlo phase, where the parameter is constant.
    """
    if plug_in not in ("raw", "avg"):
        raise ValueError(f"plug_in must be 'raw' or 'avg', got {plug_in!r}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rows = _replicates(stream)
    if trace is not None and rows is not None:
        raise ValueError("tracing needs a single stream")
    start = model.evaluations
    sa = run_sa(model, settings, n, stream, "u2", averaged=plug_in == "avg")
    theta = sa.theta_avg if plug_in == "avg" else sa.theta
    acc = AdaptiveAccumulator(rows)
    it = _Iterate(settings, model.param_dim, theta.shape[0], False)
    it.theta, it.alpha = theta, sa.alpha
    _frozen_mc(model, theta, n, stream, acc, trace, trace_every, it, start, n)
    return _finish(acc, it, rows, level, f"nadis_{plug_in}", start, model)


def crude_run(
    model: ParametricRepresentation,
    n: int,
    stream: NormalStream | StreamBatch,
    level: float = 0.95,
    trace: TraceHook | None = None,
    trace_every: int = 1,
):
    """Plain Monte Carlo, i.e. ``H(0, X)``; one payoff evaluation per sample."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rows = _replicates(stream)
    if trace is not None and rows is not None:
        raise ValueError("tracing needs a single stream")
    start = model.evaluations
    settings = SASettings(gains=GainSchedule(gamma=0.0))
    it = _Iterate(settings, model.param_dim, rows or 1, False)
    acc = AdaptiveAccumulator(rows)
    _frozen_mc(model, it.theta, n, stream, acc, trace, trace_every, it, start, 0)
    return _finish(acc, it, rows, level, "crude", start, model)
