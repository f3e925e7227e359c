"""Running configured experiments: single prices, traces, tables and replicate studies.

Seeds: the run of a configuration uses the noise stream ``(seed, 0)``;
replicate ``i`` of a study uses ``(seed, i)``. Replicate 0 therefore repeats the
single run, and any replicate can be rerun alone.
"""

from __future__ import annotations

import csv
import io
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ExperimentConfig, load_config
from .estimator import (
    EstimateReport,
    RunError,
    SASettings,
    TraceRecord,
    adis_run,
    crude_run,
    nadis_run,
)
from .market import DownOutBasketCall, bs_call_price
from .models import ParametricRepresentation
from .rng import NormalStream, replicate_streams

__all__ = [
    "RunArtifacts",
    "ReplicateSummary",
    "Table",
    "TRACE_HEADER",
    "run_algorithm",
    "run_price",
    "run_table",
    "run_replicates",
    "reference_price",
    "write_trace",
    "read_trace",
    "format_report",
    "parse_report",
    "load_scenarios",
]

TRACE_HEADER = ("iter", "xi", "sigma2", "theta_norm", "alpha", "payoff_evals")

_ADIS = {"adis-xi1": "xi1", "adis-xi2": "xi2", "adis-xi1avg": "xi1_avg", "adis-xi2avg": "xi2_avg"}


def run_algorithm(
    variant: str,
    model: ParametricRepresentation,
    settings: SASettings,
    n: int,
    stream,
    level: float = 0.95,
    trace=None,
    trace_every: int = 1,
):
    """Dispatch a configuration variant name to its runner."""
    kwargs = dict(level=level, trace=trace, trace_every=trace_every)
    if variant == "crude":
        return crude_run(model, n, stream, **kwargs)
    if variant in _ADIS:
        return adis_run(model, settings, _ADIS[variant], n, stream, **kwargs)
    if variant in ("nadis-raw", "nadis-avg"):
        return nadis_run(model, settings, n, stream, variant[6:], **kwargs)
    raise ValueError(f"unknown algorithm variant {variant!r}")


@dataclass
class RunArtifacts:
    report: EstimateReport
    seconds: float
    config_echo: str
    trace: list[TraceRecord] | None = None
    trace_path: Path | None = None


def write_trace(records: Sequence[TraceRecord], target) -> None:
    """CSV with header ``iter,xi,sigma2,theta_norm,alpha,payoff_evals``.

    Floats are written with ``repr`` so that reading them back is exact.
    """
    own = isinstance(target, (str, Path))
    fh = open(target, "w", newline="", encoding="utf-8") if own else target
    try:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(TRACE_HEADER)
        for rec in records:
            w.writerow([rec.iter, repr(rec.xi), repr(rec.sigma2), repr(rec.theta_norm), rec.alpha, rec.payoff_evals])
    finally:
        if own:
            fh.close()


def read_trace(source) -> list[TraceRecord]:
    own = isinstance(source, (str, Path))
    fh = open(source, newline="", encoding="utf-8") if own else source
    try:
        rows = csv.reader(fh)
        header = tuple(next(rows))
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header}")
        return [
            TraceRecord(int(r[0]), float(r[1]), float(r[2]), float(r[3]), int(r[4]), int(r[5]))
            for r in rows
            if r
        ]
    finally:
        if own:
            fh.close()


def run_price(
    cfg: ExperimentConfig,
    trace_every: int | None = None,
    trace_path: str | Path | None = None,
) -> RunArtifacts:
    """Run the configured algorithm once on stream ``(seed, 0)``.

    A trace is recorded when ``trace_every`` (or ``run.trace-every``) is positive,
    and written to ``trace_path`` when given.
    """
    every = cfg.trace_every if trace_every is None else trace_every
    records: list[TraceRecord] | None = [] if every else None
    model = cfg.model()
    stream = NormalStream(model.noise_dim, cfg.seed, 0)
    t0 = time.perf_counter()
    try:
        report = run_algorithm(
            cfg.variant, model, cfg.sa_settings(), cfg.n, stream, cfg.level,
            records.append if records is not None else None, every or 1,
        )
    except RunError as exc:
        raise RunError(exc.iteration, RuntimeError(f"{exc.cause} [config: {_short_echo(cfg)}]")) from exc
    seconds = time.perf_counter() - t0
    path = None
    if records is not None and trace_path is not None:
        path = Path(trace_path)
        write_trace(records, path)
    return RunArtifacts(report, seconds, cfg.echo(), records, path)


def _short_echo(cfg: ExperimentConfig) -> str:
    return f"{cfg.source or 'inline'} variant={cfg.variant} n={cfg.n} gamma={cfg.gamma} seed={cfg.seed}"


def format_report(report: EstimateReport, seconds: float | None = None, extra: dict | None = None) -> str:
    """``key = value`` lines, one per report field."""
    items = dict(report.as_dict())
    items["std_error"] = report.std_error
    items["theta_final"] = " ".join(repr(t) for t in items["theta_final"]) or "-"
    if seconds is not None:
        items["seconds"] = round(seconds, 3)
    items.update(extra or {})
    return "\n".join(f"{k} = {_fmt(v)}" for k, v in items.items())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_report(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition(" = ")
            out[key.strip()] = value.strip()
    return out


# --- tables ---------------------------------------------------------------


@dataclass
class Table:
    columns: list[str]
    rows: list[list]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()

    def to_markdown(self) -> str:
        lines = ["| " + " | ".join(self.columns) + " |", "|" + "---|" * len(self.columns)]
        for row in self.rows:
            lines.append("| " + " | ".join(_cell(v, 4) for v in row) + " |")
        return "\n".join(lines)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]


def _cell(v, digits: int | None = None) -> str:
    if isinstance(v, float):
        if digits is None:
            return repr(v)
        return f"{v:.{digits}g}" if abs(v) >= 1e-3 or v == 0 else f"{v:.3e}"
    return "" if v is None else str(v)


def _column_name(token: str) -> str:
    name, _, kind = token.partition(":")
    base = "MC" if name == "crude" else name
    return f"{base} reduced" if kind and kind != "identity" else base


def table_variants(cfg: ExperimentConfig) -> tuple[str, ...]:
    tokens = cfg.compare or ("crude", cfg.variant)
    if "crude" not in tokens:
        tokens = ("crude",) + tuple(tokens)
    return tuple(dict.fromkeys(tokens))


def run_table(configs: Sequence[ExperimentConfig]) -> Table:
    """One row per scenario: rho, K, gamma, price, the estimate of every adaptive
    variant, then variance, wall-clock and payoff-evaluation count for every
    compared variant.

    The ``Price`` column is the crude Monte Carlo estimate. All variants of a row
    share the stream ``(seed, 0)``.
    """
    if not configs:
        raise ValueError("no scenarios")
    if len({c.n for c in configs}) != 1:
        raise ValueError("all scenarios of a table must share n")
    tokens_per_row = [table_variants(c) for c in configs]
    names = list(dict.fromkeys(t for tokens in tokens_per_row for t in tokens))
    adaptive = [t for t in names if not t.startswith("crude")]
    columns = ["scenario", "rho", "K", "gamma", "Price"]
    # the adaptive estimates make a collapsed drift visible next to its variance
    columns += [f"Price {_column_name(t)}" for t in adaptive]
    columns += [f"Var {_column_name(t)}" for t in names]
    columns += [f"time {_column_name(t)}" for t in names]
    columns += [f"evals {_column_name(t)}" for t in names]
    rows = []
    for cfg, tokens in zip(configs, tokens_per_row):
        est, var, secs, evals = {}, {}, {}, {}
        price = None
        for token in tokens:
            name, _, kind = token.partition(":")
            model = cfg.model(kind or None)
            stream = NormalStream(model.noise_dim, cfg.seed, 0)
            t0 = time.perf_counter()
            rep = run_algorithm(name, model, cfg.sa_settings(), cfg.n, stream, cfg.level)
            secs[token] = time.perf_counter() - t0
            est[token], var[token], evals[token] = rep.estimate, rep.variance, rep.payoff_evals
            if name == "crude":
                price = rep.estimate
        label = cfg.label or (Path(cfg.source).stem if cfg.source else "")
        row = [label, cfg.rho, cfg.strike, cfg.gamma, price]
        row += [est.get(t) for t in adaptive]
        row += [var.get(t) for t in names]
        row += [None if t not in secs else round(secs[t], 3) for t in names]
        row += [evals.get(t) for t in names]
        rows.append(row)
    return Table(columns, rows)


def load_scenarios(directory: str | Path) -> list[ExperimentConfig]:
    files = sorted(Path(directory).glob("*.ini"))
    if not files:
        raise FileNotFoundError(f"no .ini scenario files in {directory}")
    return [load_config(f) for f in files]


# --- replicate studies ----------------------------------------------------


def reference_price(cfg: ExperimentConfig) -> float | None:
    """``run.reference`` if set, else the Black-Scholes value for a one-asset call."""
    if cfg.reference is not None:
        return cfg.reference
    payoff = cfg.payoff()
    if cfg.assets == 1 and not isinstance(payoff, DownOutBasketCall) and payoff.discount:
        w, vol = float(payoff.weights[0]), float(cfg.vols[0])
        if w > 0 and vol > 0:
            return w * bs_call_price(float(cfg.spots[0]), cfg.strike / w, cfg.rate, vol, cfg.maturity)
    return None


@dataclass
class ReplicateSummary:
    runs: int
    reports: list[EstimateReport | None]
    failures: dict[int, str]
    reference: float | None
    seconds: float
    alpha_counts: Counter = field(default_factory=Counter)

    @property
    def completed(self) -> list[EstimateReport]:
        return [r for r in self.reports if r is not None]

    @property
    def coverage(self) -> float | None:
        done = self.completed
        if self.reference is None or not done:
            return None
        return sum(r.covers(self.reference) for r in done) / len(done)

    @property
    def mean_estimate(self) -> float:
        return float(np.mean([r.estimate for r in self.completed]))

    @property
    def estimate_spread(self) -> float:
        est = [r.estimate for r in self.completed]
        return float(np.std(est, ddof=1)) if len(est) > 1 else 0.0

    def variance_quantiles(self) -> tuple[float, float, float, float, float]:
        v = np.array([r.variance for r in self.completed])
        return tuple(float(q) for q in np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0]))

    def as_text(self) -> str:
        lines = [
            f"runs = {self.runs}",
            f"completed = {len(self.completed)}",
            f"failures = {len(self.failures)}",
        ]
        if self.completed:
            lines.append(f"mean_estimate = {self.mean_estimate!r}")
            lines.append(f"estimate_sd = {self.estimate_spread!r}")
            q = self.variance_quantiles()
            lines.append("sigma2_quantiles = " + " ".join(repr(x) for x in q))
            lines.append(
                "alpha_counts = " + " ".join(f"{k}:{v}" for k, v in sorted(self.alpha_counts.items()))
            )
        if self.reference is not None:
            lines.append(f"reference = {self.reference!r}")
            cov = self.coverage
            lines.append(f"coverage = {cov!r}" if cov is not None else "coverage = -")
        for i, msg in sorted(self.failures.items()):
            lines.append(f"failure.{i} = {msg}")
        lines.append(f"seconds = {round(self.seconds, 3)}")
        return "\n".join(lines)


def run_replicates(cfg: ExperimentConfig, runs: int | None = None, reference: float | None = None) -> ReplicateSummary:
    """``runs`` independent replicates of the configured algorithm.

    Replicates advance together as rows of one vectorised run. If that batch
    fails, each replicate is rerun alone so one bad replicate is reported
    without discarding the others.
    """
    runs = cfg.replicates if runs is None else runs
    if runs < 1:
        raise ValueError("runs must be >= 1")
    ref = reference if reference is not None else reference_price(cfg)
    model = cfg.model()
    settings = cfg.sa_settings()
    t0 = time.perf_counter()
    failures: dict[int, str] = {}
    try:
        reports = run_algorithm(
            cfg.variant, model, settings, cfg.n, replicate_streams(model.noise_dim, cfg.seed, runs), cfg.level
        )
    except RunError:
        reports = []
        for i in range(runs):
            try:
                reports.append(
                    run_algorithm(cfg.variant, model, settings, cfg.n, NormalStream(model.noise_dim, cfg.seed, i), cfg.level)
                )
            except RunError as exc:
                reports.append(None)
                failures[i] = str(exc)
    alpha = Counter(r.truncations for r in reports if r is not None)
    return ReplicateSummary(runs, reports, failures, ref, time.perf_counter() - t0, alpha)
