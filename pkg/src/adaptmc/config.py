"""Experiment configuration files.

A configuration is an INI-style text with four sections; keys are lower case
with hyphens, lists are comma separated and a single value broadcasts to every
asset::

    [model]
    assets = 40
    spots = 50
    vols = 0.2
    rate = 0.05
    rho = 0.1
    maturity = 1
    # steps-per-year = 12     (omit for a single step to maturity)

    [payoff]
    variant = basket-call     # or down-out-basket-call
    weights = 0.025
    strike = 45
    # barriers = 40, 30, 45, 20, 10
    # discount = true

    [algorithm]
    variant = adis-xi2
    n = 100000
    gamma = 1
    # a = 0.75, tau = 1, r0 = 5, growth = 2, theta0 = 0,
    # drift-matrix = identity, avg-normalize = verbatim, level = 0.95
    # compare = crude, adis-xi2, adis-xi2avg, adis-xi2:block

    [run]
    seed = 1
    # replicates = 1, trace-every = 0, output = path, label = text,
    # reference = price used by replicate coverage

Every problem found while parsing is collected and reported together in a
:class:`ConfigError`, each prefixed with its ``section.key`` path.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .estimator import SASettings
from .market import (
    BasketCall,
    DownOutBasketCall,
    MarketModel,
    correlation_bounds,
    monthly_grid,
    payoff_function,
)
from .models import GaussianShiftModel, build_block_drift_A, build_cameron_martin_A
from .sa import CompactSchedule, GainSchedule

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ALGORITHMS",
    "DRIFT_MATRICES",
    "parse_config",
    "load_config",
]

ALGORITHMS = ("crude", "adis-xi1", "adis-xi2", "adis-xi1avg", "adis-xi2avg", "nadis-raw", "nadis-avg")
DRIFT_MATRICES = ("identity", "cameron-martin", "block")
PAYOFFS = ("basket-call", "down-out-basket-call")
NORMALIZATIONS = ("verbatim", "count")

_KEYS = {
    "model": {"assets", "spots", "vols", "rate", "rho", "maturity", "steps-per-year"},
    "payoff": {"variant", "weights", "strike", "barriers", "discount"},
    "algorithm": {
        "variant", "n", "gamma", "a", "tau", "r0", "growth", "theta0",
        "drift-matrix", "avg-normalize", "level", "compare",
    },
    "run": {"seed", "replicates", "trace-every", "output", "label", "reference"},
}
_REQUIRED = {
    "model": {"spots", "vols", "rate", "maturity"},
    "payoff": {"variant", "strike"},
    "algorithm": {"variant", "n"},
    "run": set(),
}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    # model
    spots: np.ndarray
    vols: np.ndarray
    rate: float
    rho: float
    maturity: float
    steps_per_year: int | None
    # payoff
    payoff_variant: str
    weights: np.ndarray
    strike: float
    barriers: np.ndarray | None
    discount: bool
    # algorithm
    variant: str
    n: int
    gamma: float = 1.0
    a: float = 0.75
    tau: float = 1.0
    r0: float = 5.0
    growth: float = 2.0
    theta0: np.ndarray | None = None
    drift_matrix: str = "identity"
    avg_normalize: str = "verbatim"
    level: float = 0.95
    compare: tuple[str, ...] = ()
    # run
    seed: int = 0
    replicates: int = 1
    trace_every: int = 0
    output: str | None = None
    label: str = ""
    reference: float | None = None
    source: str = field(default="", repr=False)

    @property
    def assets(self) -> int:
        return self.spots.size

    def grid(self) -> np.ndarray:
        if self.steps_per_year is None:
            return np.array([self.maturity])
        return monthly_grid(self.maturity, self.steps_per_year)

    def market(self) -> MarketModel:
        return MarketModel(self.spots, self.vols, self.rate, self.rho, self.grid())

    def payoff(self) -> BasketCall:
        if self.payoff_variant == "down-out-basket-call":
            return DownOutBasketCall(self.weights, self.strike, self.discount, barriers=self.barriers)
        return BasketCall(self.weights, self.strike, self.discount)

    def drift(self, kind: str | None = None):
        """Drift matrix ``A``; ``None`` stands for the identity."""
        kind = kind or self.drift_matrix
        if kind == "identity":
            return None
        if kind == "cameron-martin":
            if self.assets != 1:
                raise ValueError("the cameron-martin drift matrix needs a single asset")
            return build_cameron_martin_A(self.grid())
        return build_block_drift_A(self.grid(), self.assets)

    def model(self, kind: str | None = None) -> GaussianShiftModel:
        mm = self.market()
        return GaussianShiftModel(payoff_function(mm, self.payoff()), self.drift(kind), mm.noise_dim)

    def sa_settings(self) -> SASettings:
        return SASettings(
            gains=GainSchedule(self.gamma, self.a),
            compacts=CompactSchedule(self.r0, self.growth),
            theta0=self.theta0,
            tau=self.tau,
            normalize=self.avg_normalize,
        )

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def echo(self) -> str:
        """Canonical key-value rendering of the effective configuration."""
        def fmt(v):
            if isinstance(v, np.ndarray):
                return ", ".join(repr(float(x)) for x in v)
            if isinstance(v, (tuple, list)):
                return ", ".join(v)
            if isinstance(v, bool):
                return str(v).lower()
            return repr(v) if isinstance(v, float) else str(v)

        lines = []
        for name, value in [
            ("model.spots", self.spots), ("model.vols", self.vols), ("model.rate", self.rate),
            ("model.rho", self.rho), ("model.maturity", self.maturity),
            ("model.steps-per-year", self.steps_per_year),
            ("payoff.variant", self.payoff_variant), ("payoff.weights", self.weights),
            ("payoff.strike", self.strike), ("payoff.barriers", self.barriers),
            ("payoff.discount", self.discount),
            ("algorithm.variant", self.variant), ("algorithm.n", self.n),
            ("algorithm.gamma", self.gamma), ("algorithm.a", self.a), ("algorithm.tau", self.tau),
            ("algorithm.r0", self.r0), ("algorithm.growth", self.growth),
            ("algorithm.theta0", self.theta0), ("algorithm.drift-matrix", self.drift_matrix),
            ("algorithm.avg-normalize", self.avg_normalize), ("algorithm.level", self.level),
            ("algorithm.compare", self.compare or None),
            ("run.seed", self.seed), ("run.replicates", self.replicates),
            ("run.trace-every", self.trace_every), ("run.output", self.output),
            ("run.label", self.label or None), ("run.reference", self.reference),
        ]:
            if value is not None:
                lines.append(f"{name} = {fmt(value)}")
        return "\n".join(lines)


class _Reader:
    """Typed access to the raw sections that records problems instead of raising."""

    def __init__(self, parser: configparser.ConfigParser):
        self.p = parser
        self.problems: list[str] = []

    def fail(self, path: str, message: str) -> None:
        self.problems.append(f"{path}: {message}")

    def raw(self, section: str, key: str) -> str | None:
        if not self.p.has_section(section) or not self.p.has_option(section, key):
            return None
        return self.p.get(section, key).strip()

    def _convert(self, section, key, default, convert, what):
        text = self.raw(section, key)
        if text is None:
            return default
        if text == "":
            self.fail(f"{section}.{key}", "empty value")
            return default
        try:
            return convert(text)
        except ValueError:
            self.fail(f"{section}.{key}", f"expected {what}, got {text!r}")
            return default

    def real(self, section, key, default=None):
        def conv(t):
            v = float(t)
            if not math.isfinite(v):
                raise ValueError
            return v

        return self._convert(section, key, default, conv, "a finite number")

    def integer(self, section, key, default=None):
        def conv(t):
            v = float(t)
            if not v.is_integer():
                raise ValueError
            return int(v)

        return self._convert(section, key, default, conv, "an integer")

    def reals(self, section, key, default=None):
        def conv(t):
            vals = [float(x) for x in t.replace(",", " ").split()]
            if not vals or not all(map(math.isfinite, vals)):
                raise ValueError
            return np.array(vals)

        return self._convert(section, key, default, conv, "a list of finite numbers")

    def boolean(self, section, key, default):
        def conv(t):
            low = t.lower()
            if low not in configparser.ConfigParser.BOOLEAN_STATES:
                raise ValueError
            return configparser.ConfigParser.BOOLEAN_STATES[low]

        return self._convert(section, key, default, conv, "true or false")

    def choice(self, section, key, options, default=None):
        text = self.raw(section, key)
        if text is None:
            return default
        if text not in options:
            what = "empty value" if text == "" else f"{text!r} is not one of {', '.join(options)}"
            self.fail(f"{section}.{key}", what)
            return default
        return text


def _broadcast(r: _Reader, path: str, values, count: int):
    if values is None:
        return None
    if values.size == 1:
        return np.full(count, values[0])
    if values.size != count:
        r.fail(path, f"has {values.size} entries for {count} assets")
        return None
    return values


def parse_config(text: str, source: str = "") -> ExperimentConfig:
    """Parse and fully validate configuration text."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str  # keys are case sensitive
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc.message if hasattr(exc, 'message') else exc}"]) from exc
    r = _Reader(parser)

    for section in parser.sections():
        if section not in _KEYS:
            r.fail(section, "unknown section")
            continue
        for key in parser.options(section):
            if key not in _KEYS[section]:
                r.fail(f"{section}.{key}", "unknown key")
    for section, keys in _REQUIRED.items():
        for key in sorted(keys):
            if r.raw(section, key) is None:
                r.fail(f"{section}.{key}", "missing required key")

    # model
    spots = r.reals("model", "spots")
    assets = r.integer("model", "assets")
    if assets is not None and assets < 1:
        r.fail("model.assets", f"must be >= 1, got {assets}")
        assets = None
    if assets is None:
        weights_probe = r.reals("payoff", "weights")
        sizes = [v.size for v in (spots, weights_probe) if v is not None and v.size > 1]
        assets = sizes[0] if sizes else 1
    spots = _broadcast(r, "model.spots", spots, assets)
    if spots is not None and np.any(spots <= 0):
        r.fail("model.spots", "must be positive")
    vols = _broadcast(r, "model.vols", r.reals("model", "vols"), assets)
    if vols is not None and np.any(vols < 0):
        r.fail("model.vols", "must be non-negative")
    rate = r.real("model", "rate")
    rho = r.real("model", "rho", 0.0)
    lo, hi = correlation_bounds(assets)
    if rho is not None and not lo < rho < hi:
        bound = f"(-1/{assets - 1}, 1)" if assets > 1 else "(-inf, 1)"
        r.fail("model.rho", f"{rho:g} outside {bound}: correlation matrix not positive definite")
    maturity = r.real("model", "maturity")
    if maturity is not None and maturity <= 0:
        r.fail("model.maturity", "must be positive")
    steps_per_year = r.integer("model", "steps-per-year")
    if steps_per_year is not None:
        if steps_per_year < 1:
            r.fail("model.steps-per-year", "must be >= 1")
        elif maturity is not None and maturity > 0:
            try:
                monthly_grid(maturity, steps_per_year)
            except ValueError as exc:
                r.fail("model.steps-per-year", str(exc))

    # payoff
    payoff_variant = r.choice("payoff", "variant", PAYOFFS)
    weights = _broadcast(r, "payoff.weights", r.reals("payoff", "weights", np.array([1.0 / assets])), assets)
    strike = r.real("payoff", "strike")
    if strike is not None and strike <= 0:
        r.fail("payoff.strike", "must be positive")
    barriers = _broadcast(r, "payoff.barriers", r.reals("payoff", "barriers"), assets)
    if payoff_variant == "down-out-basket-call":
        if barriers is None and r.raw("payoff", "barriers") is None:
            r.fail("payoff.barriers", "required for down-out-basket-call")
        elif barriers is not None and spots is not None and np.any(barriers >= spots):
            r.fail("payoff.barriers", "every barrier must sit below its spot")
    elif r.raw("payoff", "barriers") is not None:
        r.fail("payoff.barriers", "only allowed for down-out-basket-call")
    discount = r.boolean("payoff", "discount", True)

    # algorithm
    variant = r.choice("algorithm", "variant", ALGORITHMS)
    n = r.integer("algorithm", "n")
    if n is not None and n < 1:
        r.fail("algorithm.n", f"must be >= 1, got {n}")
    gamma = r.real("algorithm", "gamma", 1.0)
    if gamma is not None and gamma < 0:
        r.fail("algorithm.gamma", "must be >= 0")
    a = r.real("algorithm", "a", 0.75)
    if a is not None and not 0.5 < a <= 1.0:
        r.fail("algorithm.a", f"must lie in (1/2, 1], got {a:g}")
    tau = r.real("algorithm", "tau", 1.0)
    if tau is not None and tau <= 0:
        r.fail("algorithm.tau", "must be positive")
    r0 = r.real("algorithm", "r0", 5.0)
    if r0 is not None and r0 <= 0:
        r.fail("algorithm.r0", "must be positive")
    growth = r.real("algorithm", "growth", 2.0)
    if growth is not None and growth <= 1:
        r.fail("algorithm.growth", "must exceed 1")
    drift_matrix = r.choice("algorithm", "drift-matrix", DRIFT_MATRICES, "identity")
    if drift_matrix == "cameron-martin" and assets != 1:
        r.fail("algorithm.drift-matrix", "cameron-martin needs a single asset")
    avg_normalize = r.choice("algorithm", "avg-normalize", NORMALIZATIONS, "verbatim")
    level = r.real("algorithm", "level", 0.95)
    if level is not None and not 0 < level < 1:
        r.fail("algorithm.level", "must lie in (0, 1)")
    theta0 = r.reals("algorithm", "theta0")
    compare = ()
    text = r.raw("algorithm", "compare")
    if text is not None:
        compare = tuple(t.strip() for t in text.split(",") if t.strip())
        for token in compare:
            name, _, kind = token.partition(":")
            if name not in ALGORITHMS or (kind and kind not in DRIFT_MATRICES):
                r.fail("algorithm.compare", f"{token!r} is not ALGORITHM[:drift-matrix]")

    # run
    seed = r.integer("run", "seed", 0)
    if seed is not None and not 0 <= seed < 2**64:
        r.fail("run.seed", "must fit in an unsigned 64-bit word")
    replicates = r.integer("run", "replicates", 1)
    if replicates is not None and replicates < 1:
        r.fail("run.replicates", "must be >= 1")
    trace_every = r.integer("run", "trace-every", 0)
    if trace_every is not None and trace_every < 0:
        r.fail("run.trace-every", "must be >= 0")
    output = r.raw("run", "output") or None
    label = r.raw("run", "label") or ""
    reference = r.real("run", "reference")

    if not r.problems:
        # parameter dimension is only known once the grid and drift matrix are
        noise = assets * (1 if steps_per_year is None else round(maturity * steps_per_year))
        dim = {"identity": noise, "cameron-martin": 1, "block": assets}[drift_matrix]
        if theta0 is not None:
            theta0 = theta0 if theta0.size == dim else (np.full(dim, theta0[0]) if theta0.size == 1 else None)
            if theta0 is None:
                r.fail("algorithm.theta0", f"needs 1 or {dim} entries")
            elif not CompactSchedule(r0, growth).contains(0, theta0):
                r.fail("algorithm.theta0", f"must lie in the first ball of radius {r0:g}")
    if r.problems:
        raise ConfigError(r.problems)
    return ExperimentConfig(
        spots=spots, vols=vols, rate=rate, rho=rho, maturity=maturity,
        steps_per_year=steps_per_year, payoff_variant=payoff_variant, weights=weights,
        strike=strike, barriers=barriers, discount=discount, variant=variant, n=n,
        gamma=gamma, a=a, tau=tau, r0=r0, growth=growth, theta0=theta0,
        drift_matrix=drift_matrix, avg_normalize=avg_normalize, level=level, compare=compare,
        seed=seed, replicates=replicates, trace_every=trace_every, output=output,
        label=label, reference=reference, source=source,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))
