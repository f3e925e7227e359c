"""Adaptive importance sampling for Monte Carlo pricing.

The parameter of a Gaussian change of measure is learnt by a randomly truncated
Robbins-Monro algorithm while the very same samples feed the Monte Carlo mean.
"""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .estimator import (
    AdaptiveAccumulator,
    EstimateReport,
    RunError,
    SASettings,
    adis_run,
    crude_run,
    nadis_run,
    run_sa,
)
from .harness import run_price, run_replicates, run_table
from .market import BasketCall, DownOutBasketCall, MarketModel, bs_call_price, payoff_function
from .models import (
    EsscherModel,
    GaussianShiftModel,
    PayoffError,
    build_block_drift_A,
    build_cameron_martin_A,
    build_identity_A,
    exponential_esscher,
    gaussian_esscher,
)
from .oracles import quadrature_theta_star, quadrature_v
from .rng import NormalStream, StreamBatch, replicate_streams
from .sa import CompactSchedule, GainSchedule, TruncatedSAState, sa_step

__version__ = "0.1.0"
