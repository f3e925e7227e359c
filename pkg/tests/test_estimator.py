import math

import numpy as np
import pytest

from adaptmc.estimator import (
    VARIANTS,
    AdaptiveAccumulator,
    EmptyAccumulatorError,
    RunError,
    SASettings,
    adis_run,
    crude_run,
    nadis_run,
    normal_quantile,
    run_sa,
)
from adaptmc.models import GaussianShiftModel
from adaptmc.rng import NormalStream, replicate_streams
from adaptmc.sa import GainSchedule

from conftest import unit_phi


def test_accumulator_examples():
    acc = AdaptiveAccumulator().update(4.0)
    assert (acc.xi, acc.m2, acc.n) == (4.0, 16.0, 1)
    assert acc.variance() == 0.0
    acc = AdaptiveAccumulator().update(2.0).update(4.0)
    assert (acc.xi, acc.m2, acc.n) == (3.0, 10.0, 2)
    assert acc.variance() == 1.0


def test_accumulator_constant():
    acc = AdaptiveAccumulator()
    for _ in range(1000):
        acc.update(0.1)
    assert acc.xi == pytest.approx(0.1, rel=1e-13)
    assert abs(acc.variance()) < 1e-15


def test_accumulator_errors():
    with pytest.raises(EmptyAccumulatorError):
        AdaptiveAccumulator().variance()
    for bad in (math.nan, math.inf):
        with pytest.raises(ValueError):
            AdaptiveAccumulator().update(bad)
        with pytest.raises(ValueError):
            AdaptiveAccumulator().update_many([1.0, bad])


def test_update_many_matches_mean():
    x = np.random.default_rng(0).normal(size=5000)
    acc = AdaptiveAccumulator().update_many(x[:1234]).update_many(x[1234:])
    assert acc.xi == pytest.approx(x.mean(), abs=1e-14)
    assert acc.variance() == pytest.approx(x.var(), rel=1e-12)


@pytest.mark.parametrize("level,z", [(0.95, 1.959964), (0.5, 0.674490)])
def test_quantiles(level, z):
    assert normal_quantile((1 + level) / 2) == pytest.approx(z, abs=5e-7)
    acc = AdaptiveAccumulator().update(0.0).update(2.0)  # variance 1, n 2
    lo, hi, degenerate = acc.confidence_interval(level)
    assert not degenerate
    assert hi - 1.0 == pytest.approx(normal_quantile((1 + level) / 2) / math.sqrt(2), rel=1e-14)
    assert 1.0 - lo == pytest.approx(hi - 1.0, rel=1e-14)


def test_degenerate_interval():
    acc = AdaptiveAccumulator().update(3.0).update(3.0)
    lo, hi, degenerate = acc.confidence_interval()
    assert (lo, hi, degenerate) == (3.0, 3.0, True)
    assert acc.report().degenerate
    with pytest.raises(ValueError):
        acc.confidence_interval(1.0)


def _unit_model(dim=1):
    return GaussianShiftModel(unit_phi, None, dim)


@pytest.mark.parametrize("variant", VARIANTS)
def test_unit_payoff_any_variant(variant):
    # a moderate gain keeps the drift in the region where H has a usable variance
    s = SASettings(GainSchedule(0.05), theta0=(0.5, -0.5))
    rep = adis_run(_unit_model(2), s, variant, 20000, NormalStream(2, 3))
    assert rep.covers(1.0) or rep.degenerate
    assert abs(rep.estimate - 1.0) <= 3 * rep.std_error + 1e-12


def test_nadis_unit_payoff():
    for plug_in in ("raw", "avg"):
        rep = nadis_run(_unit_model(), SASettings(GainSchedule(0.05), theta0=(0.4,)), 20000, NormalStream(1, 4), plug_in)
        assert abs(rep.estimate - 1.0) <= 3 * rep.std_error


@pytest.mark.parametrize(
    "variant,expected", [("xi2", 10000), ("xi1", 20000), ("xi1_avg", 20000), ("xi2_avg", 20000)]
)
def test_evaluation_counts(call_model, variant, expected):
    rep = adis_run(call_model, SASettings(GainSchedule(0.01)), variant, 10000, NormalStream(1, 1))
    assert rep.payoff_evals == expected
    assert call_model.evaluations == expected


def test_nadis_and_crude_counts(call_model):
    assert nadis_run(call_model, SASettings(), 10000, NormalStream(1, 1)).payoff_evals == 20000
    assert crude_run(call_model, 10000, NormalStream(1, 1)).payoff_evals == 30000 - 20000


def test_nadis_freezes_theta(call_model):
    rows = []
    rep = nadis_run(
        call_model, SASettings(GainSchedule(0.01)), 5000, NormalStream(1, 6), trace=rows.append, trace_every=100
    )
    assert [r.iter for r in rows] == list(range(100, 5001, 100))
    assert {r.theta_norm for r in rows} == {abs(rep.theta_final[0])}
    assert [r.payoff_evals for r in rows] == [5000 + r.iter for r in rows]


def test_zero_gain_equals_crude(call_model):
    crude = crude_run(call_model, 30000, NormalStream(1, 12))
    for variant in VARIANTS:
        if variant.startswith("xi1"):
            continue  # xi1 draws the same noise but shares nothing else
        rep = adis_run(call_model, SASettings(GainSchedule(0.0)), variant, 30000, NormalStream(1, 12))
        assert rep.estimate == pytest.approx(crude.estimate, rel=1e-12)
        assert rep.variance == pytest.approx(crude.variance, rel=1e-10)
        assert rep.truncations == 0 and not rep.theta_final.any()


def test_xi1_zero_gain_equals_crude(call_model):
    crude = crude_run(call_model, 30000, NormalStream(1, 12))
    rep = adis_run(call_model, SASettings(GainSchedule(0.0)), "xi1", 30000, NormalStream(1, 12))
    assert rep.estimate == pytest.approx(crude.estimate, rel=1e-12)


def test_determinism(call_model):
    s = SASettings(GainSchedule(0.01))
    a = adis_run(call_model, s, "xi2_avg", 5000, NormalStream(1, 99))
    b = adis_run(call_model, s, "xi2_avg", 5000, NormalStream(1, 99))
    assert a == b
    c = adis_run(call_model, s, "xi2_avg", 5000, NormalStream(1, 99, index=1))
    assert a.estimate != c.estimate


@pytest.mark.parametrize("variant", ["xi2", "xi1_avg", "nadis", "crude"])
def test_batch_rows_equal_single_runs(call_phi, variant):
    s = SASettings(GainSchedule(0.01))

    def run(stream):
        m = GaussianShiftModel(call_phi, None, 1)
        if variant == "nadis":
            return nadis_run(m, s, 3000, stream, "avg")
        if variant == "crude":
            return crude_run(m, 3000, stream)
        return adis_run(m, s, variant, 3000, stream)

    batch = run(replicate_streams(1, 5, 4))
    assert len(batch) == 4
    for r, rep in enumerate(batch):
        assert rep == run(NormalStream(1, 5, r))


def test_trace_rows(call_model):
    rows = []
    adis_run(call_model, SASettings(GainSchedule(0.01)), "xi2", 1050, NormalStream(1, 2), trace=rows.append, trace_every=100)
    assert [r.iter for r in rows] == list(range(100, 1001, 100)) + [1050]
    assert rows[-1].payoff_evals == 1050


def test_unknown_variant(call_model):
    with pytest.raises(ValueError):
        adis_run(call_model, SASettings(), "xi3", 10, NormalStream(1))


def test_bad_theta0():
    with pytest.raises(ValueError):
        SASettings(theta0=(1.0, 2.0)).start(1)
    with pytest.raises(ValueError):
        SASettings(theta0=(50.0,)).start(1)


def test_payoff_failure_is_wrapped():
    calls = {"n": 0}

    def flaky(x):
        calls["n"] += x.shape[0]
        out = np.ones(x.shape[0])
        if calls["n"] > 37:
            out[:] = np.nan
        return out

    with pytest.raises(RunError) as info:
        adis_run(GaussianShiftModel(flaky, None, 1), SASettings(), "xi2", 100, NormalStream(1))
    assert info.value.iteration == 38


def test_sa_finds_call_drift(call_model, call_oracle):
    theta_star = call_oracle[0]
    res = run_sa(call_model, SASettings(GainSchedule(0.001)), 50000, NormalStream(1, 31), "u2", averaged=True)
    assert abs(res.theta[0] - theta_star) < 0.1
    assert abs(res.theta_avg[0] - theta_star) < 0.1


def test_adis_beats_crude_variance(call_model, call_oracle, bs_price):
    rep = adis_run(call_model, SASettings(GainSchedule(0.001)), "xi2", 100000, NormalStream(1, 8))
    crude = crude_run(GaussianShiftModel(call_model.phi, None, 1), 100000, NormalStream(1, 8))
    assert rep.variance < crude.variance / 5
    assert abs(rep.estimate - bs_price) < 4 * rep.std_error
