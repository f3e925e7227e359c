"""At-the-money call on one asset, end to end.

1. the quadrature oracle gives the variance-optimal drift theta* and the
   variance v(theta*) - price^2 the adaptive estimator should reach;
2. crude Monte Carlo and the adaptive estimators run on the same noise;
3. a trace of the coupled estimator is written as CSV for plotting elsewhere.

    python3 demos/call_walkthrough.py [--n 200000] [--trace call_trace.csv]
"""

import argparse
import math

from adaptmc.estimator import SASettings, adis_run, crude_run, nadis_run
from adaptmc.harness import write_trace
from adaptmc.market import BasketCall, MarketModel, bs_call_price
from adaptmc.models import GaussianShiftModel
from adaptmc.oracles import call_problem, quadrature_theta_star, quadrature_v
from adaptmc.rng import NormalStream
from adaptmc.sa import GainSchedule


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--gamma", type=float, default=0.001)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--trace", default=None, help="CSV path for the xi2 trace")
    args = ap.parse_args()

    mm, payoff = MarketModel(100.0, 0.2, 0.05), BasketCall([1.0], 100.0)
    price = bs_call_price(100, 100, 0.05, 0.2, 1)
    phi, kinks = call_problem(mm, payoff)
    theta_star = quadrature_theta_star(phi, breakpoints=kinks)
    v0 = quadrature_v(phi, 0.0, breakpoints=kinks) - price**2
    v_star = quadrature_v(phi, theta_star, breakpoints=kinks) - price**2
    print(f"closed form {price:.6f}")
    print(f"theta* = {theta_star:.6f}: variance {v_star:.3f} against {v0:.3f} without drift "
          f"(ratio {v0 / v_star:.1f})\n")

    settings = SASettings(GainSchedule(args.gamma, 0.75))
    runs = {"crude": lambda m, s: crude_run(m, args.n, s)}
    for variant in ("xi1", "xi2", "xi1_avg", "xi2_avg"):
        runs[variant] = lambda m, s, v=variant: adis_run(m, settings, v, args.n, s)
    for plug in ("raw", "avg"):
        runs[f"nadis_{plug}"] = lambda m, s, p=plug: nadis_run(m, settings, args.n, s, p)

    print(f"{'variant':10s} {'estimate':>10s} {'std err':>8s} {'variance':>9s} {'evals':>8s} {'theta':>7s}")
    for name, run in runs.items():
        rep = run(GaussianShiftModel(phi, None, 1), NormalStream(1, args.seed))
        theta = rep.theta_final[0] if rep.theta_final.size else 0.0
        print(f"{name:10s} {rep.estimate:10.5f} {rep.std_error:8.5f} {rep.variance:9.3f} "
              f"{rep.payoff_evals:8d} {theta:7.4f}")

    if args.trace:
        records = []
        adis_run(GaussianShiftModel(phi, None, 1), settings, "xi2", args.n, NormalStream(1, args.seed),
                 trace=records.append, trace_every=max(1, args.n // 1000))
        write_trace(records, args.trace)
        print(f"\ntrace with {len(records)} rows written to {args.trace}")
    # the crude and adaptive confidence widths scale as sqrt(variance / n)
    print(f"\nsamples crude MC needs to match xi2 at n={args.n}: about {args.n * v0 / v_star:,.0f}"
          f" (error {math.sqrt(v_star / args.n):.4f})")


if __name__ == "__main__":
    main()
