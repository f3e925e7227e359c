"""Exponential tilting of an Exp(1) variable.

Tilting by theta < 1 turns Exp(1) into Exp(1 - theta), with weight
exp(-theta x + psi(theta)), psi(theta) = log(1 / (1 - theta)). The first part
checks that the mean is still 1 at theta = 0.5. The second estimates the tail
probability P(X > a) = exp(-a) for several tilts; the variance is smallest
near theta = 1 - 1/a, where the tilted mean sits at the threshold.

    python3 demos/esscher_exponential.py [--n 100000] [--threshold 8]
"""

import argparse
import math

import numpy as np

from adaptmc.models import exponential_esscher
from adaptmc.rng import NormalStream


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--threshold", type=float, default=8.0)
    ap.add_argument("--seed", type=int, default=13)
    args = ap.parse_args()
    g = NormalStream(1, args.seed).draw(args.n)

    mean = exponential_esscher(lambda x: x[:, 0]).h(np.full((args.n, 1), 0.5), g)
    print(f"E[X] at theta=0.5: {mean.mean():.5f} +- {mean.std() / math.sqrt(args.n):.5f}\n")

    a = args.threshold
    tail = exponential_esscher(lambda x: (x[:, 0] > a).astype(float))
    exact = math.exp(-a)
    print(f"P(X > {a:g}) = {exact:.4e}")
    print(f"{'theta':>6s} {'estimate':>11s} {'rel err':>8s} {'variance':>10s}")
    for theta in (0.0, 0.5, 0.75, 1 - 1 / a, 0.95):
        h = tail.h(np.full((args.n, 1), theta), g)
        print(f"{theta:6.3f} {h.mean():11.4e} {abs(h.mean() / exact - 1):8.4f} {h.var():10.3e}")


if __name__ == "__main__":
    main()
