"""Full relative-inefficiency table for the German credit logistic model.

    python scripts/logistic_table.py data/german.data-numeric [--replicates 1000] [--threads 4]

Long-running (hours on one core at R=1000); not part of the test suite.
Rows pair k in {1, median, 90% quantile} with m in {k, 5k, 10k}; the
median and quantile come from 100 preliminary meeting times.  The
baseline is an HMC-only chain with (eps, L) = (0.03, 10).
"""

import argparse
import math

import numpy as np

from unbiased_hmc import targets as T
from unbiased_hmc.diagnostics import iact_estimate, quantile_order_statistic
from unbiased_hmc.estimator import EstimatorConfig, independent_gaussian_init
from unbiased_hmc.kernels import KernelConfig, run_chain
from unbiased_hmc.replication import preliminary_tuning, run_replicates


def baseline_variance(target, seed, iterations=10_000, burn_in=1000):
    cfg = KernelConfig(step_size=0.03, leapfrog_steps=10, mixture_weight=0.0,
                       allow_degenerate_mixture=True)
    rng = np.random.default_rng(seed)
    states = run_chain(rng, rng.standard_normal(target.dim), target, cfg,
                       burn_in + iterations)[burn_in + 1:]
    values = np.hstack([states, states * states])
    return math.fsum(float(np.var(c, ddof=1)) * iact_estimate(c) for c in values.T)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("data")
    ap.add_argument("--replicates", type=int, default=1000)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args(argv)

    target = T.logistic_target(T.load_german_credit(args.data, T.HierarchicalPrior(0.01)))
    cfg = KernelConfig(step_size=0.0125, leapfrog_steps=10, rwmh_scale=1e-3, mixture_weight=1 / 20)
    init = independent_gaussian_init(0.0, 1.0)
    _, _, taus, _ = preliminary_tuning(args.seed, 100, target, cfg, 10**5, init, threads=args.threads)
    v = baseline_variance(target, args.seed)
    print(f"baseline sum of asymptotic variances: {v:.4g}")

    rules = {"1": 1, "median": quantile_order_statistic(taus, 0.5),
             "q90": quantile_order_statistic(taus, 0.9)}
    print(f"{'k':>8} {'m':>6} {'cost':>8} {'variance':>10} {'rel. ineff.':>12}")
    for label, k in rules.items():
        for mult in (1, 5, 10):
            s = run_replicates(args.seed, args.replicates, target, cfg,
                               EstimatorConfig(k, mult * k, 10**5), initial=init,
                               threads=args.threads)
            var = float(np.sum(s.variance))
            print(f"{label:>8} {mult:>5}k {s.mean_cost:>8.0f} {var:>10.2e} "
                  f"{s.total_inefficiency / v:>12.2f}")


if __name__ == "__main__":
    main()
