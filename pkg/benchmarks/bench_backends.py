"""Wall-clock comparison of the compiled core against the pure-Python path.

    python benchmarks/bench_backends.py [--replicates 50] [--repeat 1]

Both backends produce bitwise identical output, which is checked here too.
"""

import argparse
import time

import numpy as np

from unbiased_hmc import targets as T
from unbiased_hmc._backend import native_available
from unbiased_hmc.estimator import EstimatorConfig, independent_uniform_init
from unbiased_hmc.kernels import KernelConfig, run_chain
from unbiased_hmc.replication import run_replicates


def cases():
    yield ("gaussian d=1, defaults", T.standard_normal_target(1), KernelConfig(),
           EstimatorConfig(50, 500, 10**5), None)
    yield ("gaussian d=100", T.standard_normal_target(100),
           KernelConfig(step_size=100 ** -0.25, leapfrog_steps=4), EstimatorConfig(30, 300, 10**5), None)
    yield ("rosenbrock kappa=1", T.rosenbrock_target(),
           KernelConfig(step_size=1 / 500, leapfrog_steps=500, momentum_coupling=1.0),
           EstimatorConfig(0, 50, 10**5), independent_uniform_init(-5.0, 5.0))


def best_of(repeat, fn):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicates", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=1)
    args = ap.parse_args(argv)
    if not native_available():
        print("compiled core not built; nothing to compare")
        return 1

    print(f"{'case':<28}{'python s':>11}{'native s':>11}{'speedup':>10}  identical")
    for name, target, kcfg, ecfg, init in cases():
        n = args.replicates if target.dim < 50 else max(1, args.replicates // 5)

        def go(backend):
            return run_replicates(1, n, target, kcfg, ecfg, initial=init, backend=backend)

        tp, sp = best_of(args.repeat, lambda: go("python"))
        tn, sn = best_of(args.repeat, lambda: go("native"))
        print(f"{name + f' (R={n})':<28}{tp:>11.3f}{tn:>11.3f}{tp / tn:>9.1f}x  {sp.to_json() == sn.to_json()}")

    target = T.standard_normal_target(10)
    cfg = KernelConfig(step_size=0.2, leapfrog_steps=10)
    x0 = np.zeros(10)
    tp, a = best_of(args.repeat, lambda: run_chain(np.random.default_rng(0), x0, target, cfg, 5000, backend="python"))
    tn, b = best_of(args.repeat, lambda: run_chain(np.random.default_rng(0), x0, target, cfg, 5000, backend="native"))
    print(f"{'single chain d=10, 5000 it':<28}{tp:>11.3f}{tn:>11.3f}{tp / tn:>9.1f}x  {a.tobytes() == b.tobytes()}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
