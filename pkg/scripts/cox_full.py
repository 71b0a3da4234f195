"""Full-scale log-Gaussian Cox runs: R=1000 replicates for d in {256, 1024, 4096}.

    python scripts/cox_full.py [--pines data/pines.txt] [--threads 4] [--replicates 1000]

Long-running (days on one core for d=4096); not part of the test suite.
Each configuration is passed to the ``estimate`` command, so results land
in ``<out>/<label>/estimate_summary.json``.  Without a pines file the
counts are simulated from the prior with 126 points in total.
"""

import argparse
import sys

from unbiased_hmc import cli

# (grid side, step size) with L = 10 throughout
HMC = [(16, 0.11), (32, 0.15), (64, 0.17)]
METRIC = [(16, 0.11), (32, 0.11), (64, 0.13)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pines", default="")
    ap.add_argument("--replicates", type=int, default=1000)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="out/cox")
    ap.add_argument("--only", choices=["hmc", "metric"])
    args = ap.parse_args(argv)

    runs = []
    if args.only != "metric":
        runs += [("hmc", "identity", n, eps) for n, eps in HMC]
    if args.only != "hmc":
        runs += [("metric", "cox_metric", n, eps) for n, eps in METRIC]
    status = 0
    for label, mass, n, eps in runs:
        name = f"{label}_d{n * n}"
        sets = ["target=cox", f"grid_side={n}", f"data_path={args.pines}", f"mass={mass}",
                f"step_size={eps}", "leapfrog_steps=10", "init=prior"]
        argv = ["estimate", "--replicates", str(args.replicates), "--threads", str(args.threads),
                "--out", f"{args.out}/{name}"]
        for s in sets:
            argv += ["--set", s]
        print(f"{name}: eps={eps} L=10 mass={mass}", flush=True)
        status = max(status, cli.main(argv))
    return status


if __name__ == "__main__":
    sys.exit(main())
