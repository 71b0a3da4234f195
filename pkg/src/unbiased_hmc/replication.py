"""Independent replicates of coupled runs and their aggregation.

Replicate ``r`` is driven by streams derived from ``(master_seed, r)`` only, and
results are reduced in replicate order with compensated summation, so a
summary does not depend on how many workers produced it.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diagnostics import tune_k_m
from .estimator import (
    EstimatorConfig,
    TestFunctionSet,
    estimate,
    run_coupled,
    run_cost,
)
from .kernels import KernelConfig
from .rng import replicate_streams, tuning_seed

Z_95 = 1.959963984540054


@dataclass
class ReplicateRecord:
    replicate: int
    meeting_time: int | None
    cost: int | None
    estimate: np.ndarray | None
    iterations: int

    @property
    def met(self) -> bool:
        return self.meeting_time is not None


@dataclass
class ReplicationSummary:
    names: list[str]
    mean: np.ndarray
    variance: np.ndarray | None
    std_error: np.ndarray | None
    ci_low: np.ndarray | None
    ci_high: np.ndarray | None
    mean_cost: float
    inefficiency: np.ndarray | None
    total_inefficiency: float | None
    meeting_times: list[int]
    unmet: int
    replicates: int
    k: int
    m: int
    records: list[ReplicateRecord] = field(default_factory=list, repr=False)

    @property
    def n_met(self) -> int:
        return self.replicates - self.unmet

    def to_dict(self) -> dict:
        def arr(v):
            return None if v is None else [float(x) for x in v]
        return {
            "R": self.replicates,
            "k": self.k,
            "m": self.m,
            "unmet": self.unmet,
            "h": self.names,
            "mean": arr(self.mean),
            "variance": arr(self.variance),
            "std_error": arr(self.std_error),
            "ci95_low": arr(self.ci_low),
            "ci95_high": arr(self.ci_high),
            "mean_cost": self.mean_cost,
            "inefficiency": arr(self.inefficiency),
            "total_inefficiency": self.total_inefficiency,
            "meeting_times": list(self.meeting_times),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True)

    def write_json(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    def write_csv(self, path, header_comment: str | None = None):
        """Per-replicate table: replicate, tau, cost, h_1..h_K (unmet rows left blank)."""
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["replicate", "tau", "cost"] + [f"h_{i + 1}" for i in range(len(self.names))])
            for rec in self.records:
                if rec.met:
                    w.writerow([rec.replicate, rec.meeting_time, rec.cost]
                               + [repr(float(v)) for v in rec.estimate])
                else:
                    w.writerow([rec.replicate, "", ""] + [""] * len(self.names))


def _fsum_columns(rows: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(rows[:, j]) for j in range(rows.shape[1])])


def summarize(records: Sequence[ReplicateRecord], names: list[str], k: int, m: int) -> ReplicationSummary:
    """Aggregate replicate records (already in replicate order)."""
    met = [r for r in records if r.met]
    K = len(names)
    taus = [r.meeting_time for r in met]
    if not met:
        nan = np.full(K, math.nan)
        return ReplicationSummary(names, nan, None, None, None, None, math.nan, None, None,
                                  [], len(records), len(records), k, m, list(records))
    est = np.array([r.estimate for r in met], dtype=float).reshape(len(met), K)
    R = len(met)
    mean = _fsum_columns(est) / R
    mean_cost = math.fsum(r.cost for r in met) / R
    if R >= 2:
        var = _fsum_columns((est - mean) ** 2) / (R - 1)
        se = np.sqrt(var / R)
        lo, hi = mean - Z_95 * se, mean + Z_95 * se
        ineff = mean_cost * var
        total = math.fsum(ineff)
    else:
        var = se = lo = hi = ineff = None
        total = None
    return ReplicationSummary(names, mean, var, se, lo, hi, mean_cost, ineff, total, taus,
                              len(records) - R, len(records), k, m, list(records))


def _replicate_worker(master_seed, target, kernel_cfg, est_cfg, h_set, initial, backend, streaming):
    def run(r: int) -> ReplicateRecord:
        run_ = run_coupled(replicate_streams(master_seed, r), target, kernel_cfg, est_cfg,
                           h_set, initial, streaming=streaming, backend=backend)
        if not run_.met:
            return ReplicateRecord(r, None, None, None, run_.iterations_run)
        return ReplicateRecord(r, run_.meeting_time, run_cost(run_, est_cfg.m),
                               estimate(run_, est_cfg.k, est_cfg.m), run_.iterations_run)
    return run


def _map_ordered(fn, indices, threads):
    if threads is None or threads <= 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(fn, indices))


def run_replicates(master_seed: int, R: int, target, kernel_cfg: KernelConfig,
                   est_cfg: EstimatorConfig, h_set: TestFunctionSet | None = None,
                   initial=None, *, threads: int = 1, backend: str | None = None,
                   streaming: bool = False) -> ReplicationSummary:
    """Run ``R`` independent coupled pairs and summarise ``H_{k:m}`` over them."""
    if R < 1:
        raise ValueError("R must be >= 1")
    h_set = TestFunctionSet.moments(target.dim) if h_set is None else h_set
    fn = _replicate_worker(master_seed, target, kernel_cfg, est_cfg, h_set, initial,
                           backend, streaming)
    records = _map_ordered(fn, range(R), threads)
    return summarize(records, list(h_set.names), est_cfg.k, est_cfg.m)


@dataclass
class MeetingRecord:
    replicate: int
    meeting_time: int | None
    iterations: int


def run_meetings(master_seed: int, n: int, target, kernel_cfg: KernelConfig, cap: int,
                 initial=None, *, threads: int = 1, backend: str | None = None) -> list[MeetingRecord]:
    """Meeting times of ``n`` independent pairs, without any post-meeting iterations."""
    cfg = EstimatorConfig(0, 0, cap)

    def run(r):
        run_ = run_coupled(replicate_streams(master_seed, r), target, kernel_cfg, cfg,
                           None, initial, backend=backend)
        return MeetingRecord(r, run_.meeting_time, run_.iterations_run)
    return _map_ordered(run, range(n), threads)


def preliminary_tuning(master_seed: int, n_runs: int, target, kernel_cfg: KernelConfig,
                       cap: int, initial=None, *, threads: int = 1,
                       backend: str | None = None) -> tuple[int, int, list[int], int]:
    """Choose ``(k, m)`` from a preliminary batch of meeting times.

    The batch uses seeds derived from ``master_seed`` but disjoint from the
    main replicates.  Returns ``(k, m, meeting_times, unmet)``.
    """
    recs = run_meetings(tuning_seed(master_seed), n_runs, target, kernel_cfg, cap, initial,
                        threads=threads, backend=backend)
    taus = [r.meeting_time for r in recs if r.meeting_time is not None]
    if not taus:
        raise RuntimeError("no preliminary run met before the cap; cannot tune k and m")
    k, m = tune_k_m(taus)
    return k, m, taus, len(recs) - len(taus)
