"""Command-line experiment runner.

Subcommands: ``estimate``, ``scan``, ``meetings``, ``variance-baseline`` and
``tune``.  Each writes plot-ready files into ``--out``; CSV files start with
a ``# config_sha256=...`` comment line followed by a header row.

Exit codes: 0 success, 2 configuration error, 3 too many unmet runs.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .couplings import coupled_hmc_step
from .diagnostics import meeting_tail_diagnostic, variance_baseline_table
from .estimator import TestFunctionSet
from .kernels import run_chain
from .replication import _map_ordered, preliminary_tuning, run_meetings, run_replicates
from .rng import replicate_streams, splitmix64

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNMET = 3


class UnmetBudgetExceeded(RuntimeError):
    pass


def _num(v):
    """JSON-safe float: non-finite values become None."""
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _cell(v) -> str:
    """Shortest round-tripping text of a float."""
    return repr(float(v))


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _csv_writer(fh, cfg: ExperimentConfig):
    fh.write(f"# config_sha256={cfg.sha256()}\n")
    return csv.writer(fh, lineterminator="\n")


def _setup(cfg: ExperimentConfig):
    target = cfg.build_target()
    mass = cfg.mass_matrix(target)
    try:
        kernel = cfg.kernel_config(mass)
    except ValueError as exc:
        raise ConfigError(f"kernel: {exc}") from None
    return target, kernel, cfg.initial(target)


def _out_dir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_tune(cfg: ExperimentConfig) -> dict:
    target, kernel, initial = _setup(cfg)
    try:
        k, m, taus, unmet = preliminary_tuning(cfg.seed, cfg.tuning_runs, target, kernel,
                                               cfg.cap, initial, threads=cfg.threads)
    except RuntimeError as exc:
        raise UnmetBudgetExceeded(str(exc)) from None
    m = cfg.m_multiplier * k
    payload = {"config_sha256": cfg.sha256(), "k": k, "m": m, "tuning_runs": cfg.tuning_runs,
               "unmet": unmet, "meeting_times": taus,
               "median_tau": float(np.median(taus)), "mean_tau": float(np.mean(taus))}
    if len(taus) >= 20:
        fit = meeting_tail_diagnostic(taus)
        payload["tail_rate"] = _num(fit.rate)
        payload["tail_r_squared"] = _num(fit.r_squared)
        payload["tail_degenerate"] = fit.degenerate
    _write_json(_out_dir(cfg) / "tune.json", payload)
    return payload


def _resolve_km(cfg, target, kernel, initial):
    info = {}
    k, m = cfg.k, cfg.m
    if k == "auto":
        try:
            k_t, _, taus, unmet = preliminary_tuning(cfg.seed, cfg.tuning_runs, target, kernel,
                                                     cfg.cap, initial, threads=cfg.threads)
        except RuntimeError as exc:
            raise UnmetBudgetExceeded(str(exc)) from None
        k = k_t
        info = {"tuning_runs": cfg.tuning_runs, "tuning_unmet": unmet,
                "tuning_meeting_times": taus}
    if m == "auto":
        m = cfg.m_multiplier * k
    if m < k:
        raise ConfigError(f"m: must be >= k={k}, got {m}")
    return int(k), int(m), info


def cmd_estimate(cfg: ExperimentConfig) -> dict:
    target, kernel, initial = _setup(cfg)
    k, m, info = _resolve_km(cfg, target, kernel, initial)
    est_cfg = cfg.estimator_config(k, m)
    h_set = TestFunctionSet.moments(target.dim)
    summary = run_replicates(cfg.seed, cfg.replicates, target, kernel, est_cfg, h_set, initial,
                             threads=cfg.threads, streaming=cfg.streaming)
    out = _out_dir(cfg)
    payload = summary.to_dict()
    for key in ("mean", "variance", "std_error", "ci95_low", "ci95_high", "inefficiency"):
        if payload[key] is not None:
            payload[key] = [_num(v) for v in payload[key]]
    payload["mean_cost"] = _num(payload["mean_cost"])
    payload["total_inefficiency"] = _num(payload["total_inefficiency"])
    payload.update(info)
    payload["config_sha256"] = cfg.sha256()
    payload["config"] = cfg.semantic_items()
    payload["unmet_replicates"] = [r.replicate for r in summary.records if not r.met]
    exact = h_set.analytic_values(target)
    if exact is not None:
        payload["analytic"] = [float(v) for v in exact]
        if summary.ci_low is not None:
            payload["ci_covers_analytic"] = [bool(lo <= e <= hi) for lo, e, hi
                                             in zip(summary.ci_low, exact, summary.ci_high)]
    _write_json(out / "estimate_summary.json", payload)
    with open(out / "estimate_replicates.csv", "w", newline="") as fh:
        w = _csv_writer(fh, cfg)
        w.writerow(["replicate", "tau", "cost"] + [f"h_{i + 1}" for i in range(len(h_set))])
        for rec in summary.records:
            if rec.met:
                w.writerow([rec.replicate, rec.meeting_time, rec.cost]
                           + [_cell(v) for v in rec.estimate])
            else:
                w.writerow([rec.replicate, "", ""] + [""] * len(h_set))
    if summary.unmet > cfg.unmet_budget:
        raise UnmetBudgetExceeded(
            f"{summary.unmet} of {summary.replicates} runs hit the cap of {cfg.cap} iterations "
            f"(budget {cfg.unmet_budget})")
    return payload


def scan_distance(cfg: ExperimentConfig, target, kernel, initial, step_size: float,
                  n_steps: int) -> tuple[float, float]:
    """Mean initial and terminal |X - Y| over ``scan_pairs`` coupled HMC pairs."""
    kc = cfg.kernel_config(kernel.mass, step_size=step_size, leapfrog_steps=n_steps)
    d0, d1 = [], []
    for pair in range(cfg.scan_pairs):
        streams = replicate_streams(cfg.seed, pair)
        x, y = initial(streams.main, target.dim)
        d0.append(float(np.linalg.norm(x - y)))
        for _ in range(cfg.scan_iterations):
            x, y = coupled_hmc_step(streams, x, y, target, kc)
        d1.append(float(np.linalg.norm(x - y)))
    return math.fsum(d0) / len(d0), math.fsum(d1) / len(d1)


def cmd_scan(cfg: ExperimentConfig) -> list[tuple]:
    target, kernel, initial = _setup(cfg)
    grid = [(e, n) for e in cfg.eps_grid for n in cfg.l_grid]
    results = _map_ordered(lambda g: scan_distance(cfg, target, kernel, initial, *g),
                           grid, cfg.threads)
    rows = [(e, n, e * n, d0, d1) for (e, n), (d0, d1) in zip(grid, results)]
    with open(_out_dir(cfg) / "scan.csv", "w", newline="") as fh:
        w = _csv_writer(fh, cfg)
        w.writerow(["step_size", "leapfrog_steps", "integration_time",
                    "mean_initial_distance", "mean_distance"])
        for e, n, t, d0, d1 in rows:
            w.writerow([_cell(e), n, _cell(t), _cell(d0), _cell(d1)])
    return rows


def cmd_meetings(cfg: ExperimentConfig) -> list:
    target, kernel, initial = _setup(cfg)
    recs = run_meetings(cfg.seed, cfg.n_meetings, target, kernel, cfg.cap, initial,
                        threads=cfg.threads)
    L = kernel.leapfrog_steps
    with open(_out_dir(cfg) / "meetings.csv", "w", newline="") as fh:
        w = _csv_writer(fh, cfg)
        w.writerow(["pair", "tau", "met", "cost", "gradient_cost"])
        for r in recs:
            if r.meeting_time is None:
                w.writerow([r.replicate, "", 0, "", ""])
            else:
                tau = r.meeting_time
                w.writerow([r.replicate, tau, 1, 2 * (tau - 1) + 1, (L + 2) * tau])
    unmet = sum(r.meeting_time is None for r in recs)
    if unmet > cfg.unmet_budget:
        raise UnmetBudgetExceeded(f"{unmet} of {len(recs)} pairs hit the cap of {cfg.cap}")
    return recs


def baseline_chain(cfg: ExperimentConfig, target, kernel, initial):
    """HMC-only chain values of the moment functions after burn-in."""
    kc = cfg.kernel_config(
        kernel.mass,
        step_size=cfg.baseline_step_size or cfg.step_size,
        leapfrog_steps=cfg.baseline_leapfrog_steps or cfg.leapfrog_steps,
        mixture_weight=0.0, allow_degenerate_mixture=True, momentum_coupling=0.0)
    seed = splitmix64(cfg.seed ^ 0x62617365)  # "base"
    streams = replicate_streams(seed, 0)
    x0, _ = initial(streams.main, target.dim)
    states = run_chain(streams.main, x0, target, kc,
                       cfg.baseline_burn_in + cfg.baseline_iterations)
    kept = states[cfg.baseline_burn_in + 1:]
    return np.hstack([kept, kept * kept]), kc


def cmd_variance_baseline(cfg: ExperimentConfig):
    target, kernel, initial = _setup(cfg)
    values, kc = baseline_chain(cfg, target, kernel, initial)
    rows = variance_baseline_table(values, TestFunctionSet.moments(target.dim).names)
    with open(_out_dir(cfg) / "variance_baseline.csv", "w", newline="") as fh:
        w = _csv_writer(fh, cfg)
        w.writerow(["h", "mean", "variance", "iact", "asymptotic_variance", "degenerate"])
        for r in rows:
            w.writerow([r.name, _cell(r.mean), _cell(r.variance), _cell(r.iact),
                        _cell(r.asymptotic_variance), int(r.degenerate)])
        total = math.fsum(r.asymptotic_variance for r in rows)
        w.writerow(["total", "", "", "", _cell(total), int(any(r.degenerate for r in rows))])
    return rows


COMMANDS = {
    "estimate": cmd_estimate,
    "scan": cmd_scan,
    "meetings": cmd_meetings,
    "variance-baseline": cmd_variance_baseline,
    "tune": cmd_tune,
}


# ---------------------------------------------------------------------------
# argument handling


def _key_value(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
    common.add_argument("--out", help="output directory")
    common.add_argument("--replicates", type=int, help="number of coupled pairs R")
    common.add_argument("--cap", type=int, help="iteration cap per coupled run")
    common.add_argument("--set", dest="overrides", action="append", type=_key_value,
                        default=[], metavar="KEY=VALUE", help="override any config key")
    parser = argparse.ArgumentParser(prog="unbiased-hmc", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = list(args.overrides)
    for flag in ("seed", "threads", "out", "replicates", "cap"):
        value = getattr(args, flag)
        if value is not None:
            overrides.append((flag, str(value)))
    try:
        cfg = load_config(args.config, overrides)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnmetBudgetExceeded as exc:
        print(f"unmet runs: {exc}", file=sys.stderr)
        return EXIT_UNMET
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
