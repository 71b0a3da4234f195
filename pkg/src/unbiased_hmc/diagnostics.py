"""Tuning rules and single-chain / meeting-time diagnostics."""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def quantile_order_statistic(values: Sequence[float], level: float = 0.9):
    """Order statistic at 1-based index ``ceil(level * n)``."""
    v = np.sort(np.asarray(values))
    if v.size == 0:
        raise ValueError("empty sample")
    # exact rational ceiling, so 0.9 * 100 gives 90 and not 91
    frac = Fraction(str(level))
    idx = max(1, -(-frac.numerator * v.size // frac.denominator))
    return v[idx - 1]


def tune_k_m(meeting_times: Sequence[int]) -> tuple[int, int]:
    """``k`` = empirical 90% quantile of the meeting times, ``m = 10 k``."""
    k = int(quantile_order_statistic(meeting_times, 0.9))
    return k, 10 * k


def mixture_inefficiency_bound(gamma: float, n_steps: float, psi: float) -> float:
    """Upper bound on the inefficiency of the gamma-mixture relative to pure HMC.

    ``{1 + gamma / ((1 - gamma)(L + 2))} * {1 + gamma / (1 + psi)}`` where ``psi``
    is the integrated autocorrelation time of the HMC chain.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if not n_steps >= 1:
        raise ValueError(f"L must be >= 1, got {n_steps}")
    if not psi > -1.0:
        raise ValueError(f"psi must be > -1, got {psi}")
    first = 1.0 + gamma / ((1.0 - gamma) * (n_steps + 2.0))
    return first * (1.0 + gamma / (1.0 + psi))


@dataclass
class IACTResult:
    value: float
    degenerate: bool
    lags_used: int


def _autocovariance(x: np.ndarray) -> np.ndarray:
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    return acov / n


def iact_details(series: Sequence[float]) -> IACTResult:
    """Geyer initial positive sequence estimate of the integrated autocorrelation time.

    Sums of adjacent autocorrelation pairs are accumulated while positive.
    A constant series gives ``value = nan`` with ``degenerate = True``.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 10:
        raise ValueError("series must be one-dimensional with at least 10 values")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    acov = _autocovariance(x)
    if not acov[0] > 1e-300 or np.ptp(x) == 0.0:
        return IACTResult(math.nan, True, 0)
    rho = acov / acov[0]
    n_pairs = rho.size // 2
    gamma = rho[0:2 * n_pairs:2] + rho[1:2 * n_pairs:2]
    total = 0.0
    used = 0
    for g in gamma:
        if g <= 0.0:
            break
        total += g
        used += 1
    # tau = -1 + 2 * sum_k Gamma_k
    return IACTResult(max(-1.0 + 2.0 * total, 1.0 / x.size), False, 2 * used)


def iact_estimate(series: Sequence[float]) -> float:
    return iact_details(series).value


def asymptotic_variance(series: Sequence[float]) -> float:
    """Sample variance times the integrated autocorrelation time."""
    x = np.asarray(series, dtype=float)
    res = iact_details(x)
    if res.degenerate:
        return math.nan
    return float(np.var(x, ddof=1)) * res.value


@dataclass
class TailFit:
    rate: float
    r_squared: float
    degenerate: bool
    n_points: int


def meeting_tail_diagnostic(meeting_times: Sequence[int], min_survivors: int = 5) -> TailFit:
    """Geometric-tail check: regress log survival on ``n`` beyond the median.

    Returns ``exp(slope)``, an estimate of the per-iteration tail rate, with the
    R^2 of the fit.  Only support points with at least ``min_survivors``
    samples still alive enter the fit.
    """
    t = np.asarray(meeting_times, dtype=float)
    if t.size < 20:
        raise ValueError("need at least 20 meeting times")
    t = np.sort(t)
    med = float(np.median(t))
    grid = np.unique(t)
    grid = grid[grid >= med]
    # survival P(tau > n) evaluated at observed support points
    surv_counts = t.size - np.searchsorted(t, grid, side="right")
    keep = surv_counts >= min_survivors
    n, s = grid[keep], surv_counts[keep] / t.size
    if n.size < 2:
        return TailFit(math.nan, math.nan, True, int(n.size))
    logs = np.log(s)
    slope, intercept = np.polyfit(n, logs, 1)
    resid = logs - (slope * n + intercept)
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else math.nan
    return TailFit(float(math.exp(slope)), r2, False, int(n.size))


@dataclass
class BaselineRow:
    name: str
    mean: float
    variance: float
    iact: float
    asymptotic_variance: float
    degenerate: bool


def variance_baseline_table(samples: np.ndarray, names: Sequence[str]) -> list[BaselineRow]:
    """Per-column mean, variance, IACT and asymptotic variance of a chain's h values."""
    samples = np.asarray(samples, dtype=float)
    rows = []
    for j, name in enumerate(names):
        col = samples[:, j]
        res = iact_details(col)
        var = float(np.var(col, ddof=1))
        asym = math.nan if res.degenerate else var * res.value
        rows.append(BaselineRow(name, float(np.mean(col)), var, res.value, asym, res.degenerate))
    return rows
