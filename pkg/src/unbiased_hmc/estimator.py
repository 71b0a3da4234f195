"""Coupled-chain runs and the unbiased estimators built from them.

A run draws ``(X_0, Y_0)``, advances ``X`` once with the marginal mixture
kernel and then applies the coupled mixture to ``(X_n, Y_{n-1})`` until
``n = max(m, tau)``, where ``tau`` is the first ``n`` with ``X_n == Y_{n-1}``.
Only test-function values are stored, never full states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _backend
from .couplings import CoupledState, coupled_mixture_step, same_state
from .kernels import KernelConfig, mixture_step
from .rng import as_streams


class TestFunctionSet:
    """Ordered, named test functions evaluated together on a state vector."""

    __test__ = False  # not a pytest class

    def __init__(self, functions: Sequence[tuple[str, Callable]] | None = None, *,
                 moments_dim: int | None = None):
        if moments_dim is not None:
            self.names = ([f"x{i + 1}" for i in range(moments_dim)]
                          + [f"x{i + 1}^2" for i in range(moments_dim)])
            self._functions = None
            self.moments_dim = int(moments_dim)
        else:
            if not functions:
                raise ValueError("at least one test function is required")
            self.names = [name for name, _ in functions]
            self._functions = [fn for _, fn in functions]
            self.moments_dim = None

    @classmethod
    def moments(cls, dim: int) -> "TestFunctionSet":
        """``h_i(x) = x_i`` followed by ``h_{d+i}(x) = x_i^2``."""
        return cls(moments_dim=dim)

    @property
    def is_moments(self) -> bool:
        return self.moments_dim is not None

    def __len__(self):
        return len(self.names)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self._functions is None:
            return np.concatenate([x, x * x])
        return np.array([float(fn(x)) for fn in self._functions])

    def analytic_values(self, target):
        """Exact ``pi(h)`` for the moment set when the target knows its moments."""
        if not self.is_moments or target.analytic_moments is None:
            return None
        am = target.analytic_moments
        return np.concatenate([am.mean, am.second_moment])


@dataclass(frozen=True)
class EstimatorConfig:
    burn_in: int = 0
    horizon: int = 0
    max_iterations: int = 10**5

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in k must be non-negative")
        if self.horizon < self.burn_in:
            raise ValueError(f"horizon m={self.horizon} must be >= burn_in k={self.burn_in}")
        if self.max_iterations < max(self.horizon, 1):
            raise ValueError(f"max_iterations={self.max_iterations} must be >= horizon m={self.horizon}")

    @property
    def k(self) -> int:
        return self.burn_in

    @property
    def m(self) -> int:
        return self.horizon


@dataclass
class CoupledRun:
    """Test-function record of one coupled pair.

    ``h_values_x[n]`` is ``h(X_n)`` for ``n = 0..max(m, tau)`` and
    ``h_values_y[j]`` is ``h(Y_j)`` for ``j = 0..tau-2``.  ``meeting_time``
    is ``None`` when the iteration cap was hit first.
    """
    h_values_x: np.ndarray | None
    h_values_y: np.ndarray | None
    meeting_time: int | None
    iterations_run: int
    cost_coupled: int
    cost_single: int
    horizon: int
    streamed: np.ndarray | None = None
    streamed_km: tuple[int, int] | None = None

    @property
    def met(self) -> bool:
        return self.meeting_time is not None


class _Streaming:
    """Online accumulation of H_{k:m} for fixed (k, m)."""

    def __init__(self, k, m, size):
        self.k, self.m = k, m
        self.avg = np.zeros(size)
        self.corr = np.zeros(size)

    def add_x(self, n, hx):
        if self.k <= n <= self.m:
            self.avg += hx

    def add_pair(self, n, hx, hy_prev):
        # correction term for index n: h(X_n) - h(Y_{n-1}), only while n < tau
        if n >= self.k + 1:
            w = min(1.0, (n - self.k) / (self.m - self.k + 1))
            self.corr += w * (hx - hy_prev)

    def value(self):
        return self.avg / (self.m - self.k + 1) + self.corr


def independent_gaussian_init(mean=0.0, scale=1.0):
    """Initial coupling drawing ``X_0`` and ``Y_0`` independently from N(mean, scale^2 I)."""
    def draw(rng, dim):
        x0 = mean + scale * rng.standard_normal(dim)
        y0 = mean + scale * rng.standard_normal(dim)
        return np.asarray(x0, dtype=float), np.asarray(y0, dtype=float)
    draw.description = f"independent N({mean}, {scale}^2 I)"
    return draw


def independent_uniform_init(low, high):
    def draw(rng, dim):
        return rng.uniform(low, high, dim), rng.uniform(low, high, dim)
    draw.description = f"independent U[{low}, {high}]^d"
    return draw


def _native_ok(target, kernel_cfg, h_set, streaming):
    return (_backend.native_available() and not streaming
            and target.native_spec() is not None
            and kernel_cfg.mass.is_identity and h_set.is_moments
            and h_set.moments_dim == target.dim)


def run_coupled(rng, target, kernel_cfg: KernelConfig, est_cfg: EstimatorConfig,
                h_set: TestFunctionSet | None = None, initial=None, *,
                streaming: bool = False, backend: str | None = None) -> CoupledRun:
    """Simulate one coupled pair up to ``max(m, tau)`` iterations (or the cap)."""
    streams = as_streams(rng)
    h_set = TestFunctionSet.moments(target.dim) if h_set is None else h_set
    initial = independent_gaussian_init() if initial is None else initial
    x0, y0 = initial(streams.main, target.dim)
    m, cap = est_cfg.horizon, est_cfg.max_iterations
    use_native = _backend.resolve(backend) == "native" and _native_ok(
        target, kernel_cfg, h_set, streaming)
    if use_native:
        return _backend.run_coupled_native(streams, target, kernel_cfg, x0, y0, m, cap)
    if streaming:
        acc = _Streaming(est_cfg.burn_in, m, len(h_set))

    hx0, hy0 = h_set(x0), h_set(y0)
    x = mixture_step(streams.main, x0, target, kernel_cfg).new_state
    hx1 = h_set(x)
    if streaming:
        acc.add_x(0, hx0)
        acc.add_x(1, hx1)
    else:
        hx_list = [hx0, hx1]
        hy_list = []
    tau = None
    if same_state(x, y0):
        tau = 1
    elif streaming:
        acc.add_pair(1, hx1, hy0)
    else:
        hy_list.append(hy0)
    state = CoupledState(x, y0, tau is not None, 1)
    cost_coupled, cost_single = 0, 1
    n = 1
    while tau is None or n < m:
        if tau is None and n >= cap:
            break
        if tau is None:
            state = coupled_mixture_step(streams, state, target, kernel_cfg)
            cost_coupled += 1
            hx = h_set(state.x)
            if state.met:
                tau = n + 1
            else:
                hy = h_set(state.y)
                if streaming:
                    acc.add_pair(n + 1, hx, hy)
                else:
                    hy_list.append(hy)
        else:
            x = mixture_step(streams.main, state.x, target, kernel_cfg).new_state
            state = CoupledState(x, x, True, n + 1)
            cost_single += 1
            hx = h_set(x)
        n += 1
        if streaming:
            acc.add_x(n, hx)
        else:
            hx_list.append(hx)

    size = len(h_set)
    if streaming:
        return CoupledRun(None, None, tau, n, cost_coupled, cost_single, m,
                          acc.value() if tau is not None else None,
                          (est_cfg.burn_in, m))
    hx_arr = np.array(hx_list).reshape(-1, size)
    hy_arr = np.array(hy_list).reshape(-1, size)
    return CoupledRun(hx_arr, hy_arr, tau, n, cost_coupled, cost_single, m)


def _check_run(run: CoupledRun, last_index: int):
    if not run.met:
        raise ValueError("run did not meet before the iteration cap; no unbiased estimate")
    if run.h_values_x is None:
        raise ValueError("run was recorded in streaming mode; stored values unavailable")
    if last_index > run.h_values_x.shape[0] - 1:
        raise ValueError(
            f"index {last_index} beyond the recorded horizon {run.h_values_x.shape[0] - 1}")


def _select(values, h_index):
    return values if h_index is None else values[..., h_index]


def h_k(run: CoupledRun, k: int, h_index: int | None = None):
    """``h(X_k) + sum_{n=k+1}^{tau-1} {h(X_n) - h(Y_{n-1})}``."""
    _check_run(run, k)
    tau = run.meeting_time
    hx, hy = run.h_values_x, run.h_values_y
    total = hx[k].copy()
    if tau - 1 >= k + 1:
        total += np.sum(hx[k + 1:tau] - hy[k:tau - 1], axis=0)
    out = _select(total, h_index)
    return float(out) if np.ndim(out) == 0 else out


def h_km(run: CoupledRun, k: int, m: int, h_index: int | None = None):
    """Time-averaged estimator over ``k..m`` with the weighted bias correction."""
    if m < k:
        raise ValueError("m must be >= k")
    _check_run(run, m)
    tau = run.meeting_time
    hx, hy = run.h_values_x, run.h_values_y
    total = np.mean(hx[k:m + 1], axis=0)
    if tau - 1 >= k + 1:
        n = np.arange(k + 1, tau)
        w = np.minimum(1.0, (n - k) / (m - k + 1))
        total = total + np.sum(w[:, None] * (hx[k + 1:tau] - hy[k:tau - 1]), axis=0)
    out = _select(total, h_index)
    return float(out) if np.ndim(out) == 0 else out


def run_cost(run: CoupledRun | int, m: int) -> int:
    """``2 (tau - 1) + max(1, m + 1 - tau)`` in units of marginal kernel applications."""
    tau = run if isinstance(run, (int, np.integer)) else run.meeting_time
    if tau is None:
        raise ValueError("cost undefined for a run that did not meet")
    return 2 * (int(tau) - 1) + max(1, m + 1 - int(tau))


def estimate(run: CoupledRun, k: int, m: int) -> np.ndarray:
    """Vector of H_{k:m} over the whole test-function set (stored or streamed)."""
    if run.streamed is not None:
        if run.streamed_km != (k, m):
            raise ValueError(f"run streamed (k, m) = {run.streamed_km}, requested {(k, m)}")
        return run.streamed
    return np.atleast_1d(h_km(run, k, m))


def meeting_time_only(rng, target, kernel_cfg, cap, initial=None, backend=None) -> CoupledRun:
    """Run a pair to its meeting time with no post-meeting iterations (m = 0)."""
    cfg = EstimatorConfig(0, 0, cap)
    return run_coupled(rng, target, kernel_cfg, cfg, None, initial, backend=backend)


def relaxed_meeting_time(distances: Sequence[float], delta: float) -> int | None:
    """First index with distance at most ``delta``."""
    for i, d in enumerate(distances):
        if d <= delta:
            return i
    return None


def nan_if_none(v):
    return math.nan if v is None else v
