"""Selection between the compiled core and the pure-Python reference path.

The compiled extension ``_core`` is optional.  ``UNBIASED_HMC_BACKEND=python``
forces the reference implementation even when the extension is present.
Both paths consume random numbers in the same order and perform the same
floating-point operations, so they produce bitwise-identical runs.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - depends on the build
    from . import _core
    NATIVE_AVAILABLE = True
    _IMPORT_ERROR = None
except ImportError as exc:  # pragma: no cover
    _core = None
    NATIVE_AVAILABLE = False
    _IMPORT_ERROR = exc

ENV_VAR = "UNBIASED_HMC_BACKEND"


def native_available() -> bool:
    return NATIVE_AVAILABLE


def default_backend() -> str:
    choice = os.environ.get(ENV_VAR, "").strip().lower()
    if choice == "python" or not NATIVE_AVAILABLE:
        return "python"
    return "native"


def resolve(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    if backend not in ("python", "native"):
        raise ValueError(f"unknown backend {backend!r}; expected 'python' or 'native'")
    if backend == "native" and not NATIVE_AVAILABLE:
        raise RuntimeError(f"compiled core unavailable: {_IMPORT_ERROR}")
    return backend


def _model_args(target):
    kind, a, b = target.native_spec()
    return int(kind), np.ascontiguousarray(a, dtype=float), np.ascontiguousarray(b, dtype=float)


def run_coupled_native(streams, target, cfg, x0, y0, m, cap):
    from .estimator import CoupledRun

    kind, a, b = _model_args(target)
    hx, hy, tau, iters, c_coupled, c_single = _core.run_coupled(
        streams.main, streams.aux, kind, a, b,
        np.ascontiguousarray(x0, dtype=float), np.ascontiguousarray(y0, dtype=float),
        float(cfg.step_size), int(cfg.leapfrog_steps), float(cfg.rwmh_scale),
        float(cfg.mixture_weight), float(cfg.momentum_coupling), int(m), int(cap))
    return CoupledRun(hx, hy, None if tau < 0 else int(tau), int(iters),
                      int(c_coupled), int(c_single), int(m))


def run_chain_native(rng, target, cfg, x0, n_iterations):
    """Marginal mixture chain; returns the ``(n_iterations + 1, d)`` state array."""
    kind, a, b = _model_args(target)
    return _core.run_chain(rng, kind, a, b, np.ascontiguousarray(x0, dtype=float),
                           float(cfg.step_size), int(cfg.leapfrog_steps),
                           float(cfg.rwmh_scale), float(cfg.mixture_weight), int(n_iterations))


def leapfrog_native(target, q, p, step_size, n_steps):
    kind, a, b = _model_args(target)
    return _core.leapfrog(kind, a, b, np.ascontiguousarray(q, dtype=float),
                          np.ascontiguousarray(p, dtype=float), float(step_size), int(n_steps))


def potential_native(target, q) -> float:
    kind, a, b = _model_args(target)
    return _core.potential_value(kind, a, b, np.ascontiguousarray(q, dtype=float))
