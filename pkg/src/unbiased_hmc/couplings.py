"""Coupled two-chain kernels.

All coupled kernels take an ``rng`` that is either a :class:`~.rng.PairStreams`
or a single generator.  The leading chain only ever reads the ``main``
stream, in the same order as its marginal kernel; coupling-only draws go to
``aux``.  Exact meetings are detected by bitwise equality of the states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import (
    KernelConfig,
    accept_probability,
    hmc_proposal,
    langevin_proposal,
    mala_log_ratio,
    mixture_step,
    rwmh_log_ratio,
)
from .rng import as_streams

MAX_COUPLING_TRIALS = 10**6


def same_state(x: np.ndarray, y: np.ndarray) -> bool:
    return x.shape == y.shape and x.tobytes() == y.tobytes()


@dataclass
class CoupledState:
    """Leading chain ``x = X_n``, lagged chain ``y = Y_{n-1}``."""
    x: np.ndarray
    y: np.ndarray
    met: bool = False
    iteration: int = 0


# ---------------------------------------------------------------------------
# momentum couplings


def _coupled_momentum(aux, p1, delta, kappa):
    if kappa == 0.0:
        return p1
    norm = math.sqrt(float(np.sum(delta * delta)))
    if norm == 0.0:
        return p1
    dbar = delta / norm
    s = float(np.sum(dbar * p1))
    t = s + kappa * norm
    log_ratio = 0.5 * s * s - 0.5 * t * t
    if aux.random() < accept_probability(log_ratio):
        return p1 + kappa * delta
    return p1 - (2.0 * s) * dbar


def sample_coupled_momentum(rng, delta, kappa: float):
    """Momenta ``(P1, P2)`` for the reflection/shift coupling with parameter ``kappa``.

    ``P2 = P1 + kappa * delta`` with probability
    ``N(dbar.P1 + kappa |delta|) / N(dbar.P1)``, otherwise ``P1`` reflected
    across the hyperplane orthogonal to ``delta``.  ``P2`` is N(0, I).
    """
    streams = as_streams(rng)
    delta = np.asarray(delta, dtype=float)
    p1 = streams.main.standard_normal(delta.shape[0])
    return p1, _coupled_momentum(streams.aux, p1, delta, float(kappa))


def coupled_hmc_step(rng, x, y, target, cfg: KernelConfig):
    """One coupled HMC step: common momentum (or kappa coupling) and a shared uniform."""
    streams = as_streams(rng)
    mass = cfg.mass
    p1 = mass.sample_momentum(streams.main.standard_normal(target.dim))
    if cfg.momentum_coupling > 0.0:
        if not mass.is_identity:
            raise ValueError("momentum_coupling > 0 requires the identity mass matrix")
        p2 = _coupled_momentum(streams.aux, p1, x - y, cfg.momentum_coupling)
    else:
        p2 = p1
    u = streams.main.random()
    prop_x, lr_x = hmc_proposal(x, p1, target, cfg.step_size, cfg.leapfrog_steps, mass)
    if same_state(x, y) and p2 is p1:
        prop_y, lr_y = prop_x, lr_x
    else:
        prop_y, lr_y = hmc_proposal(y, p2, target, cfg.step_size, cfg.leapfrog_steps, mass)
    new_x = prop_x if u < accept_probability(lr_x) else x
    new_y = prop_y if u < accept_probability(lr_y) else y
    return new_x, new_y


# ---------------------------------------------------------------------------
# maximal coupling of isotropic Gaussians


def _gauss_log_density(v, mean, sigma2):
    r = v - mean
    return -0.5 * float(np.sum(r * r)) / sigma2


def _complete_max_coupling(aux, x_star, mean_x, mean_y, sigma):
    """Given ``X* ~ N(mean_x, sigma^2 I)``, draw ``Y*`` from the maximal coupling."""
    s2 = sigma * sigma
    w = aux.random()
    lx = _gauss_log_density(x_star, mean_x, s2)
    ly = _gauss_log_density(x_star, mean_y, s2)
    if w == 0.0 or math.log(w) + lx <= ly:
        return x_star, True
    d = x_star.shape[0]
    for _ in range(MAX_COUPLING_TRIALS):
        y_star = mean_y + sigma * aux.standard_normal(d)
        w = aux.random()
        if w > 0.0 and (math.log(w) + _gauss_log_density(y_star, mean_y, s2)
                        > _gauss_log_density(y_star, mean_x, s2)):
            return y_star, False
    raise RuntimeError(
        f"maximal coupling rejection loop exceeded {MAX_COUPLING_TRIALS} trials "
        f"(|mean_x - mean_y| = {np.linalg.norm(mean_x - mean_y):.3g}, sigma = {sigma:.3g})")


def max_coupling_gaussian(rng, mean_x, mean_y, sigma: float):
    """Sample ``(X*, Y*, same)`` from the maximal coupling of N(mean_x, s^2 I) and N(mean_y, s^2 I)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    streams = as_streams(rng)
    mean_x = np.asarray(mean_x, dtype=float)
    mean_y = np.asarray(mean_y, dtype=float)
    x_star = mean_x + sigma * streams.main.standard_normal(mean_x.shape[0])
    y_star, same = _complete_max_coupling(streams.aux, x_star, mean_x, mean_y, sigma)
    return x_star, y_star, same


def coupled_rwmh_step(rng, x, y, target, sigma: float):
    """Maximally coupled Gaussian proposals accepted with one shared uniform."""
    streams = as_streams(rng)
    x_star = x + sigma * streams.main.standard_normal(target.dim)
    y_star, same = _complete_max_coupling(streams.aux, x_star, x, y, sigma)
    u = streams.main.random()
    lr_x = rwmh_log_ratio(target, x, target.potential(x), x_star)
    if same and same_state(x, y):
        lr_y = lr_x
    else:
        lr_y = rwmh_log_ratio(target, y, target.potential(y), y_star)
    new_x = x_star if u < accept_probability(lr_x) else x
    new_y = y_star if u < accept_probability(lr_y) else y
    return new_x, new_y


# ---------------------------------------------------------------------------
# mixture and MALA


def coupled_mixture_step(rng, state: CoupledState, target, cfg: KernelConfig) -> CoupledState:
    """One step of the gamma-mixture of coupled RWMH and coupled HMC.

    A met pair is advanced with the marginal mixture kernel and mirrored.
    """
    streams = as_streams(rng)
    if state.met:
        x = mixture_step(streams.main, state.x, target, cfg).new_state
        return CoupledState(x, x, True, state.iteration + 1)
    if streams.main.random() < cfg.mixture_weight:
        x, y = coupled_rwmh_step(streams, state.x, state.y, target, cfg.rwmh_scale)
    else:
        x, y = coupled_hmc_step(streams, state.x, state.y, target, cfg)
    met = same_state(x, y)
    return CoupledState(x, x if met else y, met, state.iteration + 1)


def coupled_mala_step(rng, x, y, target, step_size: float, threshold: float):
    """Coupled MALA: maximal coupling of the Langevin proposals when ``|x - y| <= threshold``,
    synchronous (shared noise) coupling otherwise; one shared acceptance uniform.
    """
    streams = as_streams(rng)
    z = streams.main.standard_normal(target.dim)
    gx = target.gradient(x)
    x_star = langevin_proposal(x, z, gx, step_size)
    diff = x - y
    if same_state(x, y):
        gy, y_star = gx, x_star
    elif math.sqrt(float(np.sum(diff * diff))) <= threshold:
        gy = target.gradient(y)
        half_sq = 0.5 * step_size * step_size
        y_star, _ = _complete_max_coupling(streams.aux, x_star, x - half_sq * gx,
                                           y - half_sq * gy, step_size)
    else:
        gy = target.gradient(y)
        y_star = langevin_proposal(y, z, gy, step_size)
    u = streams.main.random()

    def _ratio(q, g, prop):
        if not (np.all(np.isfinite(prop)) and np.all(np.isfinite(g))):
            return -math.inf
        return mala_log_ratio(target, q, g, prop, step_size)

    lr_x = _ratio(x, gx, x_star)
    lr_y = lr_x if (y_star is x_star and same_state(x, y)) else _ratio(y, gy, y_star)
    new_x = x_star if u < accept_probability(lr_x) else x
    new_y = y_star if u < accept_probability(lr_y) else y
    return new_x, new_y
