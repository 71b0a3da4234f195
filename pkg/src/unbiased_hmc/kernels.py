"""pi-invariant single-chain kernels: HMC, random-walk MH, MALA and their mixture.

Random number consumption per step is fixed so that coupled versions can
share the stream layout:

* HMC: ``d`` momentum normals, then one acceptance uniform.
* RWMH: ``d`` proposal normals, then one acceptance uniform.
* MALA: ``d`` proposal normals, then one acceptance uniform.
* mixture: one selection uniform, then the chosen kernel's draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .integrator import IDENTITY, MassMatrix, integrate

HMC = "HMC"
RWMH = "RWMH"
MALA = "MALA"


@dataclass(frozen=True)
class KernelConfig:
    step_size: float = 0.1
    leapfrog_steps: int = 10
    rwmh_scale: float = 1e-3
    mixture_weight: float = 1.0 / 20.0
    momentum_coupling: float = 0.0
    mass: MassMatrix = field(default=IDENTITY)
    mala_threshold: float = 0.1
    # lets gamma sit at 0 or 1, so a single branch can be exercised on its own
    allow_degenerate_mixture: bool = False

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if int(self.leapfrog_steps) != self.leapfrog_steps or self.leapfrog_steps < 1:
            raise ValueError(f"leapfrog_steps must be an integer >= 1, got {self.leapfrog_steps}")
        if not self.rwmh_scale > 0:
            raise ValueError(f"rwmh_scale must be > 0, got {self.rwmh_scale}")
        if self.allow_degenerate_mixture:
            if not 0.0 <= self.mixture_weight <= 1.0:
                raise ValueError(f"mixture_weight must lie in [0, 1], got {self.mixture_weight}")
        elif not 0.0 < self.mixture_weight < 1.0:
            raise ValueError(f"mixture_weight must lie in (0, 1), got {self.mixture_weight}")
        if not self.momentum_coupling >= 0:
            raise ValueError(f"momentum_coupling must be >= 0, got {self.momentum_coupling}")
        if not self.mala_threshold > 0:
            raise ValueError(f"mala_threshold must be > 0, got {self.mala_threshold}")
        if self.mass is None:
            object.__setattr__(self, "mass", IDENTITY)


@dataclass
class StepOutcome:
    new_state: np.ndarray
    accepted: bool
    kernel_tag: str
    proposal: np.ndarray


def accept_probability(log_ratio: float) -> float:
    """``min(1, exp(log_ratio))``; non-finite ratios give 0."""
    if not math.isfinite(log_ratio):
        return 1.0 if log_ratio == math.inf else 0.0
    return math.exp(min(0.0, log_ratio))


def hmc_proposal(q, p0, target, step_size, n_steps, mass):
    """Integrate from ``(q, p0)``; returns ``(proposal, log acceptance ratio)``."""
    e0 = target.potential(q) + mass.kinetic(p0)
    q1, p1, divergent = integrate(q, p0, target, step_size, n_steps, mass)
    if divergent:
        return q1, -math.inf
    e1 = target.potential(q1) + mass.kinetic(p1)
    if not math.isfinite(e1):
        return q1, -math.inf
    return q1, e0 - e1


def hmc_step(rng, q, target, cfg: KernelConfig) -> StepOutcome:
    mass = cfg.mass
    p0 = mass.sample_momentum(rng.standard_normal(target.dim))
    proposal, log_ratio = hmc_proposal(q, p0, target, cfg.step_size,
                                       cfg.leapfrog_steps, mass)
    u = rng.random()
    accepted = u < accept_probability(log_ratio)
    return StepOutcome(proposal if accepted else q, accepted, HMC, proposal)


def rwmh_log_ratio(target, q, u_q, proposal):
    u_prop = target.potential(proposal)
    if not math.isfinite(u_prop):
        return -math.inf
    return u_q - u_prop


def rwmh_step(rng, q, target, sigma: float) -> StepOutcome:
    proposal = q + sigma * rng.standard_normal(target.dim)
    log_ratio = rwmh_log_ratio(target, q, target.potential(q), proposal)
    u = rng.random()
    accepted = u < accept_probability(log_ratio)
    return StepOutcome(proposal if accepted else q, accepted, RWMH, proposal)


def langevin_proposal(q, z, grad, step_size):
    # same arithmetic as one leap-frog step with momentum z
    return q + step_size * (z - 0.5 * step_size * grad)


def mala_log_ratio(target, q, grad_q, proposal, step_size):
    u_q = target.potential(q)
    u_p = target.potential(proposal)
    if not math.isfinite(u_p):
        return -math.inf
    grad_p = target.gradient(proposal)
    if not np.all(np.isfinite(grad_p)):
        return -math.inf
    half_sq = 0.5 * step_size * step_size
    fwd = proposal - (q - half_sq * grad_q)
    bwd = q - (proposal - half_sq * grad_p)
    denom = 2.0 * step_size * step_size
    return (u_q - u_p) - float(np.sum(bwd * bwd)) / denom + float(np.sum(fwd * fwd)) / denom


def mala_step(rng, q, target, step_size: float) -> StepOutcome:
    """Metropolis-adjusted Langevin step with proposal N(q - eps^2 grad U / 2, eps^2 I)."""
    z = rng.standard_normal(target.dim)
    grad = target.gradient(q)
    proposal = langevin_proposal(q, z, grad, step_size)
    if np.all(np.isfinite(proposal)) and np.all(np.isfinite(grad)):
        log_ratio = mala_log_ratio(target, q, grad, proposal, step_size)
    else:
        log_ratio = -math.inf
    u = rng.random()
    accepted = u < accept_probability(log_ratio)
    return StepOutcome(proposal if accepted else q, accepted, MALA, proposal)


def mixture_step(rng, q, target, cfg: KernelConfig) -> StepOutcome:
    """RWMH with probability ``mixture_weight``, HMC otherwise."""
    if rng.random() < cfg.mixture_weight:
        return rwmh_step(rng, q, target, cfg.rwmh_scale)
    return hmc_step(rng, q, target, cfg)


def run_chain(rng, q0, target, cfg: KernelConfig, n_iterations: int, *,
              record=None, backend: str | None = None) -> np.ndarray:
    """Iterate the mixture kernel ``n_iterations`` times from ``q0``.

    Returns the stacked ``record(state)`` values (states themselves by default)
    for iterations ``0..n_iterations``.
    """
    from . import _backend

    q = np.asarray(q0, dtype=float)
    if (record is None and _backend.resolve(backend) == "native"
            and target.native_spec() is not None and cfg.mass.is_identity):
        return _backend.run_chain_native(rng, target, cfg, q, n_iterations)
    record = (lambda v: v) if record is None else record
    out = [record(q)]
    for _ in range(n_iterations):
        q = mixture_step(rng, q, target, cfg).new_state
        out.append(record(q))
    return np.array(out)
