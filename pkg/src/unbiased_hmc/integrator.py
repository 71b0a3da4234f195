"""Leap-frog integration of Hamiltonian dynamics.

The Hamiltonian is ``E(q, p) = U(q) + p^T M^{-1} p / 2`` with a constant mass
matrix ``M`` (identity by default).  The integrator shares endpoint
gradients between steps, so ``L`` steps cost ``L + 1`` gradient evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .targets import cholesky_lower


@dataclass
class PhasePoint:
    position: np.ndarray
    momentum: np.ndarray
    divergent: bool = False

    def __post_init__(self):
        self.position = np.atleast_1d(np.asarray(self.position, dtype=float))
        self.momentum = np.atleast_1d(np.asarray(self.momentum, dtype=float))
        if self.position.shape != self.momentum.shape:
            raise ValueError("position and momentum must have the same length")


class MassMatrix:
    """Identity or a dense SPD mass matrix stored with its lower Cholesky factor."""

    def __init__(self, matrix: np.ndarray | None = None):
        if matrix is None:
            self.matrix = None
            self.factor = None
        else:
            self.matrix = np.asarray(matrix, dtype=float)
            self.factor = cholesky_lower(self.matrix, "mass matrix")

    @classmethod
    def identity(cls) -> "MassMatrix":
        return cls(None)

    @classmethod
    def dense(cls, matrix) -> "MassMatrix":
        return cls(matrix)

    @property
    def is_identity(self) -> bool:
        return self.matrix is None

    def velocity(self, p: np.ndarray) -> np.ndarray:
        if self.matrix is None:
            return p
        return cho_solve((self.factor, True), p, check_finite=False)

    def kinetic(self, p: np.ndarray) -> float:
        if self.matrix is None:
            return 0.5 * float(np.sum(p * p))
        return 0.5 * float(np.sum(p * self.velocity(p)))

    def sample_momentum(self, z: np.ndarray) -> np.ndarray:
        """Map a standard normal vector to a N(0, M) momentum."""
        if self.matrix is None:
            return z
        return self.factor @ z

    def __repr__(self):
        return "MassMatrix(identity)" if self.is_identity else f"MassMatrix(dense, d={self.matrix.shape[0]})"


IDENTITY = MassMatrix.identity()


def hamiltonian(point: PhasePoint, target, mass: MassMatrix | None = None) -> float:
    mass = IDENTITY if mass is None else mass
    return target.potential(point.position) + mass.kinetic(point.momentum)


def _finite(v: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(v)))


def integrate(q, p, target, step_size, n_steps, mass=None, grad0=None):
    """Run ``n_steps`` leap-frog iterations from ``(q, p)``.

    Returns ``(q, p, divergent)``.  Integration stops at the first
    non-finite intermediate value and reports the trajectory as divergent.
    """
    mass = IDENTITY if mass is None else mass
    half = 0.5 * step_size
    g = target.gradient(q) if grad0 is None else grad0
    if not _finite(g):
        return q, p, True
    for _ in range(n_steps):
        p = p - half * g
        q = q + step_size * mass.velocity(p)
        g = target.gradient(q)
        if not (_finite(q) and _finite(g)):
            return q, p, True
        p = p - half * g
    return q, p, not _finite(p)


def leapfrog(start: PhasePoint, target, step_size: float, n_steps: int,
             mass: MassMatrix | None = None) -> PhasePoint:
    if step_size <= 0:
        raise ValueError("step size must be positive")
    if n_steps < 1:
        raise ValueError("number of leap-frog steps must be at least 1")
    q, p, divergent = integrate(start.position, start.momentum, target,
                                step_size, int(n_steps), mass)
    return PhasePoint(q, p, divergent)


def exact_gaussian_flow(q0: float, p0: float, t: float, mu: float = 0.0,
                        sigma: float = 1.0) -> tuple[float, float]:
    """Closed-form Hamiltonian flow for a 1-d N(mu, sigma^2) target."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    c, s = math.cos(t / sigma), math.sin(t / sigma)
    q = mu + (q0 - mu) * c + sigma * p0 * s
    p = p0 * c - (q0 - mu) * s / sigma
    return q, p
