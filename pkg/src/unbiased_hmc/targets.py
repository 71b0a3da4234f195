"""Target distributions pi(dq) proportional to exp(-U(q)) dq.

Every bundled model exposes its potential ``U`` and an exact gradient.
Potentials are defined up to an additive constant, which is fixed to zero.
Models are immutable after construction and safe to share between
concurrently running replicates.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import cho_solve, lapack
from scipy.special import expit

# Identifiers understood by the compiled core (see ``_core.pyx``).
NATIVE_GAUSSIAN_DIAG = 0
NATIVE_ROSENBROCK = 1

GERMAN_CREDIT_COLUMNS = 24
PINES_POINT_COUNT = 126


@dataclass(frozen=True)
class AnalyticMoments:
    mean: np.ndarray
    second_moment: np.ndarray


class TargetModel:
    """A differentiable target density on R^d.

    Subclasses override :meth:`potential` and :meth:`gradient`.  A generic
    model can also be built directly from two callables.
    """

    def __init__(self, dim, potential=None, gradient=None, name="custom",
                 analytic_moments: AnalyticMoments | None = None):
        if int(dim) < 1:
            raise ValueError(f"dimension must be positive, got {dim}")
        self.dim = int(dim)
        self.name = name
        self.analytic_moments = analytic_moments
        self._potential = potential
        self._gradient = gradient

    def potential(self, q: np.ndarray) -> float:
        return float(self._potential(q))

    def gradient(self, q: np.ndarray) -> np.ndarray:
        return np.asarray(self._gradient(q), dtype=float)

    def native_spec(self):
        """``(kind, params_a, params_b)`` for the compiled core, or ``None``."""
        return None

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, dim={self.dim})"


def cholesky_lower(matrix: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor; a failure names the leading minor that broke."""
    a = np.array(matrix, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-12, atol=1e-12):
        raise ValueError(f"{what} is not symmetric")
    factor, info = lapack.dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise ValueError(
            f"{what} is not positive definite: pivot {info} "
            f"(leading minor of order {info}) is non-positive")
    if info < 0:
        raise ValueError(f"invalid argument {-info} passed to dpotrf")
    return np.tril(factor)


# ---------------------------------------------------------------------------
# Gaussian


class GaussianTarget(TargetModel):
    """N(mean, covariance) with ``U(q) = (q - mean)^T Sigma^{-1} (q - mean) / 2``."""

    def __init__(self, mean: ArrayLike, covariance):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        dim = mean.shape[0]
        cov = np.asarray(covariance, dtype=float)
        if cov.ndim == 0:
            cov = np.full(dim, float(cov))
        if cov.ndim == 1:
            if cov.shape[0] != dim:
                raise ValueError("covariance diagonal length differs from mean")
            bad = np.flatnonzero(~(cov > 0))
            if bad.size:
                raise ValueError(
                    f"covariance is not positive definite: pivot {bad[0] + 1} "
                    f"has variance {cov[bad[0]]}")
            self._diag = True
            self._prec = 1.0 / cov
            variances = cov
        else:
            if cov.shape != (dim, dim):
                raise ValueError(f"covariance must be {dim}x{dim}, got {cov.shape}")
            factor = cholesky_lower(cov, "covariance")
            self._diag = False
            self._prec = cho_solve((factor, True), np.eye(dim))
            self._prec = 0.5 * (self._prec + self._prec.T)
            variances = np.diag(cov).copy()
        self.mean = mean
        moments = AnalyticMoments(mean.copy(), variances + mean * mean)
        super().__init__(dim, name="gaussian", analytic_moments=moments)

    def potential(self, q):
        r = q - self.mean
        if self._diag:
            return 0.5 * float(np.sum(r * r * self._prec))
        return 0.5 * float(r @ (self._prec @ r))

    def gradient(self, q):
        r = q - self.mean
        if self._diag:
            return r * self._prec
        return self._prec @ r

    def native_spec(self):
        if not self._diag:
            return None
        return (NATIVE_GAUSSIAN_DIAG, self.mean, self._prec)


def gaussian_target(mean, covariance_spec=1.0) -> GaussianTarget:
    """Gaussian target; ``covariance_spec`` is a variance, a diagonal or a dense SPD matrix."""
    return GaussianTarget(mean, covariance_spec)


def standard_normal_target(dim: int) -> GaussianTarget:
    return GaussianTarget(np.zeros(dim), 1.0)


# ---------------------------------------------------------------------------
# Rosenbrock


class RosenbrockTarget(TargetModel):
    """Banana-shaped density with ``U = (1 - x1)^2 + 10 (x2 - x1^2)^2``."""

    def __init__(self):
        super().__init__(2, name="rosenbrock")

    def potential(self, q):
        a = 1.0 - q[0]
        b = q[1] - q[0] * q[0]
        return float(a * a + 10.0 * b * b)

    def gradient(self, q):
        a = 1.0 - q[0]
        b = q[1] - q[0] * q[0]
        return np.array([-2.0 * a - 40.0 * q[0] * b, 20.0 * b])

    def native_spec(self):
        empty = np.zeros(2)
        return (NATIVE_ROSENBROCK, empty, empty)


def rosenbrock_target() -> RosenbrockTarget:
    return RosenbrockTarget()


# ---------------------------------------------------------------------------
# Logistic regression


@dataclass(frozen=True)
class FixedGaussianPrior:
    """Prior N(0, Sigma / zeta) on the regression coefficients."""
    zeta: float = 1.0
    covariance: np.ndarray | None = None  # identity when None


@dataclass(frozen=True)
class HierarchicalPrior:
    """a, b | s^2 ~ N(0, s^2) independently and s^2 ~ Exponential(rate)."""
    rate: float = 0.01


@dataclass
class LogisticModelSpec:
    design: np.ndarray
    responses: np.ndarray
    prior: FixedGaussianPrior | HierarchicalPrior = field(default_factory=HierarchicalPrior)

    def __post_init__(self):
        self.design = np.asarray(self.design, dtype=float)
        self.responses = np.asarray(self.responses, dtype=float)
        if self.design.ndim != 2:
            raise ValueError("design must be a 2-d array")
        if self.responses.shape != (self.design.shape[0],):
            raise ValueError(
                f"responses length {self.responses.shape} does not match "
                f"{self.design.shape[0]} design rows")
        if not np.all((self.responses == 0) | (self.responses == 1)):
            raise ValueError("responses must be binary (0/1)")


class FixedPriorLogisticTarget(TargetModel):
    """Closed-form potential

    ``U(q) = zeta/2 q^T Sigma^{-1} q + y^T X q + sum_n log(1 + exp(-x_n^T q))``

    with gradient ``zeta Sigma^{-1} q + X^T y - sum_n x_n / (1 + exp(x_n^T q))``.
    """

    def __init__(self, spec: LogisticModelSpec):
        prior = spec.prior
        X = spec.design
        d = X.shape[1]
        if prior.covariance is None:
            prec = np.eye(d)
        else:
            cov = np.asarray(prior.covariance, dtype=float)
            if cov.shape != (d, d):
                raise ValueError(f"prior covariance must be {d}x{d}, got {cov.shape}")
            prec = cho_solve((cholesky_lower(cov, "prior covariance"), True), np.eye(d))
        self.zeta = float(prior.zeta)
        self.design = X
        self.responses = spec.responses
        self._scaled_prec = self.zeta * prec
        self._Xty = X.T @ spec.responses
        super().__init__(d, name="logistic_fixed")

    def potential(self, q):
        eta = self.design @ q
        return float(0.5 * q @ (self._scaled_prec @ q) + self._Xty @ q
                     + np.sum(np.logaddexp(0.0, -eta)))

    def gradient(self, q):
        eta = self.design @ q
        return self._scaled_prec @ q + self._Xty - self.design.T @ expit(-eta)


class HierarchicalLogisticTarget(TargetModel):
    """Posterior of ``(a, b, z = log s^2)``; success probability ``1/(1+exp(-a-b^T x))``.

    The exp-Jacobian of ``s^2 = exp(z)`` is folded into the potential.
    """

    def __init__(self, spec: LogisticModelSpec):
        X = spec.design
        self.design = X
        self.responses = spec.responses
        self.rate = float(spec.prior.rate)
        self.n_coef = X.shape[1]
        super().__init__(X.shape[1] + 2, name="logistic_hierarchical")

    def potential(self, q):
        a, b, z = q[0], q[1:-1], q[-1]
        eta = a + self.design @ b
        loglik = float(self.responses @ eta - np.sum(np.logaddexp(0.0, eta)))
        sq = a * a + b @ b
        k = self.n_coef + 1
        return float(-loglik + 0.5 * sq * math.exp(-z) + 0.5 * k * z
                     + self.rate * math.exp(z) - z)

    def gradient(self, q):
        a, b, z = q[0], q[1:-1], q[-1]
        eta = a + self.design @ b
        resid = expit(eta) - self.responses
        inv_s2 = math.exp(-z)
        g = np.empty_like(q, dtype=float)
        g[0] = np.sum(resid) + a * inv_s2
        g[1:-1] = self.design.T @ resid + b * inv_s2
        sq = a * a + b @ b
        g[-1] = -0.5 * sq * inv_s2 + 0.5 * (self.n_coef + 1) + self.rate * math.exp(z) - 1.0
        return g


def logistic_target(spec: LogisticModelSpec) -> TargetModel:
    if isinstance(spec.prior, HierarchicalPrior):
        return HierarchicalLogisticTarget(spec)
    return FixedPriorLogisticTarget(spec)


def expand_interactions(raw: np.ndarray) -> np.ndarray:
    """Original columns, then products ``x_i x_j`` for ``i < j`` in lexicographic order."""
    raw = np.asarray(raw, dtype=float)
    p = raw.shape[1]
    cols = [raw]
    for i in range(p):
        cols.append(raw[:, [i]] * raw[:, i + 1:])
    return np.hstack(cols)


def standardize(design: np.ndarray) -> np.ndarray:
    """Centre every column and scale it to unit sample standard deviation (ddof=1).

    Constant columns are centred (to zero) but left unscaled.
    """
    centred = design - design.mean(axis=0)
    sd = centred.std(axis=0, ddof=1)
    sd[sd == 0] = 1.0
    return centred / sd


def _read_rows(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            yield lineno, text.replace(",", " ").split()


def load_german_credit(path, prior=None) -> LogisticModelSpec:
    """Read the numeric German credit table and build the 300-column design.

    Rows hold 24 numeric covariates followed by the response.  Responses
    coded 0/1 are used as is; the UCI coding 1/2 is mapped to 0/1.
    """
    rows, labels = [], []
    for lineno, fields in _read_rows(path):
        if len(fields) != GERMAN_CREDIT_COLUMNS + 1:
            raise ValueError(
                f"{path}: row {lineno} has {len(fields)} fields, "
                f"expected {GERMAN_CREDIT_COLUMNS + 1}")
        try:
            values = [float(v) for v in fields]
        except ValueError as exc:
            raise ValueError(f"{path}: row {lineno} is not numeric ({exc})") from None
        rows.append(values[:-1])
        labels.append(values[-1])
    if not rows:
        raise ValueError(f"{path}: no observations")
    y = np.asarray(labels)
    codes = set(np.unique(y).tolist())
    if codes <= {0.0, 1.0}:
        pass
    elif codes <= {1.0, 2.0}:
        y = y - 1.0
    else:
        raise ValueError(f"{path}: responses must be coded 0/1 (or 1/2), found {sorted(codes)}")
    design = standardize(expand_interactions(np.asarray(rows)))
    return LogisticModelSpec(design, y, prior if prior is not None else HierarchicalPrior())


# ---------------------------------------------------------------------------
# Log-Gaussian Cox process

COX_SIGNAL_VARIANCE = 1.91
COX_LENGTH_SCALE = 1.0 / 33.0
COX_MEAN = math.log(126.0) - COX_SIGNAL_VARIANCE / 2.0


def build_cox_covariance(n: int, signal_variance: float, length_scale: float) -> np.ndarray:
    """``s^2 exp(-|i - j| / (n b))`` over grid multi-indices, row-major."""
    if n < 1:
        raise ValueError("grid side must be at least 1")
    idx = np.array([(i, j) for i in range(n) for j in range(n)], dtype=float)
    diff = idx[:, None, :] - idx[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    return signal_variance * np.exp(-dist / (n * length_scale))


@dataclass
class CoxModelSpec:
    grid_side: int
    counts: np.ndarray
    signal_variance: float = COX_SIGNAL_VARIANCE
    length_scale: float = COX_LENGTH_SCALE
    mean: float = COX_MEAN
    covariance_factor: np.ndarray | None = None

    def __post_init__(self):
        n = int(self.grid_side)
        if n < 1:
            raise ValueError("grid side must be at least 1")
        self.grid_side = n
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.shape != (n * n,):
            raise ValueError(f"counts must have length {n * n}, got {self.counts.shape}")
        if np.any(self.counts < 0) or np.any(self.counts != np.round(self.counts)):
            raise ValueError("counts must be non-negative integers")
        if self.covariance_factor is None:
            cov = build_cox_covariance(n, self.signal_variance, self.length_scale)
            self.covariance_factor = cholesky_lower(cov, "Cox covariance")

    @property
    def cell_area(self) -> float:
        return 1.0 / (self.grid_side * self.grid_side)

    @property
    def dim(self) -> int:
        return self.grid_side * self.grid_side

    def covariance(self) -> np.ndarray:
        f = self.covariance_factor
        return f @ f.T


class CoxTarget(TargetModel):
    """Latent field ``x`` with ``U = (x - mu)^T Sigma^{-1} (x - mu) / 2 + sum(a e^x - y x)``."""

    def __init__(self, spec: CoxModelSpec):
        self.spec = spec
        self._factor = spec.covariance_factor
        self._mu = spec.mean
        self._area = spec.cell_area
        self._counts = spec.counts
        super().__init__(spec.dim, name=f"cox_{spec.grid_side}")

    def _prior_solve(self, r):
        return cho_solve((self._factor, True), r, check_finite=False)

    def potential(self, x):
        r = x - self._mu
        return float(0.5 * r @ self._prior_solve(r)
                     + np.sum(self._area * np.exp(x) - self._counts * x))

    def gradient(self, x):
        r = x - self._mu
        return self._prior_solve(r) + self._area * np.exp(x) - self._counts

    def metric(self) -> np.ndarray:
        """Constant metric ``Sigma^{-1} + a exp(mu + s^2/2) I``."""
        spec = self.spec
        prec = cho_solve((self._factor, True), np.eye(self.dim))
        prec = 0.5 * (prec + prec.T)
        shift = spec.cell_area * math.exp(spec.mean + spec.signal_variance / 2.0)
        return prec + shift * np.eye(self.dim)

    def sample_prior(self, rng) -> np.ndarray:
        return self._mu + self._factor @ rng.standard_normal(self.dim)


def cox_target(spec: CoxModelSpec) -> CoxTarget:
    return CoxTarget(spec)


def bin_points(points: np.ndarray, n: int) -> np.ndarray:
    """Row-major ``n x n`` counts; the first coordinate selects the row."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    rows = np.minimum((points[:, 0] * n).astype(int), n - 1)
    cols = np.minimum((points[:, 1] * n).astype(int), n - 1)
    counts = np.zeros(n * n)
    np.add.at(counts, rows * n + cols, 1.0)
    return counts


def load_pines(path, n: int) -> CoxModelSpec:
    """Read two-column coordinates in [0, 1]^2 and bin them on an ``n x n`` grid."""
    pts = []
    for lineno, fields in _read_rows(path):
        if len(fields) != 2:
            raise ValueError(f"{path}: row {lineno} has {len(fields)} fields, expected 2")
        try:
            u, v = float(fields[0]), float(fields[1])
        except ValueError:
            raise ValueError(f"{path}: row {lineno} is not numeric") from None
        if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
            raise ValueError(f"{path}: row {lineno} coordinate ({u}, {v}) outside [0, 1]^2")
        pts.append((u, v))
    return CoxModelSpec(n, bin_points(np.asarray(pts), n))


def simulate_cox_counts(rng, n: int, signal_variance=COX_SIGNAL_VARIANCE,
                        length_scale=COX_LENGTH_SCALE, mean=COX_MEAN,
                        total: int | None = None) -> np.ndarray:
    """Draw a latent field from the prior, then counts given it.

    Counts are Poisson with mean ``a exp(x_i)``, or multinomial with cell
    probabilities proportional to ``exp(x_i)`` when ``total`` is fixed.
    """
    cov = build_cox_covariance(n, signal_variance, length_scale)
    x = mean + cholesky_lower(cov) @ rng.standard_normal(n * n)
    if total is not None:
        w = np.exp(x - x.max())
        return rng.multinomial(int(total), w / w.sum()).astype(float)
    return rng.poisson(np.exp(x) / (n * n)).astype(float)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
