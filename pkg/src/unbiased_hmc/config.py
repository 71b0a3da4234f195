"""Flat ``key = value`` experiment configuration.

Lines are ``key = value``; ``#`` starts a comment.  Lists are comma separated.
Unknown keys and malformed values raise :class:`ConfigError` naming the field.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import targets as T
from .estimator import EstimatorConfig, independent_gaussian_init, independent_uniform_init
from .integrator import MassMatrix
from .kernels import KernelConfig

# keys that change where or how fast results are produced, not what they are
NON_SEMANTIC_KEYS = ("threads", "out")


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _auto_int(text: str):
    text = str(text).strip().lower()
    return "auto" if text == "auto" else int(text)


def _fraction(text: str) -> float:
    text = str(text).strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    # target
    target: str = "gaussian"            # gaussian | rosenbrock | logistic | cox
    dim: int = 1
    target_mean: tuple[float, ...] = (0.0,)
    target_variance: tuple[float, ...] = (1.0,)
    data_path: str = ""                 # German credit table or pines coordinates
    prior: str = "hierarchical"         # logistic: hierarchical | fixed
    prior_zeta: float = 1.0
    prior_rate: float = 0.01
    grid_side: int = 16
    synthetic_seed: int = 1             # cox counts when no data_path is given
    # kernel
    step_size: float = 0.1
    leapfrog_steps: int = 10
    rwmh_scale: float = 1e-3
    mixture_weight: float = 1.0 / 20.0
    momentum_coupling: float = 0.0
    mass: str = "identity"              # identity | cox_metric
    # initial distribution
    init: str = "gaussian"              # gaussian | uniform | prior
    init_mean: float = 0.0
    init_scale: float = 1.0
    init_low: float = -5.0
    init_high: float = 5.0
    # estimator and replication
    k: object = "auto"
    m: object = "auto"
    m_multiplier: int = 10
    tuning_runs: int = 100
    replicates: int = 100
    seed: int = 0
    cap: int = 100_000
    unmet_budget: int = 0
    streaming: bool = False
    threads: int = 1
    out: str = "out"
    # scan
    eps_grid: tuple[float, ...] = (0.05, 0.1, 0.2)
    l_grid: tuple[int, ...] = (5, 10, 20)
    scan_iterations: int = 1000
    scan_pairs: int = 5
    # meetings
    n_meetings: int = 100
    # variance baseline
    baseline_iterations: int = 10_000
    baseline_burn_in: int = 1000
    baseline_step_size: float | None = None
    baseline_leapfrog_steps: int | None = None

    _parsers = {
        "target_mean": _floats, "target_variance": _floats, "eps_grid": _floats,
        "l_grid": _ints, "k": _auto_int, "m": _auto_int, "mixture_weight": _fraction,
        "step_size": _fraction, "streaming": _bool,
        "baseline_step_size": lambda s: None if s.strip().lower() in ("", "none") else _fraction(s),
        "baseline_leapfrog_steps": lambda s: None if s.strip().lower() in ("", "none") else int(s),
    }

    # ------------------------------------------------------------------
    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def apply(self, key: str, value: str) -> None:
        key = key.strip().replace("-", "_")
        if key not in self.field_names():
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(self, key)
        parser = self._parsers.get(key)
        try:
            if parser is not None:
                parsed = parser(str(value))
            elif isinstance(current, bool):
                parsed = _bool(value)
            elif isinstance(current, int):
                parsed = int(str(value).strip())
            elif isinstance(current, float):
                parsed = float(str(value).strip())
            else:
                parsed = str(value).strip()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: invalid value {value!r} ({exc})") from None
        setattr(self, key, parsed)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = line.split("=", 1)
            try:
                cfg.apply(key, value)
            except ConfigError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from None
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text)

    # ------------------------------------------------------------------
    def semantic_items(self) -> dict:
        out = {}
        for name in self.field_names():
            if name in NON_SEMANTIC_KEYS:
                continue
            v = getattr(self, name)
            out[name] = list(v) if isinstance(v, tuple) else v
        return out

    def canonical(self) -> str:
        """Sorted ``key=value`` lines of every setting that affects results."""
        items = []
        for name in self.field_names():
            if name in NON_SEMANTIC_KEYS:
                continue
            items.append(f"{name}={getattr(self, name)!r}")
        return "\n".join(items)

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def validate(self) -> None:
        """Field-level checks, run before any simulation."""
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(f"{key}: {msg}")
        need(self.target in ("gaussian", "rosenbrock", "logistic", "cox"), "target",
             f"unknown target {self.target!r}")
        need(self.dim >= 1, "dim", "must be >= 1")
        need(self.mass in ("identity", "cox_metric"), "mass", f"unknown mass {self.mass!r}")
        need(self.mass == "identity" or self.target == "cox", "mass",
             "cox_metric is only defined for the cox target")
        need(self.init in ("gaussian", "uniform", "prior"), "init", f"unknown init {self.init!r}")
        need(self.init != "prior" or self.target == "cox", "init",
             "prior initialisation is only available for the cox target")
        need(self.init_scale > 0, "init_scale", "must be > 0")
        need(self.init_low < self.init_high, "init_low", "must be < init_high")
        need(self.replicates >= 1, "replicates", "must be >= 1")
        need(self.tuning_runs >= 1, "tuning_runs", "must be >= 1")
        need(self.seed >= 0, "seed", "must be a non-negative integer")
        need(self.cap >= 1, "cap", "must be >= 1")
        need(self.threads >= 1, "threads", "must be >= 1")
        need(self.unmet_budget >= 0, "unmet_budget", "must be >= 0")
        need(self.m_multiplier >= 1, "m_multiplier", "must be >= 1")
        need(self.k == "auto" or (isinstance(self.k, int) and self.k >= 0), "k",
             "must be 'auto' or a non-negative integer")
        need(self.m == "auto" or isinstance(self.m, int), "m", "must be 'auto' or an integer")
        if isinstance(self.k, int) and isinstance(self.m, int):
            need(self.m >= self.k, "m", f"must be >= k={self.k}")
            need(self.cap >= self.m, "cap", f"must be >= m={self.m}")
        need(len(self.eps_grid) > 0 and all(e > 0 for e in self.eps_grid), "eps_grid",
             "needs positive step sizes")
        need(len(self.l_grid) > 0 and all(v >= 1 for v in self.l_grid), "l_grid",
             "needs integers >= 1")
        need(self.scan_iterations >= 1, "scan_iterations", "must be >= 1")
        need(self.scan_pairs >= 1, "scan_pairs", "must be >= 1")
        need(self.n_meetings >= 0, "n_meetings", "must be >= 0")
        need(self.baseline_iterations >= 10, "baseline_iterations", "must be >= 10")
        need(self.baseline_burn_in >= 0, "baseline_burn_in", "must be >= 0")
        if self.target == "gaussian":
            need(len(self.target_mean) in (1, self.dim), "target_mean",
                 f"needs 1 or {self.dim} values")
            need(len(self.target_variance) in (1, self.dim), "target_variance",
                 f"needs 1 or {self.dim} values")
            need(all(v > 0 for v in self.target_variance), "target_variance",
                 "must be positive")
        if self.target == "logistic":
            need(bool(self.data_path), "data_path", "the logistic target needs a data file")
            need(self.prior in ("hierarchical", "fixed"), "prior", f"unknown prior {self.prior!r}")
        if self.target == "cox":
            need(self.grid_side >= 1, "grid_side", "must be >= 1")
        try:
            self.kernel_config(mass=MassMatrix.identity())
        except ValueError as exc:
            raise ConfigError(f"kernel: {exc}") from None

    # ------------------------------------------------------------------
    def build_target(self):
        if self.target == "gaussian":
            mean = np.broadcast_to(np.asarray(self.target_mean, float), (self.dim,)).copy()
            var = np.broadcast_to(np.asarray(self.target_variance, float), (self.dim,)).copy()
            return T.gaussian_target(mean, var)
        if self.target == "rosenbrock":
            return T.rosenbrock_target()
        if self.target == "logistic":
            prior = (T.HierarchicalPrior(self.prior_rate) if self.prior == "hierarchical"
                     else T.FixedGaussianPrior(self.prior_zeta))
            try:
                spec = T.load_german_credit(self.data_path, prior)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"data_path: {exc}") from None
            return T.logistic_target(spec)
        if self.data_path:
            try:
                spec = T.load_pines(self.data_path, self.grid_side)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"data_path: {exc}") from None
        else:
            rng = np.random.default_rng(self.synthetic_seed)
            counts = T.simulate_cox_counts(rng, self.grid_side, total=T.PINES_POINT_COUNT)
            spec = T.CoxModelSpec(self.grid_side, counts)
        return T.cox_target(spec)

    def mass_matrix(self, target) -> MassMatrix:
        if self.mass == "cox_metric":
            return MassMatrix.dense(target.metric())
        return MassMatrix.identity()

    def kernel_config(self, mass: MassMatrix, **overrides) -> KernelConfig:
        kw = dict(step_size=self.step_size, leapfrog_steps=self.leapfrog_steps,
                  rwmh_scale=self.rwmh_scale, mixture_weight=self.mixture_weight,
                  momentum_coupling=self.momentum_coupling, mass=mass)
        kw.update(overrides)
        return KernelConfig(**kw)

    def initial(self, target):
        if self.init == "uniform":
            return independent_uniform_init(self.init_low, self.init_high)
        if self.init == "prior":
            def draw(rng, dim):
                return target.sample_prior(rng), target.sample_prior(rng)
            draw.description = "independent prior draws"
            return draw
        return independent_gaussian_init(self.init_mean, self.init_scale)

    def estimator_config(self, k: int, m: int) -> EstimatorConfig:
        try:
            return EstimatorConfig(k, m, self.cap)
        except ValueError as exc:
            raise ConfigError(f"estimator: {exc}") from None


def load_config(path=None, overrides=()) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(path) if path else ExperimentConfig()
    for key, value in overrides:
        cfg.apply(key, value)
    cfg.validate()
    return cfg
