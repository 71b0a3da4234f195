import os

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


class CountingRNG:
    """Wraps a Generator and counts normal and uniform draws."""

    def __init__(self, rng):
        self._rng = rng
        self.normals = 0
        self.uniforms = 0
        self.log = []

    def standard_normal(self, size=None):
        out = self._rng.standard_normal(size)
        n = 1 if size is None else int(np.prod(size))
        self.normals += n
        self.log.append(("normal", n, np.array(out, copy=True)))
        return out

    def random(self, size=None):
        out = self._rng.random(size)
        n = 1 if size is None else int(np.prod(size))
        self.uniforms += n
        self.log.append(("uniform", n, out))
        return out


def finite_difference_gradient(f, q, rel_step=1e-6):
    q = np.asarray(q, dtype=float)
    g = np.empty_like(q)
    for i in range(q.size):
        h = rel_step * max(1.0, abs(q[i]))
        e = np.zeros_like(q)
        e[i] = h
        g[i] = (f(q + e) - f(q - e)) / (2 * h)
    return g


def assert_gradient_matches(target, q, rtol=1e-5):
    fd = finite_difference_gradient(target.potential, q)
    an = target.gradient(q)
    scale = max(1.0, float(np.max(np.abs(an))))
    err = float(np.max(np.abs(fd - an))) / scale
    assert err <= rtol, f"gradient mismatch: relative error {err:.3g}"


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture
def counting():
    return CountingRNG(np.random.default_rng(7))


DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")


def dataset_path(env_var, filename):
    """Location of an optional dataset: ``$env_var`` first, then ``data/filename``."""
    env = os.environ.get(env_var)
    if env and os.path.exists(env):
        return env
    p = os.path.join(DATA_DIR, filename)
    return p if os.path.exists(p) else None


def german_credit_path():
    return dataset_path("UNBIASED_HMC_GERMAN_CREDIT", "german.data-numeric")


def pines_path():
    return dataset_path("UNBIASED_HMC_PINES", "pines.txt")


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
