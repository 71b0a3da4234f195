"""Random stream plumbing for coupled chains and replicates.

A coupled pair owns one :class:`PairStreams` object.  The ``main`` generator
drives everything a single marginal chain would consume (momenta, proposal
noise, acceptance and selection uniforms).  The ``aux`` generator carries the
extra randomness that only a coupling needs: the residual draws of a maximal
coupling and the branch uniform of the reflection momentum coupling.  Keeping
them apart means the leading chain of any coupled kernel follows exactly the
same path as the marginal kernel driven by ``main``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

_MASK64 = (1 << 64) - 1
_TUNE_TAG = 0x7475_6E65  # "tune"


def splitmix64(x: int) -> int:
    """One round of the splitmix64 finaliser on a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def replicate_seed(master_seed: int, index: int) -> int:
    """Seed for replicate ``index``: ``splitmix64(splitmix64(master) ^ index)``."""
    if master_seed < 0 or index < 0:
        raise ValueError("seeds and replicate indices must be non-negative")
    return splitmix64(splitmix64(master_seed & _MASK64) ^ (index & _MASK64))


def tuning_seed(master_seed: int) -> int:
    """Master seed of the preliminary tuning batch, disjoint from the main batch."""
    return splitmix64(master_seed ^ _TUNE_TAG)


class PairStreams(NamedTuple):
    main: np.random.Generator
    aux: np.random.Generator


def make_streams(seed: int) -> PairStreams:
    main_ss, aux_ss = np.random.SeedSequence(seed).spawn(2)
    return PairStreams(
        np.random.Generator(np.random.PCG64(main_ss)),
        np.random.Generator(np.random.PCG64(aux_ss)),
    )


def replicate_streams(master_seed: int, index: int) -> PairStreams:
    return make_streams(replicate_seed(master_seed, index))


def as_streams(rng) -> PairStreams:
    """Accept a :class:`PairStreams` or a single generator (used for both roles)."""
    if isinstance(rng, PairStreams):
        return rng
    return PairStreams(rng, rng)
