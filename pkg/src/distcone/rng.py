"""Seeded, splittable random streams.

Every random artifact is reproducible from ``(GENERATOR_ID, seed, stream keys)``.
Streams are derived with :class:`numpy.random.SeedSequence`, so independent
components (one growth step, one sampling chunk, one probe batch) draw from
their own generator and never depend on how much another component consumed.
"""
from __future__ import annotations

import numpy as np

GENERATOR_ID = "numpy.PCG64+SeedSequence/v1"


def _check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an integer in [0, 2**64)")
    return seed


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the sub-stream ``keys`` of ``seed``."""
    entropy = [_check_seed(seed)] + [int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def provenance(seed: int, **extra) -> dict:
    out = {"generator": GENERATOR_ID, "numpy": np.__version__, "seed": int(seed)}
    out.update(extra)
    return out
