"""Deterministic random streams.

Every stochastic routine in the package draws from a Philox4x64 counter
generator keyed by (seed, stream). Streams with distinct keys are
independent, so work can be split across processes and still reproduce
bit-for-bit: replicate k of a bootstrap always uses stream k, whichever
worker runs it.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int, counter: int = 0) -> np.random.Generator:
    """Generator for stream ``counter`` of the run seeded by ``seed``."""
    key = np.array([seed & _MASK64, counter & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
