"""Deterministic, independent RNG streams.

Every stochastic component draws from a generator keyed by a tuple such as
(run_seed, round, client_id, purpose), so concurrent client execution is
reproducible and independent of scheduling order.
"""

from __future__ import annotations

import numpy as np

# Purpose tags for stream derivation. Keep values stable: they are part of
# the reproducibility contract.
TRAIN = 0
NOISE = 1
FAILURE = 2
AVAILABILITY = 3
SELECTION = 4
DATA = 5
PROFILE = 6

_MASK = (1 << 64) - 1


def rng_for(*keys: int) -> np.random.Generator:
    """Return a fresh generator for the given stream key tuple."""
    entropy = [int(k) & _MASK for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
