"""Counter-based seed splitting.

Each stream is identified by the run seed plus a tuple of integers (question
index, attempt, ...), so workers can derive their generators independently and
the corpus does not depend on scheduling order.
"""

from __future__ import annotations

import numpy as np


def rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))
