"""Keyed random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from ``(seed, purpose, *indices)``.  Two draws with the same key are
bit-identical regardless of call order, which keeps Monte Carlo trials
replayable and safe to run in parallel.
"""
from __future__ import annotations

import numpy as np

# purpose tags; values are part of the key and must never be renumbered
FL_CHANNEL = 1
IT_CHANNEL = 2
DATASET = 3
SIZES = 4
MINIBATCH = 5
NOISE = 6
RSCA = 7
CHANNEL_TERM = 8
COMPRESSION = 9
TRIAL = 10


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return seed


def keyed(seed: int, *path: int) -> np.random.Generator:
    """Return a generator keyed by ``seed`` and an integer path."""
    entropy = [_check_seed(seed), *(int(p) for p in path)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def trial_seed(base_seed: int, trial: int) -> int:
    """Derive a 63-bit seed for Monte Carlo trial ``trial``."""
    ss = np.random.SeedSequence([_check_seed(base_seed), TRIAL, int(trial)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
