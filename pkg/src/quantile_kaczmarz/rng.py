"""Seeded, splittable random streams.

Every consumer of randomness draws from its own Philox (counter-based)
stream, keyed by ``(seed, purpose, *extra)``. Changing how one purpose
consumes numbers never shifts another purpose's numbers.
"""
import numpy as np

# Stable purpose ids; never renumber.
MATRIX = 0
X_TRUE = 1
CORRUPT_SUPPORT = 2
CORRUPT_VALUES = 3
SOLVER_PICK = 4
SOLVER_SAMPLE = 5
TRIAL_SYSTEM = 6
TRIAL_CORRUPTION = 7
TRIAL_SOLVER = 8
SUBSET_SAMPLE = 9
X0 = 10

_MASK64 = (1 << 64) - 1


def _seed_sequence(seed, key):
    return np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(k) for k in key))


def stream(seed, *key):
    """Independent generator for ``seed`` and the purpose path ``key``."""
    return np.random.Generator(np.random.Philox(_seed_sequence(seed, key)))


def derive_seed(seed, *key):
    """64-bit child seed; used to hand one trial its own master seed."""
    state = _seed_sequence(seed, key).generate_state(1, dtype=np.uint64)
    return int(state[0])
