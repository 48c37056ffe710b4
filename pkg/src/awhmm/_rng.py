"""Seed derivation shared by every sampling routine.

All randomness in the package flows from integer seeds.  Sub-seeds are
derived with :class:`numpy.random.SeedSequence`, which hashes the key tuple
deterministically across platforms and Python versions, so a derived seed
depends only on its keys and never on call order.
"""

import numpy as np

DEFAULT_SEED = 20170101


def derive_seed(seed, *keys):
    """Return a 63-bit integer seed derived from ``seed`` and ``keys``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) & 0xFFFFFFFF for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def make_rng(seed, *keys):
    if keys:
        seed = derive_seed(seed, *keys)
    return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
