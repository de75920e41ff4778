"""Seed derivation: every replicate gets its own stream addressed by index."""

import numpy as np


def stream(seed, *key):
    """Generator for ``(seed, key...)``; independent of how many other streams exist."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
