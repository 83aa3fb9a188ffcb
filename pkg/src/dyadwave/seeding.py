"""Named RNG streams so every sampler is reproducible and independent.

All randomness flows through PCG64 generators keyed by (seed, stream, ...).
Negative level indices are mapped through a 32-bit mask so they make valid
spawn keys.
"""

import numpy as np

STREAM_OMEGA = 0
STREAM_BOUNDARY = 1
STREAM_TRIALS = 2
STREAM_SIGNS = 3

_KEY_MASK = 0xFFFFFFFF


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    spawn = tuple(int(k) & _KEY_MASK for k in key)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn)
    return np.random.Generator(np.random.PCG64(ss))
