"""Keyed random streams.

Every random draw in a run comes from a generator keyed by
``(master_seed, purpose, *keys)``. The key is hashed by numpy's
``SeedSequence``, which is stable across platforms and releases, so the draws
for node ``i`` in round ``t`` never depend on the order nodes are processed.
"""

import numpy as np

# purpose tags
TOPOLOGY = 1
ADVERSARY = 2
DATA = 3
TEST_DATA = 4
PARTITION = 5
INIT = 6
TRAIN = 7
ATTACK = 8
SWEEP = 9

_U64 = (1 << 64) - 1


def check_seed(seed):
    seed = int(seed)
    if seed < 0 or seed > _U64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(master_seed, *keys):
    """Return an independent ``numpy.random.Generator`` for the given key."""
    entropy = [check_seed(master_seed)] + [int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(master_seed, *keys):
    """Derive a child unsigned 64-bit seed from a master seed and integer keys."""
    entropy = [check_seed(master_seed)] + [int(k) for k in keys]
    word = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0]
    return int(word)
