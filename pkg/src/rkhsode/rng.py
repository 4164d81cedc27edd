"""Deterministic random-stream derivation.

All randomness in the package flows from a single root seed. Components
derive their own independent streams from (root, label) so that adding or
reordering one consumer never perturbs the draws seen by another.
"""

import zlib

import numpy as np


def child_seed(root_seed: int, *labels) -> int:
    """Derive a stable 63-bit seed from a root seed and string/int labels."""
    keys = [int(root_seed) & 0xFFFFFFFF]
    for lab in labels:
        if isinstance(lab, (int, np.integer)):
            keys.append(int(lab) & 0xFFFFFFFF)
        else:
            keys.append(zlib.crc32(str(lab).encode("utf-8")))
    ss = np.random.SeedSequence(keys)
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def generator(root_seed: int, *labels) -> np.random.Generator:
    """A numpy Generator seeded by child_seed(root_seed, *labels)."""
    return np.random.default_rng(child_seed(root_seed, *labels))
