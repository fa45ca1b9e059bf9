"""
Counter-based random streams.

Every random draw in the toolkit comes from a Philox generator keyed by
(master seed, stream id, index). Streams are independent of scheduling, so
splitting trials across workers or chunks never changes results.
"""

import zlib

import numpy as np

# Stream ids are stable names, hashed so that new streams never shift old ones.
TRIAL = "trial"
MATRIX = "matrix"
SUBSELECT = "subselect"
SPECTRUM = "spectrum"
NOISE = "noise"
EVENT = "event"

_SEED_MASK = (1 << 64) - 1


def stream_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream_generator(master_seed: int, stream: str, index: int = 0) -> np.random.Generator:
    """Generator for one (master seed, stream, index) key."""
    seed_seq = np.random.SeedSequence(
        entropy=int(master_seed) & _SEED_MASK,
        spawn_key=(stream_id(stream), int(index)),
    )
    return np.random.Generator(np.random.Philox(seed_seq))


def as_generator(seed) -> np.random.Generator:
    """Accept a Generator or an integer seed (mapped to the NOISE stream)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return stream_generator(int(seed), NOISE)
