"""Named random streams derived from a single integer seed.

Every consumer of randomness asks for a stream by purpose string. The stream
id is a stable hash of that string, so adding a new consumer never shifts the
numbers an existing consumer sees.
"""

import zlib

import numpy as np


def stream_id(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, *extra: int) -> np.random.Generator:
    """Return a Generator for ``(seed, purpose, *extra)``.

    ``extra`` lets callers derive sub-streams, e.g. one per config index or per
    training epoch, without inventing new purpose strings.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, stream_id(purpose), *(int(e) for e in extra)]
    return np.random.default_rng(np.random.SeedSequence(entropy))
