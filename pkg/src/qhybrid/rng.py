"""Named random sub-streams derived from one integer seed.

``substream(seed, "init")`` and ``substream(seed, "shuffle")`` are
independent generators, so reseeding one component never shifts another.
"""
import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])
