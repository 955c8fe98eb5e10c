"""Named random streams derived from one 64-bit run seed.

Every consumer of randomness asks for a stream by purpose ("split",
"sample", "svm-order", ...) so that adding a new consumer never shifts the
draws of an existing one.
"""
import zlib

import numpy as np


def stream(seed: int, purpose: str, *extra: int) -> np.random.Generator:
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(purpose.encode("utf-8"))]
    key.extend(int(e) for e in extra)
    return np.random.default_rng(np.random.SeedSequence(key))
