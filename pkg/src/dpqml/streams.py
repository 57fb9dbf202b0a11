"""Named random streams derived from one master seed.

Stream ``name`` is ``PCG64(SeedSequence(seed, spawn_key=(crc32(name),)))``, so
changing how one concern consumes randomness never perturbs another.
"""
from __future__ import annotations

import zlib

import numpy as np

DATA = "data-gen"
SPLIT = "split"
SHUFFLE = "shuffle"
INIT = "init"
NOISE = "dp-noise"


def stream(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(key,))))
