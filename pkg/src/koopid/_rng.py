"""Named random substreams derived from one run seed.

Each component (input knots, RBF centers, ...) draws from an independent
stream keyed by name, so changing one consumer never perturbs another.
"""
from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(key,)))
