"""Deterministic random-stream derivation.

All randomness in a run flows from one seed through SeedSequence.spawn,
which yields statistically independent child streams: one coordinator
stream (initial roster, pairings, shared init direction) plus three per
worker (data sampling, privacy noise, wake-up clock).  PCG64 has period
2^128, so stream exhaustion is impossible at any simulated scale.
"""

from dataclasses import dataclass
from typing import List

import numpy as np

GENERATOR_PERIOD = 2 ** 128  # PCG64


@dataclass
class StreamBundle:
    coordinator: np.random.Generator
    data: List[np.random.Generator]
    noise: List[np.random.Generator]
    clock: List[np.random.Generator]

    @property
    def m(self):
        return len(self.data)


def seed_streams(master_seed, m):
    """Spawn the coordinator stream plus (data, noise, clock) per worker."""
    if m < 1:
        raise ValueError("m must be >= 1")
    ss = np.random.SeedSequence(master_seed)
    kids = ss.spawn(1 + 3 * m)
    return StreamBundle(
        coordinator=np.random.default_rng(kids[0]),
        data=[np.random.default_rng(kids[1 + 3 * i]) for i in range(m)],
        noise=[np.random.default_rng(kids[2 + 3 * i]) for i in range(m)],
        clock=[np.random.default_rng(kids[3 + 3 * i]) for i in range(m)],
    )
