"""Counter-based random substreams.

Every replicate draws from its own Philox stream keyed by
``(seed, stream_id)`` with the replicate index in the counter, so the
numbers a replicate sees never depend on which thread ran it or on how
many replicates were requested in total.
"""

from __future__ import annotations

import numpy as np

_U64 = (1 << 64) - 1

# Stream identifiers; part of the reproducibility contract, do not renumber.
CLASSICAL = 0
SANDWICH = 1
EMPIRICAL = 2
MULTIPLIER = 3
RESIDUAL = 4
SUBSAMPLING = 5
DIAG_BOOT = 6
SIMULATION = 7


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= _U64:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed}")
    return seed


def substream(seed: int, stream_id: int, index: int) -> np.random.Generator:
    key = check_seed(seed) | (int(stream_id) << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=int(index) << 128))


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic child seed, e.g. one per Monte-Carlo repetition."""
    ss = np.random.SeedSequence([check_seed(seed), *map(int, path)])
    return int(ss.generate_state(1, np.uint64)[0])
