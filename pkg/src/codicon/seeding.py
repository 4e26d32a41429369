"""Named, collision-free RNG streams derived from one master seed.

Every consumer of randomness gets its own generator, keyed by a purpose tag
plus optional indices (iteration, episode, ...). Adding or removing a consumer
therefore never shifts anyone else's stream — the reduction-identity check
(codicon with the intrinsic term switched off vs. the plain baseline) depends
on this staying true.
"""

from __future__ import annotations

import numpy as np

# purpose tags; values are part of the on-disk reproducibility contract
POLICY_INIT = 0
CRITIC_INIT = 1
RANKING_INIT = 2
TARGETS = 3
EPISODE = 4
EVAL = 5
META = 6  # fresh trajectory batches for the outer objective
DUMP = 7  # rollouts behind the state/reward dump


def stream(master_seed: int, tag: int, *indices: int) -> np.random.Generator:
    """Independent generator for (master_seed, tag, *indices)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([master_seed, tag, *indices])))
