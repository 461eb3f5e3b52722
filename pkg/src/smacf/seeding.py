"""Deterministic seed derivation for nested and repeated runs.

Every derived seed is ``np.random.SeedSequence([master, index]).generate_state(1)[0]``,
i.e. the first 32-bit word of numpy's splitmix-based entropy expansion of the
pair. The scheme is stable across processes and platforms, so independent runs
(stability repetitions, sweep points) can be launched in any order and still
reproduce bitwise.
"""

from __future__ import annotations

import numpy as np

# Lineage tags for the internal RNG streams a trainer may need besides its
# main stream. Keeping them on separate derived seeds means optional stages
# (baseline fitting, subset selection) never perturb the main SGD stream.
BASELINE_STREAM = 1
SELECTION_STREAM = 2
PARTITION_STREAM = 3


def derive_seed(master: int, index: int) -> int:
    """Derive the seed for sub-run ``index`` of a run seeded with ``master``."""
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1)[0])
