"""Named, fork-deterministic random substreams.

All randomness in a run flows from one root seed. Substreams are derived
from (seed, label, label, ...) so that e.g. per-sample generator streams
are independent of iteration order: generating sample 1234 in a worker
process draws exactly the same values as generating it serially.
"""

from __future__ import annotations

import numpy as np


def _label_key(label: str | int) -> int:
    if isinstance(label, int):
        if label < 0:
            raise ValueError(f"substream label must be nonnegative, got {label}")
        return label
    # stable string -> int mapping; independent of PYTHONHASHSEED
    return int.from_bytes(label.encode("utf-8"), "big") % (2**63)


def substream(seed: int, *labels: str | int) -> np.random.Generator:
    """Generator for the substream named by ``labels`` under ``seed``."""
    key = tuple(_label_key(x) for x in labels)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def derive_seed(seed: int, *labels: str | int) -> int:
    """Stable derived integer seed (e.g. one root seed -> per-split seeds)."""
    key = tuple(_label_key(x) for x in labels)
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])
