"""Deterministic stream derivation for parallel Monte Carlo.

Every random quantity in the package is drawn from a counter-based Philox
generator keyed by ``(seed, stream id)``. Streams are cheap to construct,
statistically independent for distinct keys, and independent of execution
order, so serial and parallel runs of the same experiment are bit-identical.

Stream ids are namespaced: a small domain tag in the high bits keeps
replicate streams, coupling-draw streams and inner-redraw streams disjoint
even when their indices coincide.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# domain tags (high 16 bits of the second key word)
DOMAIN_REPLICATE = 0
DOMAIN_COUPLING = 1
DOMAIN_DELTA_CONFIG = 2
DOMAIN_DELTA_INNER = 3
DOMAIN_SELF_CHECK = 4
DOMAIN_MC_VOLUME = 5
DOMAIN_BINOMIAL = 6
DOMAIN_BOOTSTRAP = 7

_INDEX_BITS = 48


def stream(seed: int, domain: int, index: int = 0) -> np.random.Generator:
    """Generator for stream ``index`` of ``domain`` under ``seed``."""
    if not 0 <= domain < (1 << 16):
        raise ValueError(f"domain tag out of range: {domain}")
    if not 0 <= index < (1 << _INDEX_BITS):
        raise ValueError(f"stream index out of range: {index}")
    key = np.array(
        [seed & _MASK64, (domain << _INDEX_BITS) | index], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(key=key))
