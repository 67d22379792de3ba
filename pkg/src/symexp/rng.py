"""Counter-based random streams addressed by (seed, index).

Every stochastic quantity in the package draws from a Philox generator whose
128-bit key packs the user seed and a replicate/block index, and whose counter
carries a domain tag.  A stream is therefore a pure function of
``(seed, index, domain)``: work can be split across any number of workers and
re-assembled in index order without changing a single bit.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream", "DOMAIN_SPHERE", "DOMAIN_KS", "DOMAIN_CF", "DOMAIN_ALGEBRA", "MASK64"]

MASK64 = (1 << 64) - 1

DOMAIN_SPHERE = 1
DOMAIN_KS = 2
DOMAIN_CF = 3
DOMAIN_ALGEBRA = 4


def stream(seed: int, index: int, domain: int = 0) -> np.random.Generator:
    """Return the generator for replicate/block ``index`` under ``seed``."""
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    key = (int(index) & MASK64) << 64 | (int(seed) & MASK64)
    bitgen = np.random.Philox(key=key, counter=[0, 0, 0, int(domain) & MASK64])
    return np.random.Generator(bitgen)
