"""Counter-based random numbers keyed by (seed, step, stream, cell, slot).

Every draw is a pure function of its key, so results never depend on how
cells are split across workers or in which order they are visited.
"""

from __future__ import annotations

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)

# stream identifiers
PREDICT = 1
BIRTH = 2
RESAMPLE = 3


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash_key(seed: int, step: int, stream: int, cell, slot) -> np.ndarray:
    cell = np.asarray(cell, dtype=np.int64).astype(np.uint64)
    slot = np.asarray(slot, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        h = _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)
        h = _mix(h ^ (np.uint64(step) * _GOLDEN))
        h = _mix(h ^ (np.uint64(stream) * _M1))
        h = _mix(h ^ (cell * _GOLDEN))
        h = _mix(h ^ (slot * _M2))
    return h


def uniform(seed: int, step: int, stream: int, cell, slot) -> np.ndarray:
    """Uniform draws in [0, 1) with 53-bit resolution."""
    h = hash_key(seed, step, stream, cell, slot)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def normal(seed: int, step: int, stream: int, cell, slot) -> np.ndarray:
    """Standard normal draws (Box-Muller on two derived uniforms)."""
    slot = np.asarray(slot, dtype=np.int64)
    u1 = uniform(seed, step, stream, cell, 2 * slot)
    u2 = uniform(seed, step, stream, cell, 2 * slot + 1)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
