"""Seed derivation utilities.

Two generators are used throughout the package and both are counter-based,
so any unit of work (a replication, a tree, a bootstrap draw block) can be
keyed directly without consuming shared stream state:

* numpy's Philox generator, keyed with ``(seed, tag)``, drives everything
  that lives in Python land (data generation, sample splits, CV folds,
  multiplier draws).  Replication ``r`` of a Monte Carlo run is keyed with
  ``(seed, r * _TAG_STRIDE + tag)`` and therefore depends on ``(seed, r)``
  only, never on scheduling or on how many replications ran before it.
* splitmix64 drives the tree-growing kernels.  It is a handful of integer
  operations, cheap to evaluate inside compiled code, and the pure-Python
  mirror produces bit-identical streams.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_SM64_GAMMA = 0x9E3779B97F4A7C15

# Tag layout for Philox keys.  A key is the pair (seed, unit * _TAG_STRIDE
# + tag); "unit" is a replication index (or 0 for top-level calls) and the
# tag picks the role of the stream inside that unit.
_TAG_STRIDE = 16

TAG_DESIGN = 0
TAG_RESPONSE = 1
TAG_SPLIT = 2
TAG_FOREST = 3
TAG_FOLDS = 4
TAG_CV_MAIN = 5
TAG_CV_AUX = 6
TAG_MULTIPLIER = 7
TAG_TEST = 8


def philox(seed: int, tag: int = 0, unit: int = 0) -> np.random.Generator:
    """Return a Philox generator keyed by ``(seed, unit, tag)``."""
    if unit < 0 or tag < 0 or tag >= _TAG_STRIDE:
        raise ValueError("unit must be >= 0 and tag in [0, %d)" % _TAG_STRIDE)
    key = np.array([seed & _MASK64, (unit * _TAG_STRIDE + tag) & _MASK64],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, tag: int, unit: int = 0) -> int:
    """Derive a 63-bit child seed; used to key nested components."""
    return int(philox(seed, tag, unit).integers(0, 2 ** 63))


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state once; returns ``(new_state, output)``.

    Mirrors the compiled kernel bit for bit (all arithmetic mod 2**64).
    """
    state = (state + _SM64_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def tree_seeds(root_seed: int, num_trees: int) -> np.ndarray:
    """Expand a root seed into per-tree seeds.

    Tree ``t`` gets the mix of ``root_seed + (t + 1) * gamma``, a pure
    counter construction: seeds can be generated for any tree independently
    and trees may be grown in any order or in parallel.
    """
    out = np.empty(num_trees, dtype=np.uint64)
    for t in range(num_trees):
        _, val = splitmix64((root_seed + t * _SM64_GAMMA) & _MASK64)
        out[t] = val
    return out
