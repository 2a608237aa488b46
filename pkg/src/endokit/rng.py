"""Frozen deterministic shuffle used by the sampler and the splitter.

Selection plans must be reproducible byte-for-byte from (manifest, config),
including by re-implementations in other languages, so the random scheme is
spelled out here and must never change:

* Generator: SplitMix64. The state for draw ``t`` (t = 1, 2, ...) is
  ``(seed + t * 0x9E3779B97F4A7C15) mod 2**64`` and the output is
  ``mix64(state)`` where ``mix64`` is the standard SplitMix64 finalizer
  (xor-shift 30, mul 0xBF58476D1CE4E5B9, xor-shift 27,
  mul 0x94D049BB133111EB, xor-shift 31).
* Shuffle: Fisher-Yates over positions ``i = n-1 .. 1``; draw ``t = n - i``
  and swap position ``i`` with ``j = output_t mod (i + 1)``.
* Stream separation: independent shuffles derive their seed with
  ``derive_seed(seed, tag) = mix64(seed XOR mix64(tag))``.

Because the state sequence is an arithmetic progression, the outputs for all
draws can be computed in one vectorized pass; only the swaps are sequential.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """SplitMix64 output function for a single 64-bit state value."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, tag: int) -> int:
    """Derive an independent stream seed from a base seed and an integer tag."""
    return mix64((seed & MASK64) ^ mix64(tag))


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_MIX1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def shuffle_order(n: int, seed: int) -> list[int]:
    """Return the permutation the frozen Fisher-Yates shuffle applies to range(n).

    ``result[k]`` is the index (into the original sequence) of the element
    that ends up at position ``k``.
    """
    order = list(range(n))
    if n < 2:
        return order
    t = np.arange(1, n, dtype=np.uint64)
    states = np.uint64(seed & MASK64) + t * np.uint64(GOLDEN)
    draws = _mix64_vec(states)
    divisors = np.arange(n, 1, -1, dtype=np.uint64)  # i + 1 for i = n-1 .. 1
    js = (draws % divisors).tolist()
    for step, j in enumerate(js):
        i = n - 1 - step
        order[i], order[j] = order[j], order[i]
    return order


def shuffled(items: list, seed: int) -> list:
    """Return a new list holding ``items`` in the frozen shuffle order."""
    return [items[k] for k in shuffle_order(len(items), seed)]
