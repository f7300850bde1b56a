"""Deterministic seed derivation shared by the generator, trainer, and folds.

A single user-facing seed fans out into independent sub-streams (one per
subject, per fold, per RNG role) through a splitmix64 scramble, so results
are reproducible and the derivation is easy to restate in any language.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 output step for the 64-bit state ``x``.

    Constants are the ones from Steele et al.'s SplitMix generator; the
    function is a bijection on 64-bit integers with strong avalanche, which
    is all we need to decorrelate nearby seeds.
    """
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(seed: int, index: int) -> int:
    """Sub-seed for stream ``index``: ``splitmix64(seed XOR index)``."""
    if index < 0:
        raise ValueError(f"stream index must be non-negative, got {index}")
    return splitmix64((seed ^ index) & _MASK64)
