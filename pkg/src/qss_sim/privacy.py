"""Toeplitz-hash privacy amplification.

The hash is linear over GF(2), so hashing the dealer's combined bit string
gives the XOR of the players' hashed strings whenever the raw strings
satisfy the same relation.
"""
from __future__ import annotations

from typing import Mapping

import numpy as np
from scipy.signal import fftconvolve


def toeplitz_seed(seed: int, n_in: int, n_out: int) -> np.ndarray:
    """The n_out + n_in - 1 random bits defining T[i, j] = s[i - j + n_in - 1]."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x7E5,)))
    return rng.integers(0, 2, size=n_out + n_in - 1, dtype=np.uint8)


def toeplitz_hash(bits: np.ndarray, n_out: int, seed: int) -> np.ndarray:
    x = np.asarray(bits, dtype=np.uint8)
    n_in = x.size
    if n_out > n_in:
        raise ValueError(f"output length {n_out} exceeds input length {n_in}")
    if n_out == 0:
        return np.zeros(0, dtype=np.uint8)
    s = toeplitz_seed(seed, n_in, n_out)
    # (T x)_i = sum_j s[i - j + n_in - 1] x_j = (s * x)[i + n_in - 1]
    conv = fftconvolve(s.astype(float), x.astype(float))[n_in - 1 : n_in - 1 + n_out]
    return (np.rint(conv).astype(np.int64) & 1).astype(np.uint8)


def extract_final_key(x_bit_strings: Mapping[str, np.ndarray], l_bits: int, seed: int) -> dict[str, np.ndarray]:
    """Hash every participant's reconciled X string to ``l_bits`` with one shared seed."""
    lengths = {len(v) for v in x_bit_strings.values()}
    if len(lengths) > 1:
        raise ValueError(f"reconciled strings differ in length: {sorted(lengths)}")
    return {name: toeplitz_hash(bits, l_bits, seed) for name, bits in x_bit_strings.items()}
