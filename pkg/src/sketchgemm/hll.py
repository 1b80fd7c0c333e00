"""HyperLogLog sketches over 32-bit column indices.

A sketch is m = 2^p one-byte registers with p in {5, 6, 7}. Each key is
hashed to 64 bits; the low p bits pick a register and the remaining
64 - p bits contribute a leading-zero rank. Registers keep the maximum
rank seen, so updates commute and merging two sketches is an
element-wise max. The estimate is the usual bias-corrected harmonic
mean with a linear-counting correction for small cardinalities.

The hash is a fixed 64-bit avalanche finalizer; it is part of the
on-wire contract because merged sketches are only meaningful when every
producer hashes identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VALID_PRECISIONS = (5, 6, 7)

_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xBF58476D1CE4E5B9)
_C3 = np.uint64(0x94D049BB133111EB)

# Bias-correction constants for the supported register counts.
ALPHA = {32: 0.697, 64: 0.709, 128: 0.7213 / (1 + 1.079 / 128)}

# 2^-r for every register value a sketch can hold (ranks cap at 60).
_POW2_NEG = 2.0 ** -np.arange(64)


def hash64(key):
    """64-bit avalanche hash of a column index (scalar or array).

    z = key + 0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)          (all arithmetic mod 2^64)
    """
    scalar = np.isscalar(key) or np.ndim(key) == 0
    z = np.asarray(key, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _C1
        z = (z ^ (z >> np.uint64(30))) * _C2
        z = (z ^ (z >> np.uint64(27))) * _C3
        z = z ^ (z >> np.uint64(31))
    return int(z) if scalar else z


def _bit_length_u64(v: np.ndarray) -> np.ndarray:
    """Vectorized bit_length for uint64 arrays."""
    v = v.copy()
    out = np.zeros(v.shape, dtype=np.int64)
    for shift in (32, 16, 8, 4, 2, 1):
        big = v >= (np.uint64(1) << np.uint64(shift))
        out[big] += shift
        v[big] >>= np.uint64(shift)
    out[v > 0] += 1
    return out


def hash_ranks(keys, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Register indices and ranks for an array of keys.

    The register index comes from the low p hash bits; the rank is one
    plus the number of leading zeros of the remaining 64 - p bits within
    their 64 - p bit width, capped so every register fits in one byte.
    """
    h = hash64(np.atleast_1d(np.asarray(keys, dtype=np.uint64)))
    m = 1 << p
    idx = (h & np.uint64(m - 1)).astype(np.int64)
    w = h >> np.uint64(p)
    rank = (64 - p) - _bit_length_u64(w) + 1
    return idx, rank.astype(np.uint8)


def estimate_registers(regs: np.ndarray) -> np.ndarray:
    """Cardinality estimates for a (n, m) stack of register arrays."""
    regs = np.atleast_2d(regs)
    m = regs.shape[1]
    raw = ALPHA[m] * m * m / _POW2_NEG[regs].sum(axis=1)
    zeros = (regs == 0).sum(axis=1)
    linear = np.where(zeros > 0, m * np.log(m / np.maximum(zeros, 1)), 0.0)
    return np.where((raw <= 2.5 * m) & (zeros > 0), linear, raw)


@dataclass
class HllSketch:
    """One mergeable cardinality sketch: precision p and 2^p registers."""

    p: int
    registers: np.ndarray  # uint8, length 2^p

    def __post_init__(self):
        if self.p not in VALID_PRECISIONS:
            raise ValueError(f"precision must be one of {VALID_PRECISIONS}, got {self.p}")
        if len(self.registers) != 1 << self.p:
            raise ValueError("register array length does not match precision")

    @classmethod
    def empty(cls, p: int) -> "HllSketch":
        return cls(p, np.zeros(1 << p, dtype=np.uint8))

    @classmethod
    def from_keys(cls, keys, p: int) -> "HllSketch":
        s = cls.empty(p)
        keys = np.asarray(keys, dtype=np.uint64)
        if len(keys):
            idx, rank = hash_ranks(keys, p)
            np.maximum.at(s.registers, idx, rank)
        return s

    @property
    def m(self) -> int:
        return 1 << self.p

    def update(self, key) -> None:
        """Fold one key into the sketch (idempotent for repeated keys)."""
        idx, rank = hash_ranks(np.asarray([key], dtype=np.uint64), self.p)
        i = int(idx[0])
        if rank[0] > self.registers[i]:
            self.registers[i] = rank[0]

    def merge(self, other: "HllSketch") -> "HllSketch":
        """Union of the two key sets, as a new sketch."""
        if self.p != other.p:
            raise ValueError(f"precision mismatch: {self.p} != {other.p}")
        return HllSketch(self.p, np.maximum(self.registers, other.registers))

    def estimate(self) -> float:
        """Estimated number of distinct keys seen so far."""
        return float(estimate_registers(self.registers[None, :])[0])

    def copy(self) -> "HllSketch":
        return HllSketch(self.p, self.registers.copy())
