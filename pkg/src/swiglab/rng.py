"""Counter-based uniform streams keyed by (seed, node name, row index).

Every draw is a pure function of its key, so a row's value never depends on
how many rows were generated before it or on how the work was chunked.
"""

from __future__ import annotations

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * _M1
        x = (x ^ (x >> np.uint64(27))) * _M2
        return x ^ (x >> np.uint64(31))


def stream_key(seed: int, name: str) -> np.uint64:
    """64-bit key for the stream owned by ``name`` under ``seed``."""
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    name_word = np.uint64(int.from_bytes(digest, "little"))
    seed_word = np.uint64(int(seed) & _MASK64)
    return _mix64(np.array([seed_word ^ _mix64(np.array([name_word]))[0]]))[0]


def uniforms(seed: int, name: str, rows: np.ndarray) -> np.ndarray:
    """Uniform(0, 1) draws for the given row indices of one named stream.

    Parameters
    ----------
    seed : int
        Master seed (reduced modulo 2**64).
    name : str
        Stream name, typically the structural node that owns the noise.
    rows : ndarray of int
        Row indices (counters). Values are independent of array order.
    """
    key = stream_key(seed, name)
    counters = np.asarray(rows).astype(np.uint64, copy=False)
    with np.errstate(over="ignore"):
        v = _mix64(counters * _GOLDEN + key)
        v = _mix64(v ^ key)
    return (v >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def row_range(start: int, stop: int) -> np.ndarray:
    return np.arange(start, stop, dtype=np.uint64)
