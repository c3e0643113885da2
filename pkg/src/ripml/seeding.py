"""Seed derivation and the pinned random stream used for projection matrices.

All randomness in the package is derived from one master seed:

``derive_seed(seed, *path)`` = first 8 bytes (little-endian) of
``blake2b(b"ripml-seed-v1" + "\\x1f".join(map(str, (seed, *path))))``.

``uniform_stream`` draws raw 64-bit outputs of numpy's PCG64 (seeded through
SeedSequence, both stable across numpy releases) and maps each to
``(raw >> 11) * 2**-53`` in [0, 1).  Gaussian variates use Box-Muller on
consecutive pairs.  Changing any of this requires bumping
``GENERATOR_VERSION``.
"""

from __future__ import annotations

import hashlib

import numpy as np

GENERATOR_VERSION = 1
GENERATOR_NAME = "pcg64-raw53-boxmuller"

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *path) -> int:
    """Deterministically derive a 64-bit child seed from ``seed`` and a path."""
    msg = "\x1f".join(str(p) for p in (int(seed), *path)).encode()
    digest = hashlib.blake2b(b"ripml-seed-v1" + msg, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def raw_stream(seed: int, n: int) -> np.ndarray:
    """``n`` raw 64-bit outputs of PCG64 seeded with ``seed``."""
    return np.random.PCG64(check_seed(seed)).random_raw(n)


def uniform_stream(seed: int, n: int) -> np.ndarray:
    """``n`` doubles in [0, 1) with 53 random bits each."""
    return (raw_stream(seed, n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def normal_stream(seed: int, n: int) -> np.ndarray:
    """``n`` standard normal variates by Box-Muller."""
    half = (n + 1) // 2
    u = uniform_stream(seed, 2 * half)
    u1 = 1.0 - u[0::2]  # (0, 1]
    u2 = u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * half)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:n]


def sign_stream(seed: int, n: int) -> np.ndarray:
    """``n`` values in {+1, -1} taken from the top bit of each raw output."""
    top = (raw_stream(seed, n) >> np.uint64(63)).astype(np.float64)
    return 1.0 - 2.0 * top


def rng(seed: int) -> np.random.Generator:
    """A numpy Generator for sampling that does not need cross-version pinning."""
    return np.random.Generator(np.random.PCG64(check_seed(seed)))
