"""Pinned deterministic random number generation.

Every random draw in the harness comes from a counter-based SplitMix64
generator so that results are reproducible bit-for-bit for a fixed seed,
independent of worker count or call interleaving.  The generator is
deliberately self-contained: library generators may change streams between
releases, which would silently invalidate frozen expected values.

Stream definition (all arithmetic mod 2**64):

    output(i) = mix64(seed + (i + 1) * GAMMA)

where GAMMA = 0x9E3779B97F4A7C15 and mix64 is the SplitMix64 finalizer

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

Substream derivation absorbs a sequence of keys (integers, or strings
hashed with FNV-1a 64) into a seed:

    s_0 = seed
    s_{j+1} = mix64((s_j + GAMMA) ^ mix64(key_j + GAMMA))

Uniform doubles use the top 53 bits: (u >> 11) * 2**-53 in [0, 1).
Gaussians use Box-Muller on consecutive raw draws (2i, 2i+1), emitted as
(r*cos, r*sin) pairs; they are always produced through the vectorised
numpy path so every call site shares one libm code path.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_U64 = np.uint64
_NP_GAMMA = _U64(GAMMA)
_NP_MIX1 = _U64(_MIX1)
_NP_MIX2 = _U64(_MIX2)
_INV_2_53 = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash, used to turn string tags into stream keys."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & MASK64
    return h


def derive(seed: int, *keys: int | str) -> int:
    """Derive a substream seed by absorbing keys into ``seed``.

    Keys may be integers (window indices, scenario ordinals, replicate
    numbers) or strings (role tags such as "eval" or "windows").
    """
    s = seed & MASK64
    for key in keys:
        k = fnv1a64(key.encode()) if isinstance(key, str) else key & MASK64
        s = mix64(((s + GAMMA) & MASK64) ^ mix64((k + GAMMA) & MASK64))
    return s


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U64(30))) * _NP_MIX1
    z = (z ^ (z >> _U64(27))) * _NP_MIX2
    return z ^ (z >> _U64(31))


class Stream:
    """Counter-based SplitMix64 stream.

    The stream is a pure function of (seed, counter), so scalar and
    vectorised draws can be mixed freely and the state is one integer.
    """

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.counter = 0

    def spawn(self, *keys: int | str) -> "Stream":
        """Independent child stream; does not consume from this one."""
        return Stream(derive(self.seed, *keys))

    def next_u64(self) -> int:
        value = mix64((self.seed + ((self.counter + 1) * GAMMA)) & MASK64)
        self.counter += 1
        return value

    def u64_block(self, count: int) -> np.ndarray:
        """``count`` consecutive raw draws as a uint64 array."""
        if count < 0:
            raise ValueError("count must be >= 0")
        idx = np.arange(self.counter + 1, self.counter + count + 1, dtype=np.uint64)
        self.counter += count
        with np.errstate(over="ignore"):
            state = _U64(self.seed) + idx * _NP_GAMMA
            return _mix64_np(state)

    def uniform(self) -> float:
        """One double in [0, 1)."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform_block(self, count: int) -> np.ndarray:
        return (self.u64_block(count) >> _U64(11)).astype(np.float64) * _INV_2_53

    def randint(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.next_u64()
            if v < threshold:
                return v % n

    def randint_block(self, n: int, count: int) -> np.ndarray:
        """``count`` unbiased integers in [0, n), batched.

        Rejected positions are refilled from subsequent draws in position
        order, so the result depends only on (seed, counter, n, count).
        """
        if n <= 0:
            raise ValueError("n must be positive")
        out = self.u64_block(count)
        rejection_bound = (1 << 64) - ((1 << 64) % n)
        if rejection_bound < (1 << 64):  # n does not divide 2**64
            threshold = _U64(rejection_bound)
            bad = out >= threshold
            while bad.any():
                out[bad] = self.u64_block(int(bad.sum()))
                bad = out >= threshold
        return (out % _U64(n)).astype(np.int64)

    def normals(self, count: int) -> np.ndarray:
        """``count`` standard normals via Box-Muller, pair-consumed.

        Raw draws 2i and 2i+1 produce outputs (r cos, r sin) with
        r = sqrt(-2 ln u1), u1 in (0, 1], u2 in [0, 1).
        """
        if count == 0:
            return np.empty(0, dtype=np.float64)
        pairs = (count + 1) // 2
        raw = self.u64_block(2 * pairs)
        u1 = ((raw[0::2] >> _U64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (raw[1::2] >> _U64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(angle)
        out[1::2] = r * np.sin(angle)
        return out[:count]

    def subset(self, items: list[int], k: int) -> tuple[int, ...]:
        """Uniform k-subset without replacement via partial Fisher-Yates.

        Draw order is fixed: one randint per selected position.
        """
        if k > len(items):
            raise ValueError("k exceeds pool size")
        pool = list(items)
        for i in range(k):
            j = i + self.randint(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return tuple(pool[:k])
