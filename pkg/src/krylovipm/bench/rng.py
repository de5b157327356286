"""Portable counter-based random stream (SplitMix64).

Draw ``i`` (0-based, counted across the whole stream) is::

    z = (seed + (i + 1) * 0x9E3779B97F4A7C15) mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    z =  z ^ (z >> 31)

A uniform double in [0, 1) is ``(z >> 11) * 2**-53``. Normals use Box-Muller on
consecutive uniform pairs ``(u1, u2)``: ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``.
Integers in [0, k) are ``floor(u * k)``. Every consumer draws in a fixed order,
so any language with 64-bit unsigned arithmetic reproduces the same problems.
"""
import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed, start, count):
    """Raw 64-bit outputs ``start .. start+count-1`` of the stream for ``seed``."""
    with np.errstate(over="ignore"):
        ctr = np.arange(start + 1, start + count + 1, dtype=np.uint64)
        z = np.uint64(seed % 2**64) + ctr * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
    return z


class Stream:
    def __init__(self, seed):
        self.seed = int(seed)
        self.position = 0

    def raw(self, count):
        out = splitmix64(self.seed, self.position, count)
        self.position += count
        return out

    def uniform(self, count, low=0.0, high=1.0):
        u = (self.raw(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return low + (high - low) * u

    def normal(self, count):
        u = self.uniform(2 * count)
        u1, u2 = u[0::2], u[1::2]
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)

    def integers(self, count, k):
        return np.minimum(np.floor(self.uniform(count) * k).astype(np.int64), k - 1)

    def child(self, tag):
        """Independent stream derived from this seed and an integer tag."""
        return Stream(int(splitmix64(self.seed ^ (tag * 0x632BE59BD9B4E019 % 2**64), 0, 1)[0]))
