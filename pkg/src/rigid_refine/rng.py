"""Platform-stable seeded RNG for reproducible experiment generation.

Algorithm, specified bit-exactly:

- State: xoshiro256++ (Blackman & Vigna). 256-bit state, output
  ``rotl(s0 + s3, 23) + s0`` over 64-bit wrapping arithmetic, then the
  standard xoshiro256 state transition with shift 17 and rotation 45.
- Seeding: the four state words are the first four outputs of SplitMix64
  run on the user seed (reduced mod 2^64).
- uniform doubles: ``(next_uint64() >> 11) * 2**-53`` in [0, 1);
  the open-interval variant ``((next_uint64() >> 11) + 0.5) * 2**-53``
  in (0, 1) feeds the Gaussian transform.
- Gaussian draws: inverse-CDF transform, ``ndtri(u)`` with u drawn from the
  open interval (one uint64 per normal deviate; no rejection, no pairing).
- Bounded integers: rejection sampling on the high bits (draw uint64, retry
  while >= floor(2^64 / n) * n, then reduce mod n); unbiased.

Every method documents exactly how many raw uint64 draws it consumes, so
experiment draw orders can be audited and replayed.
"""

import numpy as np
from scipy.special import ndtri

_MASK = (1 << 64) - 1


def _splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256PlusPlus:
    """Seedable xoshiro256++ stream with uniform, Gaussian, and integer draws."""

    def __init__(self, seed):
        state = int(seed) & _MASK
        words = []
        for _ in range(4):
            state, word = _splitmix64(state)
            words.append(word)
        if not any(words):  # all-zero state is the one forbidden state
            words[0] = 1
        self._s = words

    def next_uint64(self):
        """One raw 64-bit draw (consumes 1 draw)."""
        s = self._s
        result = (_rotl((s[0] + s[3]) & _MASK, 23) + s[0]) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self):
        """Uniform double in [0, 1) (1 draw)."""
        return (self.next_uint64() >> 11) * 2.0**-53

    def random_open(self):
        """Uniform double in (0, 1) (1 draw); safe for inverse-CDF transforms."""
        return ((self.next_uint64() >> 11) + 0.5) * 2.0**-53

    def uniform(self, low, high):
        """Uniform double in [low, high) (1 draw)."""
        return low + (high - low) * self.random()

    def uniforms(self, n, low=0.0, high=1.0):
        """n uniform doubles, in draw order (n draws)."""
        return np.array([self.uniform(low, high) for _ in range(n)])

    def normals(self, n, sigma=1.0):
        """n Gaussian deviates N(0, sigma^2) via inverse CDF (n draws)."""
        u = np.array([self.random_open() for _ in range(n)])
        return sigma * ndtri(u)

    def integer_below(self, n):
        """Unbiased integer in [0, n) by rejection (>= 1 draw; retries are rare)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = ((1 << 64) // n) * n
        while True:
            u = self.next_uint64()
            if u < limit:
                return u % n

    def shuffled_prefix(self, n, k):
        """First k entries of a Fisher-Yates shuffle of range(n) (k draws typically).

        Swaps position i with a uniform position in [i, n) for i < k; the
        prefix is a uniform ordered sample without replacement.
        """
        if not 0 <= k <= n:
            raise ValueError("need 0 <= k <= n")
        idx = np.arange(n)
        for i in range(k):
            j = i + self.integer_below(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        return idx[:k].copy()

    def unit_vector(self):
        """Isotropic unit 3-vector from 3 Gaussian draws (3 draws per attempt).

        Resamples on the (astronomically unlikely) near-zero norm.
        """
        while True:
            v = self.normals(3)
            norm = np.linalg.norm(v)
            if norm > 1e-12:
                return v / norm
