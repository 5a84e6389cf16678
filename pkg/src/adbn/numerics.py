"""Seeded randomness and elementary activations shared by every other module.

All floating point work is float64. The random generator is a counter-based
splitmix64 defined here so that a given seed produces the same stream on any
platform; model training, data synthesis and detection all draw from it.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / (1 << 53)


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class Rng:
    """Counter-based splitmix64 generator.

    Draw i of a given seed is mix64(seed + (i+1) * golden), so the stream is a
    pure function of (seed, counter) and identical across platforms. Instances
    are cheap; never share one between concurrent owners.
    """

    def __init__(self, seed):
        self.seed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self._counter = 0

    def next_u64(self, n):
        """Return the next n raw 64-bit draws as a uint64 array."""
        if n < 0:
            raise ValueError("draw count must be >= 0")
        with np.errstate(over="ignore"):
            idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
            out = _mix64(self.seed + idx * _GOLDEN)
        self._counter += n
        return out

    def uniform(self, size=None):
        """Uniform float64 in [0, 1); scalar when size is None."""
        if size is None:
            return float(self.uniform(1)[0])
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape)) if shape else 1
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * _INV53
        return u.reshape(shape)

    def normal(self, size=None, mean=0.0, std=1.0):
        """Gaussian draws via Box-Muller; consumes an even number of u64s."""
        if size is None:
            return float(self.normal(1, mean, std)[0])
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        raw = self.next_u64(2 * pairs)
        # u1 in (0, 1] so the log never sees zero
        u1 = ((raw[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53
        u2 = (raw[pairs:] >> np.uint64(11)).astype(np.float64) * _INV53
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
        return (mean + std * z[:n]).reshape(shape)

    def integers(self, low, high, size=None):
        """Integers uniform in [low, high). Modulo draw, fine for index use."""
        if high <= low:
            raise ValueError("need high > low")
        span = np.uint64(high - low)
        if size is None:
            return int(low + int(self.next_u64(1)[0] % span))
        out = low + (self.next_u64(int(size)) % span).astype(np.int64)
        return out

    def permutation(self, n):
        """Deterministic permutation of range(n) by sorting raw draws."""
        return np.argsort(self.next_u64(n), kind="stable")


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def softmax(z):
    """Softmax of a vector (or of each row of a matrix).

    Shift-invariant formulation: the max is subtracted before exponentiation.
    Raises ValueError on empty input.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0:
        raise ValueError("softmax of empty input")
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def bernoulli_sample(p, rng):
    """Sample {0,1} values with per-entry success probability p.

    p may be any shape; entries outside [0, 1] raise ValueError.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.size and (np.min(p) < 0.0 or np.max(p) > 1.0):
        raise ValueError("bernoulli probabilities must lie in [0, 1]")
    u = rng.uniform(p.shape if p.shape else 1)
    return (u < p).astype(np.float64)
