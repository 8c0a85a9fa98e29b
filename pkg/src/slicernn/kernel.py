"""Dense float64 kernels: matmul, activations, losses, seeded RNG, finite differences.

Every matrix in this package is a 2-D, row-major, C-contiguous numpy
float64 array.  numpy supplies the arithmetic; this module adds the
numerically careful formulations (stable sigmoid, max-subtracted softmax,
log-domain cross-entropy), the reproducible random number generator, and
the central-difference gradient oracle the model tests are checked
against.

The only mutable object here is :class:`Rng`; it is always passed
explicitly, so everything else is safe to share read-only across threads.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ArgumentError, NumericError, ShapeError

Matrix = np.ndarray

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15  # 2**64 / golden ratio, rounded to odd


def _mix64(z: int) -> int:
    """SplitMix64 finalizer (Steele, Lea & Flood, OOPSLA 2014).

    A bijective avalanche mix of one 64-bit word; identical to the
    output stage of Java's SplittableRandom.
    """
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(seed: int, stream: int) -> int:
    """Derive an independent child seed from (seed, stream index).

    Defined as mix64(mix64(seed) + (stream + 1) * GOLDEN); pure integer
    arithmetic, so the derivation is identical on every platform.
    """
    return _mix64(_mix64(seed) + ((stream + 1) * _GOLDEN & _MASK64))


class Rng:
    """Counter-based SplitMix64 stream.

    The n-th output of a stream with seed s is ``mix64(s + n * GOLDEN)``
    (n starting at 1), exactly the SplitMix64 generator with the counter
    made explicit.  The counter is the only state, which buys two things:

    * identical seeds give bit-identical streams on every platform, with
      no dependence on numpy's or the OS's generators;
    * any block of draws can be produced vectorised (the outputs are a
      pure function of the counter range) without perturbing the stream.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.count = 0

    def next_u64(self) -> int:
        self.count += 1
        return _mix64(self.seed + self.count * _GOLDEN)

    def _next_block(self, n: int) -> np.ndarray:
        """Vectorised draw of the next n raw 64-bit words."""
        idx = np.arange(self.count + 1, self.count + n + 1, dtype=np.uint64)
        self.count += n
        z = np.uint64(self.seed) + idx * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    def random(self) -> float:
        """One double in [0, 1), from the top 53 bits of the next word."""
        return (self.next_u64() >> 11) * 2.0**-53

    def random_block(self, n: int) -> np.ndarray:
        """n doubles in [0, 1) as a 1-D array."""
        return (self._next_block(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ArgumentError(f"randbelow needs n > 0, got {n}")
        limit = _MASK64 + 1 - ((_MASK64 + 1) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randbelow(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices drawn uniformly from range(n), in draw order."""
        if not 0 <= k <= n:
            raise ArgumentError(f"cannot sample {k} of {n}")
        pool = list(range(n))
        for i in range(k):
            j = i + self.randbelow(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def spawn(self, stream: int) -> "Rng":
        """Independent child generator for the given stream index."""
        return Rng(derive_seed(self.seed, stream))


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product, with a shape check that names both operands."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(m: Matrix) -> Matrix:
    """Elementwise logistic function, overflow-free on both tails.

    Uses 1/(1+e^-x) for x >= 0 and e^x/(1+e^x) for x < 0 so the exponent
    argument is never positive.
    """
    m = np.asarray(m, dtype=np.float64)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    ex = np.exp(m[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh_act(m: Matrix) -> Matrix:
    """Elementwise hyperbolic tangent."""
    return np.tanh(np.asarray(m, dtype=np.float64))


def softmax_rows(m: Matrix) -> Matrix:
    """Row-wise softmax with per-row max subtraction."""
    m = np.asarray(m, dtype=np.float64)
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(m: Matrix) -> Matrix:
    """Row-wise log-softmax; the fused path that avoids log(0)."""
    m = np.asarray(m, dtype=np.float64)
    shifted = m - m.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(probs: Matrix, labels: Matrix) -> float:
    """Mean negative log-likelihood of one-hot labels under probs.

    probs rows must sum to 1 and labels must be one-hot rows of the same
    shape.  Models never call this on raw logits; they go through
    :func:`cross_entropy_logits` so the log is taken in the fused
    log-softmax domain.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise ShapeError(f"probs {probs.shape} vs labels {labels.shape}")
    picked = (probs * labels).sum(axis=1)
    return float(-np.log(picked).mean())


def seeded_uniform(rows: int, cols: int, lo: float, hi: float, rng: Rng) -> Matrix:
    """(rows x cols) matrix of i.i.d. Uniform[lo, hi) draws from rng."""
    if not lo < hi:
        raise ArgumentError(f"need lo < hi, got lo={lo} hi={hi}")
    u = rng.random_block(rows * cols).reshape(rows, cols)
    return lo + u * (hi - lo)


def finite_diff_grad(f: Callable[[Matrix], float], theta: Matrix, eps: float) -> Matrix:
    """Central-difference gradient of f at theta, coordinate by coordinate.

    f must be pure (same theta, same value).  Raises NumericError naming
    the offending coordinate if f returns a non-finite value.
    """
    if eps <= 0:
        raise ArgumentError(f"eps must be positive, got {eps}")
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    for idx in np.ndindex(theta.shape):
        bumped = theta.copy()
        bumped[idx] = theta[idx] + eps
        f_plus = f(bumped)
        bumped[idx] = theta[idx] - eps
        f_minus = f(bumped)
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"non-finite value at coordinate {idx}")
        grad[idx] = (f_plus - f_minus) / (2.0 * eps)
    return grad
