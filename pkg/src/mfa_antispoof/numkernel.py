"""Dense numeric kernel: seeded RNG, linear maps, softmax and a
central finite-difference gradient estimator.

Tensors are plain numpy arrays (row-major). Training runs in float32;
gradient checks must use float64.
"""
import math

import numba
import numpy as np

_MASK64 = (1 << 64) - 1


class ShapeError(ValueError):
    pass


class NonFiniteError(ArithmeticError):
    pass


def splitmix64(state):
    """Advance a SplitMix64 state; returns ``(new_state, output)`` as ints."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


@numba.njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@numba.njit(cache=True)
def _next(s):
    # xoshiro256**
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@numba.njit(cache=True)
def _fill_u64(s, out):
    for i in range(out.shape[0]):
        out[i] = _next(s)


@numba.njit(cache=True)
def _fill_uniform(s, out):
    for i in range(out.shape[0]):
        out[i] = (_next(s) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _fill_normal(s, out):
    two_pi = 2.0 * np.pi
    scale = 1.0 / 9007199254740992.0
    for i in range(out.shape[0]):
        u1 = (_next(s) >> np.uint64(11)) * scale
        u2 = (_next(s) >> np.uint64(11)) * scale
        out[i] = np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(two_pi * u2)


class Rng:
    """xoshiro256** generator seeded through SplitMix64.

    Uniform doubles take the top 53 bits of each output. Every Gaussian
    consumes exactly two uniforms ``u1, u2`` and returns
    ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``; the sine branch is discarded
    so the stream position never depends on call history.
    """

    def __init__(self, seed=0):
        self.seed = int(seed) & _MASK64
        sm = self.seed
        words = []
        for _ in range(4):
            sm, z = splitmix64(sm)
            words.append(z)
        self.state = np.array(words, dtype=np.uint64)

    def next_u64(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        out = np.empty(n, dtype=np.uint64)
        _fill_u64(self.state, out)
        return int(out[0]) if size is None else out.reshape(size)

    def random(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        out = np.empty(n, dtype=np.float64)
        _fill_uniform(self.state, out)
        return float(out[0]) if size is None else out.reshape(size)

    def uniform(self, low, high, size=None):
        u = self.random(size)
        return low + (high - low) * u

    def normal(self, size=None, scale=1.0):
        n = 1 if size is None else int(np.prod(size))
        out = np.empty(n, dtype=np.float64)
        _fill_normal(self.state, out)
        out *= scale
        return float(out[0]) if size is None else out.reshape(size)

    def below(self, n):
        """Integer in ``[0, n)``."""
        return min(int(self.random() * n), n - 1)

    def permutation(self, n):
        """Fisher-Yates shuffle of ``range(n)``."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return np.array(idx, dtype=np.int64)


def linear(W, x, b):
    """``W @ x + b`` over the last axis of ``x`` (leading axes are batch)."""
    W = np.asarray(W)
    x = np.asarray(x)
    b = np.asarray(b)
    if W.ndim != 2:
        raise ShapeError(f"weight must be 2-D, got shape {W.shape}")
    if x.shape[-1] != W.shape[1]:
        raise ShapeError(
            f"input width {x.shape[-1]} does not match weight columns {W.shape[1]}")
    if b.shape != (W.shape[0],):
        raise ShapeError(f"bias length {b.shape} does not match weight rows {W.shape[0]}")
    return x @ W.T + b


def softmax(e, axis=-1):
    e = np.asarray(e)
    if e.size == 0 or e.shape[axis] == 0:
        raise ShapeError("softmax of an empty sequence")
    z = np.exp(e - e.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def finite_diff_grad(f, x, h=1e-5):
    """Central-difference gradient of scalar ``f`` at ``x``.

    ``x`` is perturbed in place and restored after each probe, so callers
    can pass a parameter array that ``f`` reads through a closure.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    if x.dtype != np.float64:
        raise TypeError("finite differences require float64 tensors")
    if not x.flags.c_contiguous:
        raise ValueError("x must be C-contiguous so probes write through")
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NonFiniteError(f"non-finite objective while probing coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def init_uniform(rng, shape, fan_in, dtype=np.float64):
    """Uniform in +-1/sqrt(fan_in)."""
    bound = 1.0 / math.sqrt(fan_in)
    return np.array(rng.uniform(-bound, bound, shape), dtype=dtype)
