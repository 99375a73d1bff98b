"""Attentive statistics pooling with an analytical backward pass.

Given frames ``z_t`` the layer scores ``e_t = v . tanh(W z_t + b) + k``,
normalises them with a softmax over time into ``alpha``, and returns the
attention-weighted mean and standard deviation. All functions accept
either a single sequence ``(T, D)`` or a batch ``(N, T, D)``; parameter
gradients are summed over the batch.
"""
from dataclasses import dataclass, field

import numpy as np

from .numkernel import ShapeError, init_uniform, softmax

EPS_VAR = 1e-8


@dataclass
class AspParams:
    W: np.ndarray  # (A, D)
    b: np.ndarray  # (A,)
    v: np.ndarray  # (A,)
    k: np.ndarray  # 0-d

    @property
    def in_dim(self):
        return self.W.shape[1]

    @property
    def att_dim(self):
        return self.W.shape[0]

    def tensors(self):
        return {"W": self.W, "b": self.b, "v": self.v, "k": self.k}

    def size(self):
        return sum(t.size for t in self.tensors().values())

    @classmethod
    def init(cls, rng, in_dim, att_dim=None, dtype=np.float64):
        A = att_dim or in_dim
        return cls(
            W=init_uniform(rng, (A, in_dim), in_dim, dtype),
            b=init_uniform(rng, (A,), in_dim, dtype),
            v=init_uniform(rng, (A,), A, dtype),
            k=init_uniform(rng, (), A, dtype),
        )

    @classmethod
    def zeros_like(cls, other):
        return cls(*(np.zeros_like(t) for t in other.tensors().values()))


@dataclass
class AspSummary:
    alpha: np.ndarray  # (..., T)
    mu: np.ndarray  # (..., D)
    sigma: np.ndarray  # (..., D)
    cache: dict = field(default=None, repr=False)

    @property
    def r(self):
        return np.concatenate([self.mu, self.sigma], axis=-1)


def asp_forward(Z, params, keep_cache=True):
    Z = np.asarray(Z)
    if Z.ndim < 2:
        raise ShapeError(f"expected (T, D) frames, got shape {Z.shape}")
    if Z.shape[-2] == 0:
        raise ShapeError("cannot pool an empty sequence (T = 0)")
    if Z.shape[-1] != params.in_dim:
        raise ShapeError(f"frame width {Z.shape[-1]} does not match attention input width {params.in_dim}")

    hid = np.tanh(Z @ params.W.T + params.b)
    e = hid @ params.v + params.k
    alpha = softmax(e, axis=-1)
    a = alpha[..., None]
    mu = (a * Z).sum(axis=-2)
    # equals sum(a z^2) - mu^2 since sum(a) = 1, without the cancellation
    dev = Z - mu[..., None, :]
    var = (a * dev * dev).sum(axis=-2)
    active = var > EPS_VAR
    sigma = np.sqrt(np.where(active, var, EPS_VAR))
    cache = None
    if keep_cache:
        cache = {"Z": Z, "hid": hid, "params": params, "active": active}
    return AspSummary(alpha, mu, sigma, cache)


def asp_backward(summary, grad_r):
    """Back-propagate ``dL/dr`` (``r = [mu; sigma]``) to the frames and params.

    Returns ``(grad_Z, grad_params)``. Where the variance clamp is active
    sigma is a constant and passes no gradient.
    """
    if summary.cache is None:
        raise ValueError("summary carries no cache; run asp_forward with keep_cache=True")
    c = summary.cache
    Z, hid, p, active = c["Z"], c["hid"], c["params"], c["active"]
    alpha, mu, sigma = summary.alpha, summary.mu, summary.sigma
    D = Z.shape[-1]
    grad_r = np.asarray(grad_r)
    if grad_r.shape[-1] != 2 * D:
        raise ShapeError(f"upstream gradient width {grad_r.shape[-1]} != {2 * D}")
    g_mu = grad_r[..., :D]
    g_var = np.where(active, grad_r[..., D:] / (2.0 * sigma), 0.0)
    g_mu = g_mu - 2.0 * mu * g_var

    # mu = sum a z, m2 = sum a z^2
    g_alpha = Z @ g_mu[..., None] + (Z * Z) @ g_var[..., None]
    g_alpha = g_alpha[..., 0]
    grad_Z = alpha[..., None] * (g_mu[..., None, :] + 2.0 * Z * g_var[..., None, :])

    g_e = alpha * (g_alpha - (alpha * g_alpha).sum(axis=-1, keepdims=True))
    g_pre = g_e[..., None] * p.v * (1.0 - hid * hid)
    grad_Z = grad_Z + g_pre @ p.W

    lead = tuple(range(Z.ndim - 1))
    g_pre2 = g_pre.reshape(-1, g_pre.shape[-1])
    grads = AspParams(
        W=g_pre2.T @ Z.reshape(-1, D),
        b=g_pre.sum(axis=lead),
        v=(g_e[..., None] * hid).sum(axis=lead),
        k=np.asarray(g_e.sum(), dtype=Z.dtype),
    )
    return grad_Z, grads
