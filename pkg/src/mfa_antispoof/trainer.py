"""Supervised training: weighted softmax cross-entropy, Adam and a step
learning-rate schedule. A run is a pure function of (seed, data, config).
"""
import copy
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .mfa import ClassifierKind, classifier_backward, classifier_forward, cm_score, init_params
from .numkernel import Rng, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr0: float = 0.003
    batch: int = 32
    step_size: int = 3200
    gamma: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    max_steps: int = 16000
    seed: int = 0
    # indexed by label: (spoof, bonafide)
    class_weights: tuple = (1.0, 1.0)
    att_dim: int = None
    hidden_dim: int = None

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.batch < 1 or self.step_size < 1 or self.max_steps < 0:
            raise ValueError("batch and step_size must be >= 1, max_steps >= 0")
        self.class_weights = tuple(float(w) for w in self.class_weights)
        if len(self.class_weights) != 2 or min(self.class_weights) <= 0:
            raise ValueError("class_weights must be two positive numbers")


# Fine-tuning regime constants for a trainable frontend.
FINETUNE = dict(lr0=3e-6, step_size=6000, gamma=0.1, batch=4)


def lr_at(step, cfg):
    return cfg.lr0 * cfg.gamma ** (step // cfg.step_size)


def cross_entropy(logits, labels, weights=(1.0, 1.0)):
    """Weighted two-class cross-entropy.

    ``logits`` is ``(2,)`` or ``(N, 2)``; ``labels`` holds 0 (spoof) or
    1 (bonafide). Returns the per-sample losses and ``dloss/dlogits``.
    """
    logits = np.asarray(logits)
    if logits.shape[-1] != 2:
        raise ShapeError(f"expected 2 logits, got {logits.shape[-1]}")
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    labels = np.asarray(labels, dtype=np.int64)
    w = np.asarray(weights, dtype=logits.dtype)[labels]
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_p = shifted - log_z
    onehot = np.eye(2, dtype=logits.dtype)[labels]
    loss = -w * (log_p * onehot).sum(axis=-1)
    grad = w[..., None] * (np.exp(log_p) - onehot)
    return loss, grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, param):
        return cls(np.zeros_like(param), np.zeros_like(param), 0)


def adam_step(param, grad, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place bias-corrected Adam update of ``param`` and ``state``."""
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise ShapeError(f"shape mismatch: param {param.shape}, grad {grad.shape}, state {state.m.shape}")
    state.t += 1
    state.m *= beta1
    state.m += (1.0 - beta1) * grad
    state.v *= beta2
    state.v += (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return param, state


@dataclass
class TrainResult:
    params: object
    best_params: object
    log: list = field(default_factory=list)  # (step, lr, loss)

    def log_text(self):
        return "".join(f"{s}\t{lr:.9g}\t{loss:.9g}\n" for s, lr, loss in self.log)


def _snapshot(params):
    return {k: v.copy() for k, v in params.named().items()}


def _restore(params, snap):
    for k, v in params.named().items():
        v[...] = snap[k]
    return params


def train(X, y, cfg=None, kind=ClassifierKind.MFA, dtype=np.float32, params=None):
    """Train a classifier on ``X`` of shape ``(N, L, T, D)`` with 0/1 labels.

    Epochs are seeded Fisher-Yates shuffles; the last short batch of an
    epoch is used as is. Each step applies Adam to the batch-mean gradient.
    The best checkpoint is the one that ends the epoch with the lowest
    mean training loss.
    """
    cfg = cfg or TrainConfig()
    kind = ClassifierKind(kind)
    X = np.asarray(X, dtype=dtype)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 4:
        raise ShapeError(f"expected (N, L, T, D) embeddings, got shape {X.shape}")
    if len(X) != len(y):
        raise ShapeError(f"{len(X)} embeddings but {len(y)} labels")
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both bonafide and spoof examples")

    rng = Rng(cfg.seed)
    if params is None:
        params = init_params(kind, X.shape[1], X.shape[3], cfg.att_dim, cfg.hidden_dim,
                             seed=rng, dtype=dtype)
    named = params.named()
    states = {k: AdamState.zeros_like(v) for k, v in named.items()}
    result = TrainResult(params, None)
    best_loss = math.inf
    best = _snapshot(params)

    order = np.empty(0, dtype=np.int64)
    pos = 0
    epoch_losses = []

    def close_epoch():
        nonlocal best_loss, best
        if epoch_losses:
            mean = float(np.mean(epoch_losses))
            if mean < best_loss:
                best_loss, best = mean, _snapshot(params)
            epoch_losses.clear()

    for step in range(cfg.max_steps):
        if pos >= len(order):
            close_epoch()
            order = rng.permutation(len(X))
            pos = 0
        idx = order[pos:pos + cfg.batch]
        pos += len(idx)

        logits, cache = classifier_forward(X[idx], params)
        losses, g_logits = cross_entropy(logits, y[idx], cfg.class_weights)
        loss = float(losses.mean())
        grads, _ = classifier_backward(cache, g_logits / len(idx))
        lr = lr_at(step, cfg)
        gnamed = grads.named()
        for name, p in named.items():
            adam_step(p, gnamed[name].astype(p.dtype, copy=False), states[name], lr,
                      cfg.beta1, cfg.beta2, cfg.eps_adam)
        result.log.append((step, lr, loss))
        epoch_losses.append(loss)
        if step % 500 == 0:
            logger.debug("step %d lr %.3g loss %.5f", step, lr, loss)
    close_epoch()

    result.best_params = _restore(copy.deepcopy(params), best)
    return result


def predict_scores(X, params, batch=256):
    """CM scores (bonafide minus spoof logit) for ``(N, L, T, D)`` input."""
    dtype = params.fc1_W.dtype
    X = np.asarray(X, dtype=dtype)
    out = np.empty(len(X), dtype=dtype)
    for start in range(0, len(X), batch):
        logits, _ = classifier_forward(X[start:start + batch], params)
        out[start:start + batch] = cm_score(logits)
    return out
