"""Multi-fusion attentive classifier and the two ablation heads.

MFA: one ASP per encoder layer pools over time into ``r_l = [mu_l; sigma_l]``
(width 2D), the L summaries are stacked as a length-L sequence and pooled
again by a layer-wise ASP into ``o`` (width 4D), and a tanh hidden layer
plus a 2-way output layer produce the logits ``(spoof, bonafide)``.

GAP: time-average of the last layer, then the same FC head.
TN_FC: per-utterance z-score of the last layer over time, first FC layer
applied frame by frame, mean over time, output layer.

Every forward takes ``(L, T, D)`` or a batch ``(N, L, T, D)``.
"""
import enum
from dataclasses import dataclass

import numpy as np

from .asp import EPS_VAR, AspParams, asp_backward, asp_forward
from .numkernel import Rng, ShapeError, init_uniform


class ClassifierKind(enum.Enum):
    MFA = "mfa"
    GAP = "gap"
    TN_FC = "tnfc"


# stored as the ``head.kind`` tensor for the baselines
_KIND_CODES = {ClassifierKind.GAP: 1.0, ClassifierKind.TN_FC: 2.0}


def cm_score(logits):
    """Bonafide logit minus spoof logit."""
    logits = np.asarray(logits)
    return logits[..., 1] - logits[..., 0]


@dataclass
class MfaParams:
    tasp: list
    lasp: AspParams
    fc1_W: np.ndarray
    fc1_b: np.ndarray
    fc2_W: np.ndarray
    fc2_b: np.ndarray
    kind = ClassifierKind.MFA

    @property
    def n_layers(self):
        return len(self.tasp)

    @property
    def dim(self):
        return self.tasp[0].in_dim

    def named(self):
        out = {}
        for l, p in enumerate(self.tasp, start=1):
            for name, t in p.tensors().items():
                out[f"tasp.{l}.{name}"] = t
        for name, t in self.lasp.tensors().items():
            out[f"lasp.{name}"] = t
        out["fc1.W"] = self.fc1_W
        out["fc1.b"] = self.fc1_b
        out["fc2.W"] = self.fc2_W
        out["fc2.b"] = self.fc2_b
        return out

    def size(self):
        return sum(t.size for t in self.named().values())


@dataclass
class BaselineParams:
    kind: ClassifierKind
    fc1_W: np.ndarray
    fc1_b: np.ndarray
    fc2_W: np.ndarray
    fc2_b: np.ndarray

    def named(self):
        return {"fc1.W": self.fc1_W, "fc1.b": self.fc1_b,
                "fc2.W": self.fc2_W, "fc2.b": self.fc2_b}

    def size(self):
        return sum(t.size for t in self.named().values())


def mfa_param_count(L, D, A, D_h):
    return L * (A * D + 2 * A + 1) + (A * 2 * D + 2 * A + 1) + (D_h * 4 * D + D_h) + (2 * D_h + 2)


def init_params(kind, n_layers, dim, att_dim=None, hidden_dim=None, seed=0, dtype=np.float64):
    """Uniform +-1/sqrt(fan_in) initialisation drawn in checkpoint-name order."""
    kind = ClassifierKind(kind)
    rng = seed if isinstance(seed, Rng) else Rng(seed)
    A = att_dim or dim
    D_h = hidden_dim or dim
    if kind is ClassifierKind.MFA:
        tasp = [AspParams.init(rng, dim, A, dtype) for _ in range(n_layers)]
        lasp = AspParams.init(rng, 2 * dim, A, dtype)
        head_in = 4 * dim
    else:
        head_in = dim
    fc1_W = init_uniform(rng, (D_h, head_in), head_in, dtype)
    fc1_b = init_uniform(rng, (D_h,), head_in, dtype)
    fc2_W = init_uniform(rng, (2, D_h), D_h, dtype)
    fc2_b = init_uniform(rng, (2,), D_h, dtype)
    if kind is ClassifierKind.MFA:
        return MfaParams(tasp, lasp, fc1_W, fc1_b, fc2_W, fc2_b)
    return BaselineParams(kind, fc1_W, fc1_b, fc2_W, fc2_b)


def params_to_tensors(params):
    """Checkpoint view: name -> array; baselines add a ``head.kind`` code."""
    out = dict(params.named())
    if params.kind is not ClassifierKind.MFA:
        out["head.kind"] = np.array([_KIND_CODES[params.kind]], dtype=params.fc1_W.dtype)
    return out


def params_from_tensors(tensors, dtype=np.float32):
    tensors = dict(tensors)
    fc = {}
    for name in ("fc1.W", "fc1.b", "fc2.W", "fc2.b"):
        if name not in tensors:
            raise KeyError(f"checkpoint lacks tensor {name!r}")
        fc[name] = np.array(tensors.pop(name), dtype=dtype)
    if "head.kind" in tensors:
        code = float(np.asarray(tensors.pop("head.kind")).reshape(-1)[0])
        kind = next((k for k, c in _KIND_CODES.items() if c == code), None)
        if kind is None:
            raise ValueError(f"unknown head.kind code {code}")
        if tensors:
            raise KeyError(f"unexpected tensors in {kind.value} checkpoint: {sorted(tensors)}")
        return BaselineParams(kind, fc["fc1.W"], fc["fc1.b"], fc["fc2.W"], fc["fc2.b"])

    def asp_from(prefix):
        parts = []
        for n in ("W", "b", "v", "k"):
            key = f"{prefix}.{n}"
            if key not in tensors:
                raise KeyError(f"checkpoint lacks tensor {key!r}")
            parts.append(np.array(tensors.pop(key), dtype=dtype))
        return AspParams(*parts)

    L = 0
    while f"tasp.{L + 1}.W" in tensors:
        L += 1
    if L == 0:
        raise KeyError("checkpoint has neither tasp.* tensors nor a head.kind tensor")
    tasp = [asp_from(f"tasp.{l}") for l in range(1, L + 1)]
    lasp = asp_from("lasp")
    if tensors:
        raise KeyError(f"unexpected tensors in mfa checkpoint: {sorted(tensors)}")
    return MfaParams(tasp, lasp, fc["fc1.W"], fc["fc1.b"], fc["fc2.W"], fc["fc2.b"])


# ------------------------------------------------------------- FC head


def _head_forward(x, W1, b1, W2, b2):
    hid = np.tanh(x @ W1.T + b1)
    return hid @ W2.T + b2, hid


def _outer_sum(a, b):
    """Sum over all leading axes of the outer products ``a_i b_j``."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def _head_backward(x, hid, W1, W2, g_logits):
    lead = tuple(range(g_logits.ndim - 1))
    g_hid = g_logits @ W2
    g_pre = g_hid * (1.0 - hid * hid)
    grads = {
        "fc2.W": _outer_sum(g_logits, hid),
        "fc2.b": g_logits.sum(axis=lead),
        "fc1.W": _outer_sum(g_pre, x),
        "fc1.b": g_pre.sum(axis=lead),
    }
    return grads, g_pre @ W1


def _check_input(H, L=None, D=None):
    H = np.asarray(H)
    if H.ndim not in (3, 4):
        raise ShapeError(f"expected (L, T, D) or (N, L, T, D) embeddings, got shape {H.shape}")
    if L is not None and H.shape[-3] != L:
        raise ShapeError(f"embeddings have {H.shape[-3]} layers, classifier expects {L}")
    if D is not None and H.shape[-1] != D:
        raise ShapeError(f"embedding width {H.shape[-1]} does not match classifier width {D}")
    if H.shape[-2] < 1:
        raise ShapeError("embeddings have no frames")
    return H


# ------------------------------------------------------------------ MFA


def mfa_forward(H, params):
    H = _check_input(H, params.n_layers, params.dim)
    summaries = [asp_forward(H[..., l, :, :], p) for l, p in enumerate(params.tasp)]
    R = np.stack([s.r for s in summaries], axis=-2)  # (..., L, 2D)
    top = asp_forward(R, params.lasp)
    o = top.r
    logits, hid = _head_forward(o, params.fc1_W, params.fc1_b, params.fc2_W, params.fc2_b)
    cache = {"params": params, "H": H, "summaries": summaries, "top": top, "o": o, "hid": hid}
    return logits, cache


def mfa_backward(cache, grad_logits):
    """Returns ``(grads, grad_H)`` with ``grads`` shaped like MfaParams."""
    if cache is None:
        raise ValueError("missing forward cache")
    p = cache["params"]
    g = np.asarray(grad_logits)
    head, g_o = _head_backward(cache["o"], cache["hid"], p.fc1_W, p.fc2_W, g)
    g_R, g_lasp = asp_backward(cache["top"], g_o)
    grad_H = np.zeros_like(cache["H"])
    g_tasp = []
    for l, s in enumerate(cache["summaries"]):
        g_Z, g_p = asp_backward(s, g_R[..., l, :])
        grad_H[..., l, :, :] = g_Z
        g_tasp.append(g_p)
    grads = MfaParams(g_tasp, g_lasp, head["fc1.W"], head["fc1.b"], head["fc2.W"], head["fc2.b"])
    return grads, grad_H


# ------------------------------------------------------------ baselines


def baseline_forward(H, kind, params):
    kind = ClassifierKind(kind)
    if kind is ClassifierKind.MFA:
        raise ValueError("baseline_forward handles GAP and TN_FC only")
    D = params.fc1_W.shape[1]
    H = _check_input(H, D=D)
    last = H[..., -1, :, :]
    T = last.shape[-2]
    cache = {"kind": kind, "params": params, "H": H}
    if kind is ClassifierKind.GAP:
        pooled = last.mean(axis=-2)
        logits, hid = _head_forward(pooled, params.fc1_W, params.fc1_b, params.fc2_W, params.fc2_b)
        cache.update(x=pooled, hid=hid)
        return logits, cache

    mean = last.mean(axis=-2, keepdims=True)
    centred = last - mean
    var = (centred * centred).mean(axis=-2, keepdims=True)
    active = var > EPS_VAR
    std = np.sqrt(np.where(active, var, EPS_VAR))
    z = centred / std
    frame_hid = np.tanh(z @ params.fc1_W.T + params.fc1_b)
    pooled = frame_hid.mean(axis=-2)
    logits = pooled @ params.fc2_W.T + params.fc2_b
    cache.update(z=z, std=std, active=active, frame_hid=frame_hid, pooled=pooled, T=T)
    return logits, cache


def baseline_backward(cache, grad_logits):
    if cache is None:
        raise ValueError("missing forward cache")
    kind, p, H = cache["kind"], cache["params"], cache["H"]
    g = np.asarray(grad_logits)
    grad_H = np.zeros_like(H)
    if kind is ClassifierKind.GAP:
        head, g_x = _head_backward(cache["x"], cache["hid"], p.fc1_W, p.fc2_W, g)
        T = H.shape[-2]
        grad_H[..., -1, :, :] = np.broadcast_to(g_x[..., None, :] / T, H[..., -1, :, :].shape)
    else:
        lead = tuple(range(g.ndim - 1))
        z, hid, T = cache["z"], cache["frame_hid"], cache["T"]
        g_pooled = g @ p.fc2_W
        g_pre = (g_pooled[..., None, :] / T) * (1.0 - hid * hid)
        head = {
            "fc2.W": _outer_sum(g, cache["pooled"]),
            "fc2.b": g.sum(axis=lead),
            "fc1.W": _outer_sum(g_pre, z),
            "fc1.b": g_pre.sum(axis=lead + (g.ndim - 1,)),
        }
        g_z = g_pre @ p.fc1_W
        g_c = g_z - g_z.mean(axis=-2, keepdims=True)
        proj = np.where(cache["active"], (g_z * z).mean(axis=-2, keepdims=True), 0.0)
        grad_H[..., -1, :, :] = (g_c - z * proj) / cache["std"]
    grads = BaselineParams(kind, head["fc1.W"], head["fc1.b"], head["fc2.W"], head["fc2.b"])
    return grads, grad_H


# ------------------------------------------------------------- dispatch


def classifier_forward(H, params):
    if params.kind is ClassifierKind.MFA:
        return mfa_forward(H, params)
    return baseline_forward(H, params.kind, params)


def classifier_backward(cache, grad_logits):
    if "summaries" in cache:
        return mfa_backward(cache, grad_logits)
    return baseline_backward(cache, grad_logits)
