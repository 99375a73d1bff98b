"""Finite-difference verification of every hand-written backward pass."""
from dataclasses import dataclass

import numpy as np

from .asp import AspParams, asp_backward, asp_forward
from .mfa import ClassifierKind, classifier_backward, classifier_forward, init_params
from .numkernel import Rng, finite_diff_grad
from .trainer import cross_entropy

H_STEP = 1e-5
TOLERANCE = 1e-4
# Entries smaller than this are compared absolutely (error < TOLERANCE * ABS_FLOOR).
# Needed for exact zeros such as d/dk (softmax is shift invariant), where
# central differences return ~1e-10 of round-off.
ABS_FLOOR = 1e-5


def relative_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), ABS_FLOOR)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


@dataclass
class CheckResult:
    name: str
    trials: int
    max_rel_err: float

    @property
    def passed(self):
        return self.max_rel_err < TOLERANCE

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:<8} trials={self.trials} max_rel_err={self.max_rel_err:.3e} {status}"


def _compare(f, tensors, analytic):
    worst = 0.0
    for name, x in tensors.items():
        worst = max(worst, relative_error(analytic[name], finite_diff_grad(f, x, H_STEP)))
    return worst


def check_asp(rng, T=4, D=3, A=5):
    Z = rng.normal((T, D))
    p = AspParams.init(rng, D, A)
    p.v *= 3.0  # keep attention away from uniform
    g = rng.normal(2 * D)

    def f(_):
        return float(asp_forward(Z, p, keep_cache=False).r @ g)

    gZ, gp = asp_backward(asp_forward(Z, p), g)
    tensors = {"Z": Z, **p.tensors()}
    analytic = {"Z": gZ, **gp.tensors()}
    return _compare(f, tensors, analytic)


def check_classifier(rng, kind, L=2, T=3, D=3, D_h=4):
    H = rng.normal((L, T, D))
    p = init_params(kind, L, D, hidden_dim=D_h, seed=rng)
    g = rng.normal(2)

    def f(_):
        return float(classifier_forward(H, p)[0] @ g)

    grads, gH = classifier_backward(classifier_forward(H, p)[1], g)
    tensors = {"H": H, **p.named()}
    analytic = {"H": gH, **grads.named()}
    return _compare(f, tensors, analytic)


def check_cross_entropy(rng):
    logits = rng.normal(2, scale=3.0)
    label = rng.below(2)
    weights = (rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0))
    _, grad = cross_entropy(logits, label, weights)
    return relative_error(grad, finite_diff_grad(lambda x: cross_entropy(x, label, weights)[0], logits, H_STEP))


def run_all(trials=20, seed=0):
    rng = Rng(seed)
    suites = {
        "asp": lambda: check_asp(rng),
        "mfa": lambda: check_classifier(rng, ClassifierKind.MFA),
        "gap": lambda: check_classifier(rng, ClassifierKind.GAP),
        "tnfc": lambda: check_classifier(rng, ClassifierKind.TN_FC),
        "xent": lambda: check_cross_entropy(rng),
    }
    results = []
    for name, fn in suites.items():
        worst = max(fn() for _ in range(trials))
        results.append(CheckResult(name, trials, worst))
    return results
