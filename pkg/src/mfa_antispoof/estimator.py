"""scikit-learn compatible wrapper around the classifiers and trainer."""
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .mfa import ClassifierKind, classifier_forward
from .numkernel import softmax
from .trainer import TrainConfig, predict_scores, train


def check_embeddings(X, n_layers=None, dim=None, dtype=np.float32):
    """Validate an ``(N, L, T, D)`` stack of layered frame embeddings."""
    X = check_array(X, allow_nd=True, ensure_2d=False, dtype=dtype)
    if X.ndim != 4:
        raise ValueError(f"expected (n_samples, L, T, D) embeddings, got {X.ndim}-D input")
    if n_layers is not None and X.shape[1] != n_layers:
        raise ValueError(f"X has {X.shape[1]} layers, estimator was fitted with {n_layers}")
    if dim is not None and X.shape[3] != dim:
        raise ValueError(f"X has width {X.shape[3]}, estimator was fitted with {dim}")
    return X


def encode_labels(y):
    """Map labels to 1 = bonafide, 0 = spoof.

    Accepts the strings ``"bonafide"``/``"spoof"`` or 0/1 integers.
    """
    y = np.asarray(y)
    if y.dtype.kind in "USO":
        bad = set(y.tolist()) - {"bonafide", "spoof"}
        if bad:
            raise ValueError(f"unknown labels {sorted(bad)}; use 'bonafide' and 'spoof'")
        return (y == "bonafide").astype(np.int64), np.array(["spoof", "bonafide"])
    bad = set(np.unique(y).tolist()) - {0, 1}
    if bad:
        raise ValueError(f"integer labels must be 0 (spoof) or 1 (bonafide), got {sorted(bad)}")
    return y.astype(np.int64), np.array([0, 1])


class MFAClassifier(ClassifierMixin, BaseEstimator):
    """Spoofing countermeasure over layered frame embeddings.

    ``head`` selects the multi-fusion attentive classifier (``"mfa"``) or
    one of the ablation heads (``"gap"``, ``"tnfc"``). Training defaults
    follow the frozen-frontend recipe: Adam(0.9, 0.999), lr 0.003 halved
    every 3200 steps, batch 32.

    ``decision_function`` returns the CM score (bonafide logit minus spoof
    logit); ``classes_`` is ordered ``[spoof, bonafide]``.
    """

    def __init__(self, head="mfa", att_dim=None, hidden_dim=None, lr0=0.003, batch_size=32,
                 step_size=3200, gamma=0.5, beta1=0.9, beta2=0.999, eps_adam=1e-8,
                 max_steps=16000, class_weights=(1.0, 1.0), random_state=0):
        self.head = head
        self.att_dim = att_dim
        self.hidden_dim = hidden_dim
        self.lr0 = lr0
        self.batch_size = batch_size
        self.step_size = step_size
        self.gamma = gamma
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps_adam = eps_adam
        self.max_steps = max_steps
        self.class_weights = class_weights
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(
            lr0=self.lr0, batch=self.batch_size, step_size=self.step_size, gamma=self.gamma,
            beta1=self.beta1, beta2=self.beta2, eps_adam=self.eps_adam,
            max_steps=self.max_steps, seed=self.random_state,
            class_weights=self.class_weights, att_dim=self.att_dim, hidden_dim=self.hidden_dim)

    def fit(self, X, y):
        X = check_embeddings(X)
        y, self.classes_ = encode_labels(y)
        if len(y) != len(X):
            raise ValueError(f"{len(X)} samples but {len(y)} labels")
        result = train(X, y, self._train_config(), ClassifierKind(self.head))
        self.params_ = result.params
        self.best_params_ = result.best_params
        self.training_log_ = result.log
        self.n_layers_ = X.shape[1]
        self.dim_ = X.shape[3]
        return self

    def _validate(self, X):
        check_is_fitted(self, "params_")
        return check_embeddings(X, self.n_layers_ if self.head == "mfa" else None, self.dim_)

    def decision_function(self, X):
        return predict_scores(self._validate(X), self.params_)

    def predict_proba(self, X):
        X = self._validate(X)
        logits, _ = classifier_forward(X, self.params_)
        return softmax(logits.astype(np.float64), axis=-1)

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[(scores > 0).astype(np.int64)]
