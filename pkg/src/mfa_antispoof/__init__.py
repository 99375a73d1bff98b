"""Attentive statistics pooling multi-fusion classifier for audio deepfake
detection, with EER / min t-DCF evaluation."""
from .asp import AspParams, AspSummary, asp_backward, asp_forward
from .estimator import MFAClassifier, check_embeddings
from .frontend import EmbeddingExtractor, PreprocConfig, ToyEncoder, ToyEncoderConfig, preprocess
from .metrics import TdcfCostModel, compute_eer, compute_min_tdcf, tdcf_coefficients
from .mfa import ClassifierKind, MfaParams, baseline_forward, init_params, mfa_backward, mfa_forward
from .synthgen import SynthConfig, reference_eer
from .trainer import TrainConfig, adam_step, cross_entropy, lr_at, train

__version__ = "0.1.0"

__all__ = [
    "AspParams", "AspSummary", "asp_forward", "asp_backward",
    "MFAClassifier", "check_embeddings",
    "EmbeddingExtractor", "PreprocConfig", "ToyEncoder", "ToyEncoderConfig", "preprocess",
    "TdcfCostModel", "compute_eer", "compute_min_tdcf", "tdcf_coefficients",
    "ClassifierKind", "MfaParams", "baseline_forward", "init_params", "mfa_backward", "mfa_forward",
    "SynthConfig", "reference_eer",
    "TrainConfig", "adam_step", "cross_entropy", "lr_at", "train",
]
