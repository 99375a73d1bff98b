"""Waveform preprocessing and a frozen toy encoder that produces
layered frame embeddings (a stand-in for a pretrained speech SSL model).
"""
import wave
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .numkernel import Rng, init_uniform

SAMPLE_RATE = 16000


class AudioFormatError(ValueError):
    pass


@dataclass
class PreprocConfig:
    pre_emphasis: float = 0.97
    target_len: int = 64600

    def __post_init__(self):
        if not 0.0 <= self.pre_emphasis < 1.0:
            raise ValueError(f"pre_emphasis must lie in [0, 1), got {self.pre_emphasis}")
        if self.target_len < 1:
            raise ValueError(f"target_len must be >= 1, got {self.target_len}")


@dataclass
class ToyEncoderConfig:
    seed: int = 0
    layers: int = 12
    dim: int = 64
    win: int = 400
    hop: int = 320

    def __post_init__(self):
        if self.layers < 1 or self.dim < 1:
            raise ValueError("layers and dim must be >= 1")
        if not self.win >= self.hop >= 1:
            raise ValueError(f"need win >= hop >= 1, got win={self.win} hop={self.hop}")


def read_wav(path):
    """Read a mono 16-bit PCM RIFF file at 16 kHz as floats in [-1, 1)."""
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: {exc}") from None
    if channels != 1:
        raise AudioFormatError(f"{path}: expected mono, got {channels} channels")
    if width != 2:
        raise AudioFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if rate != SAMPLE_RATE:
        raise AudioFormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz")
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def write_wav(path, samples, sample_rate=SAMPLE_RATE):
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


def pre_emphasis(x, coef=0.97):
    x = np.asarray(x, dtype=np.float64)
    y = x.copy()
    y[1:] = x[1:] - coef * x[:-1]
    return y


def preprocess(samples, cfg=None):
    """Pre-emphasise, then truncate or cyclically repeat to ``target_len``."""
    cfg = cfg or PreprocConfig()
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("waveform must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(x)):
        raise ValueError("waveform contains non-finite samples")
    y = pre_emphasis(x, cfg.pre_emphasis)
    if y.size >= cfg.target_len:
        return y[: cfg.target_len]
    reps = -(-cfg.target_len // y.size)
    return np.tile(y, reps)[: cfg.target_len]


def n_frames(length, win, hop):
    return 1 + (length - win) // hop


class ToyEncoder:
    """Residual tanh stack over framed samples. Weights are drawn once from
    the seed (uniform in +-1/sqrt(fan_in)) and never trained.

    Layer ``l`` output is ``tanh(W_l h + b_l) + h`` applied to the previous
    layer, starting from ``tanh(W_in frame + b_in)``, so every entry of
    layer ``l`` (1-based) is bounded by ``l + 1``.
    """

    def __init__(self, cfg):
        self.cfg = cfg
        rng = Rng(cfg.seed)
        D = cfg.dim
        self.W_in = init_uniform(rng, (D, cfg.win), cfg.win)
        self.b_in = init_uniform(rng, (D,), cfg.win)
        self.weights = []
        for _ in range(cfg.layers):
            W = init_uniform(rng, (D, D), D)
            b = init_uniform(rng, (D,), D)
            self.weights.append((W, b))

    def frames(self, samples):
        cfg = self.cfg
        x = np.asarray(samples, dtype=np.float64)
        if x.size < cfg.win:
            raise ValueError(f"sequence of {x.size} samples is shorter than the window ({cfg.win})")
        T = n_frames(x.size, cfg.win, cfg.hop)
        idx = np.arange(T)[:, None] * cfg.hop + np.arange(cfg.win)[None, :]
        return x[idx]

    def encode(self, samples):
        """Return an ``L x T x D`` float64 stack."""
        h = np.tanh(self.frames(samples) @ self.W_in.T + self.b_in)
        out = np.empty((self.cfg.layers,) + h.shape)
        for l, (W, b) in enumerate(self.weights):
            h = np.tanh(h @ W.T + b) + h
            out[l] = h
        return out


def encode(samples, cfg):
    return ToyEncoder(cfg).encode(samples)


class EmbeddingExtractor(TransformerMixin, BaseEstimator):
    """Preprocess + toy-encode a list of waveforms.

    ``transform`` returns an ``(n, L, T, D)`` float32 array that plugs
    straight into :class:`mfa_antispoof.MFAClassifier`.
    """

    def __init__(self, layers=12, dim=64, win=400, hop=320, pre_emphasis=0.97,
                 target_len=64600, random_state=0):
        self.layers = layers
        self.dim = dim
        self.win = win
        self.hop = hop
        self.pre_emphasis = pre_emphasis
        self.target_len = target_len
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self.preproc_ = PreprocConfig(self.pre_emphasis, self.target_len)
        self.encoder_ = ToyEncoder(ToyEncoderConfig(
            seed=self.random_state, layers=self.layers, dim=self.dim,
            win=self.win, hop=self.hop))
        return self

    def transform(self, X):
        check_is_fitted(self, "encoder_")
        return np.stack([
            self.encoder_.encode(preprocess(x, self.preproc_)) for x in X
        ]).astype(np.float32)
