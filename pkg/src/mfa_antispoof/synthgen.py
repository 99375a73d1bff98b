"""Synthetic layered-embedding datasets with a known class signal.

Frames are isotropic Gaussian noise; bonafide utterances get ``+delta/2 * u``
and spoof utterances ``-delta/2 * u`` added where the mode says the signal
lives. ``u`` is the fixed unit direction ``(1, ..., 1) / sqrt(D)`` so that
datasets drawn with different seeds share one decision problem.
"""
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .datastore import ManifestEntry, format_manifest, write_leb
from .numkernel import Rng

MODES = ("global_shift", "layer_sparse", "time_sparse")


@dataclass
class SynthConfig:
    L: int = 4
    T: int = 50
    D: int = 16
    n_per_class: int = 100
    mode: str = "global_shift"
    layer: int = 1  # 1-based, layer_sparse only
    rho: float = 1.0  # active-frame fraction, time_sparse only
    delta: float = 4.0
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if min(self.L, self.T, self.D, self.n_per_class) < 1:
            raise ValueError("L, T, D and n_per_class must be >= 1")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.noise <= 0:
            raise ValueError("noise must be > 0")
        if self.mode == "layer_sparse" and not 1 <= self.layer <= self.L:
            raise ValueError(f"layer must lie in [1, {self.L}]")
        if self.mode == "time_sparse" and not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")

    def to_text(self):
        return "".join(f"synth.{k}={v}\n" for k, v in asdict(self).items())


def direction(D):
    return np.full(D, 1.0 / math.sqrt(D))


def signal_mask(cfg):
    """``(L, T)`` boolean mask of where the class shift is applied."""
    mask = np.zeros((cfg.L, cfg.T), dtype=bool)
    if cfg.mode == "global_shift":
        mask[:] = True
    elif cfg.mode == "layer_sparse":
        mask[cfg.layer - 1] = True
    else:
        mask[:, : math.ceil(cfg.rho * cfg.T)] = True
    return mask


def sample(cfg):
    """Draw the dataset in memory.

    Returns ``(X, y)`` with ``X`` float32 ``(2 n, L, T, D)`` and ``y`` in
    {0 spoof, 1 bonafide}; labels alternate bonafide, spoof, ...
    """
    rng = Rng(cfg.seed)
    n = 2 * cfg.n_per_class
    y = np.tile([1, 0], cfg.n_per_class)
    noise = rng.normal((n, cfg.L, cfg.T, cfg.D), scale=cfg.noise)
    shift = np.where(y == 1, 0.5, -0.5) * cfg.delta
    signal = signal_mask(cfg)[None, :, :, None] * direction(cfg.D)
    X = noise + shift[:, None, None, None] * signal
    return X.astype(np.float32), y


def generate(cfg, destination):
    """Write LEB files, ``manifest.tsv`` and ``synth_config.txt`` into a directory."""
    out = Path(destination)
    out.mkdir(parents=True, exist_ok=True)
    X, y = sample(cfg)
    entries = []
    for i, (emb, label) in enumerate(zip(X, y)):
        utt = f"utt{i:05d}"
        write_leb(emb, out / f"{utt}.leb")
        entries.append(ManifestEntry(utt, f"{utt}.leb", "bonafide" if label else "spoof"))
    (out / "manifest.tsv").write_text(format_manifest(entries), encoding="utf-8")
    (out / "synth_config.txt").write_text(cfg.to_text(), encoding="utf-8")
    return entries


def reference_eer(cfg):
    """EER of thresholding the time-averaged projection onto ``u`` (global_shift only)."""
    if cfg.mode != "global_shift":
        raise ValueError("reference_eer is only defined for global_shift datasets")
    arg = cfg.delta * math.sqrt(cfg.T) / (2.0 * cfg.noise)
    return 0.5 * math.erfc(arg / math.sqrt(2.0))
