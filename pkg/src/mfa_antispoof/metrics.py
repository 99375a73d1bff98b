"""EER and minimum normalised t-DCF for countermeasure scores.

Convention: higher score means more bonafide-like. At threshold ``theta``
a bonafide trial is missed when ``score < theta`` and a spoof trial is
falsely accepted when ``score >= theta``. Candidate thresholds are every
distinct score plus -inf and +inf.
"""
import math
from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    pass


class DegenerateCostModelError(MetricError):
    pass


@dataclass
class TdcfCostModel:
    p_miss_asv: float
    p_fa_asv: float
    p_miss_spoof_asv: float
    pi_tar: float = 0.9405
    pi_non: float = 0.0095
    pi_spoof: float = 0.05
    c_miss_asv: float = 1.0
    c_fa_asv: float = 10.0
    c_miss_cm: float = 1.0
    c_fa_cm: float = 10.0

    def __post_init__(self):
        priors = (self.pi_tar, self.pi_non, self.pi_spoof)
        if min(priors) <= 0 or abs(sum(priors) - 1.0) > 1e-9:
            raise MetricError(f"priors must be positive and sum to 1, got {priors}")
        if min(self.c_miss_asv, self.c_fa_asv, self.c_miss_cm, self.c_fa_cm) <= 0:
            raise MetricError("costs must be positive")
        for name in ("p_miss_asv", "p_fa_asv", "p_miss_spoof_asv"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise MetricError(f"{name} must lie in [0, 1]")


@dataclass
class MetricReport:
    eer: float
    eer_threshold: float
    n_bonafide: int
    n_spoof: int
    min_tdcf: float = None
    tdcf_threshold: float = None

    def to_text(self):
        lines = [f"eer={self.eer:.6f}", f"eer_threshold={self.eer_threshold:.6g}"]
        if self.min_tdcf is not None:
            lines += [f"min_tdcf={self.min_tdcf:.6f}", f"tdcf_threshold={self.tdcf_threshold:.6g}"]
        lines += [f"n_bonafide={self.n_bonafide}", f"n_spoof={self.n_spoof}"]
        return "\n".join(lines) + "\n"


def _split(bonafide, spoof):
    bona = np.asarray(bonafide, dtype=np.float64).ravel()
    spoof = np.asarray(spoof, dtype=np.float64).ravel()
    if bona.size == 0 or spoof.size == 0:
        raise MetricError("need at least one bonafide and one spoof score")
    if not (np.all(np.isfinite(bona)) and np.all(np.isfinite(spoof))):
        raise MetricError("scores must be finite")
    return bona, spoof


def error_rates(bonafide, spoof):
    """Step ROC: ``(thresholds, p_miss, p_fa)`` in increasing threshold order."""
    bona, spoof = _split(bonafide, spoof)
    thresholds = np.concatenate([[-np.inf], np.unique(np.concatenate([bona, spoof])), [np.inf]])
    p_miss = np.searchsorted(np.sort(bona), thresholds, side="left") / bona.size
    p_fa = 1.0 - np.searchsorted(np.sort(spoof), thresholds, side="left") / spoof.size
    return thresholds, p_miss, p_fa


def compute_eer(bonafide, spoof):
    """Equal error rate with linear interpolation between ROC points.

    Returns ``(eer, threshold)``; the threshold is that of the last ROC
    point where the false-acceptance rate still dominates (the finite
    neighbour if that point is -inf).
    """
    thr, p_miss, p_fa = error_rates(bonafide, spoof)
    diff = p_fa - p_miss  # non-increasing, +1 at -inf and -1 at +inf
    i = int(np.nonzero(diff >= 0)[0][-1])
    if diff[i] == 0.0:
        return float(p_miss[i]), float(thr[i])
    lam = diff[i] / (diff[i] - diff[i + 1])
    eer = p_miss[i] + lam * (p_miss[i + 1] - p_miss[i])
    theta = thr[i] if math.isfinite(thr[i]) else thr[i + 1]
    return float(eer), float(theta)


def tdcf_coefficients(model):
    C1 = (model.pi_tar * (model.c_miss_cm - model.c_miss_asv * model.p_miss_asv)
          - model.pi_non * model.c_fa_asv * model.p_fa_asv)
    C2 = model.c_fa_cm * model.pi_spoof * (1.0 - model.p_miss_spoof_asv)
    if C1 <= 0 or C2 <= 0:
        raise DegenerateCostModelError(
            f"normalisation undefined for C1={C1:.6g}, C2={C2:.6g}; check the ASV operating point")
    return C1, C2


def compute_min_tdcf(bonafide, spoof, model):
    """Minimum over thresholds of ``(C1 P_miss + C2 P_fa) / min(C1, C2)``."""
    C1, C2 = tdcf_coefficients(model)
    thr, p_miss, p_fa = error_rates(bonafide, spoof)
    tdcf = (C1 * p_miss + C2 * p_fa) / min(C1, C2)
    i = int(np.argmin(tdcf))
    return float(tdcf[i]), float(thr[i])


def split_by_label(scores, labels):
    """``labels`` are ``"bonafide"``/``"spoof"`` strings or 1/0."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.dtype.kind in "US":
        is_bona = labels == "bonafide"
    else:
        is_bona = labels.astype(bool)
    return scores[is_bona], scores[~is_bona]


def evaluate(scores, labels, cost_model=None):
    bona, spoof = split_by_label(scores, labels)
    eer, eer_thr = compute_eer(bona, spoof)
    report = MetricReport(eer, eer_thr, int(bona.size), int(spoof.size))
    if cost_model is not None:
        report.min_tdcf, report.tdcf_threshold = compute_min_tdcf(bona, spoof, cost_model)
    return report
