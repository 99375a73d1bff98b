import math

import numpy as np
import pytest

from mfa_antispoof.metrics import (
    DegenerateCostModelError, MetricError, TdcfCostModel, compute_eer, compute_min_tdcf,
    evaluate, tdcf_coefficients)
from mfa_antispoof.numkernel import Rng
from oracles import brute_force_eer, brute_force_min_tdcf

OP = dict(p_miss_asv=0.05, p_fa_asv=0.05, p_miss_spoof_asv=0.05)


def test_eer_fixtures():
    assert compute_eer([2, 3], [0, 1])[0] == 0.0
    assert compute_eer([1, 1, 1], [1, 1])[0] == 0.5
    eer, thr = compute_eer([3, 2, 1], [2.5, 0, -1])
    assert eer == pytest.approx(1 / 3, abs=1e-15)
    assert 1 < thr <= 2


def test_eer_requires_both_classes():
    with pytest.raises(MetricError):
        compute_eer([], [1.0])
    with pytest.raises(MetricError):
        compute_eer([np.inf], [1.0])


def test_tdcf_coefficients():
    C1, C2 = tdcf_coefficients(TdcfCostModel(0.0, 0.0, 0.0))
    assert C1 == pytest.approx(0.9405, abs=1e-15)
    assert C2 == pytest.approx(0.5, abs=1e-15)
    C1, C2 = tdcf_coefficients(TdcfCostModel(**OP))
    assert C1 == pytest.approx(0.888725, abs=1e-12)
    assert C2 == pytest.approx(0.475, abs=1e-12)
    with pytest.raises(DegenerateCostModelError):
        tdcf_coefficients(TdcfCostModel(0.0, 0.0, 1.0))


def test_cost_model_validation():
    with pytest.raises(MetricError):
        TdcfCostModel(0, 0, 0, pi_tar=0.5)
    with pytest.raises(MetricError):
        TdcfCostModel(1.5, 0, 0)


def test_min_tdcf_endpoints():
    model = TdcfCostModel(**OP)
    assert compute_min_tdcf([2, 3], [0, 1], model)[0] == 0.0
    assert compute_min_tdcf([4, 4], [4, 4, 4], model)[0] == pytest.approx(1.0, abs=1e-15)


def random_scores(rng, lo=2, hi=200):
    n = lo + rng.below(hi - lo + 1)
    nb = 1 + rng.below(n - 1)
    raw = rng.normal(n)
    raw[:nb] += 0.8
    if rng.random() < 0.3:  # force ties across and within classes
        raw = np.round(raw, 1)
    return raw[:nb], raw[nb:]


def test_eer_matches_brute_force_on_random_sets():
    rng = Rng(0)
    for _ in range(100):
        b, s = random_scores(rng, hi=60)
        assert compute_eer(b, s)[0] == pytest.approx(brute_force_eer(b.tolist(), s.tolist()), abs=1e-12)


def test_min_tdcf_matches_brute_force_on_random_sets():
    rng = Rng(1)
    for _ in range(10):
        model = TdcfCostModel(rng.uniform(0, 0.3), rng.uniform(0, 0.3), rng.uniform(0, 0.9),
                              c_fa_cm=rng.uniform(1, 20))
        C1, C2 = tdcf_coefficients(model)
        b, s = rng.normal(5) + 1, rng.normal(5)
        got = compute_min_tdcf(b, s, model)[0]
        assert got == pytest.approx(brute_force_min_tdcf(b.tolist(), s.tolist(), C1, C2), abs=1e-12)


def test_eer_monotone_transform_invariance_and_class_symmetry():
    rng = Rng(2)
    for _ in range(30):
        b, s = random_scores(rng, hi=50)
        e = compute_eer(b, s)[0]
        assert compute_eer(np.exp(b / 3), np.exp(s / 3))[0] == pytest.approx(e, abs=1e-12)
        assert compute_eer(-s, -b)[0] == pytest.approx(e, abs=1e-12)


def test_order_independence_and_range():
    rng = Rng(3)
    model = TdcfCostModel(**OP)
    for _ in range(30):
        b, s = random_scores(rng, hi=40)
        e, t = compute_eer(b, s)[0], compute_min_tdcf(b, s, model)[0]
        assert 0 <= e <= 1 and 0 <= t <= 1
        pb, ps = b[rng.permutation(len(b))], s[rng.permutation(len(s))]
        assert compute_eer(pb, ps)[0] == e
        assert compute_min_tdcf(pb, ps, model)[0] == t


def test_duplicates_follow_brute_force():
    rng = Rng(4)
    model = TdcfCostModel(**OP)
    C1, C2 = tdcf_coefficients(model)
    for _ in range(100):
        b, s = random_scores(rng, hi=30)
        if rng.random() < 0.5:
            b = np.append(b, b[rng.below(len(b))])
        else:
            s = np.append(s, s[rng.below(len(s))])
        assert compute_eer(b, s)[0] == pytest.approx(brute_force_eer(b.tolist(), s.tolist()), abs=1e-12)
        assert compute_min_tdcf(b, s, model)[0] == pytest.approx(
            brute_force_min_tdcf(b.tolist(), s.tolist(), C1, C2), abs=1e-12)


def test_eer_of_inverted_scores_is_one():
    # the crossing rule is followed literally, so a worse-than-chance
    # detector is reported as such rather than folded back below 0.5
    assert compute_eer([0, 1], [2, 3])[0] == 1.0


def test_evaluate_report_text():
    rep = evaluate([2.0, 3.0, 0.0, 1.0], ["bonafide", "bonafide", "spoof", "spoof"],
                   TdcfCostModel(**OP))
    text = rep.to_text()
    assert text.startswith("eer=0.000000\n")
    assert "min_tdcf=0.000000" in text and "n_spoof=2" in text
    assert "min_tdcf" not in evaluate([1, 0], [1, 0]).to_text()
