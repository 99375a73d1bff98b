"""Exit criteria for the package.

Each test carries an ``acceptance`` marker; the terminal summary lists
one PASS/FAIL line per criterion.
"""
import struct
import time

import numpy as np
import pytest

from mfa_antispoof import datastore as ds
from mfa_antispoof.asp import AspParams, asp_forward
from mfa_antispoof.cli import main
from mfa_antispoof.gradcheck import TOLERANCE, run_all
from mfa_antispoof.metrics import TdcfCostModel, compute_eer, compute_min_tdcf, tdcf_coefficients
from mfa_antispoof.mfa import ClassifierKind, classifier_forward, init_params
from mfa_antispoof.numkernel import Rng
from mfa_antispoof.synthgen import SynthConfig, sample
from mfa_antispoof.trainer import AdamState, TrainConfig, adam_step, lr_at, predict_scores, train
from oracles import brute_force_eer, brute_force_min_tdcf, scalar_adam

acceptance = pytest.mark.acceptance


@acceptance(1, "gradient checks pass (< 1e-4) in under 60 s")
def test_gradient_checks():
    start = time.perf_counter()
    results = run_all(trials=20, seed=0)
    elapsed = time.perf_counter() - start
    for r in results:
        print(r.line())
    assert {r.name for r in results} >= {"asp", "mfa", "xent"}
    assert all(r.max_rel_err < TOLERANCE for r in results)
    assert elapsed < 60


@acceptance(2, "pooling invariants on 1000 random instances")
def test_pooling_invariants():
    rng = Rng(2024)
    kinds = list(ClassifierKind)
    for i in range(1000):
        T, D = 1 + rng.below(8), 1 + rng.below(5)
        Z = rng.normal((T, D))
        p = AspParams.init(rng, D, 1 + rng.below(6))
        p.v *= 1 + 4 * rng.random()
        perm = rng.permutation(T)
        s, sp = asp_forward(Z, p), asp_forward(Z[perm], p)
        np.testing.assert_allclose(sp.r, s.r, rtol=0, atol=1e-12)
        np.testing.assert_allclose(sp.alpha, s.alpha[perm], rtol=0, atol=1e-12)
        assert np.all(s.alpha >= 0) and abs(s.alpha.sum() - 1) <= 1e-12

        p.v[:] = 0
        u = asp_forward(Z, p)
        np.testing.assert_allclose(u.alpha, np.full(T, 1 / T), rtol=0, atol=1e-15)
        np.testing.assert_allclose(u.mu, Z.mean(axis=0), rtol=0, atol=1e-12)
        np.testing.assert_allclose(u.sigma, np.sqrt(np.maximum(Z.var(axis=0), 1e-8)), rtol=0, atol=1e-12)

        kind = kinds[i % len(kinds)]
        L = 1 + rng.below(3)
        H = rng.normal((L, T + 1, D))
        params = init_params(kind, L, D, seed=rng)
        hperm = rng.permutation(T + 1)
        a = classifier_forward(H, params)[0]
        b = classifier_forward(H[:, hperm], params)[0]
        np.testing.assert_allclose(b, a, rtol=0, atol=1e-12)


@acceptance(3, "EER and min t-DCF match brute-force sweeps and fixtures")
def test_metric_oracles():
    assert compute_eer([2, 3], [0, 1])[0] == 0.0
    assert compute_eer([1, 1, 1], [1, 1])[0] == 0.5
    assert compute_eer([3, 2, 1], [2.5, 0, -1])[0] == pytest.approx(1 / 3, abs=1e-15)
    model = TdcfCostModel(p_miss_asv=0.05, p_fa_asv=0.05, p_miss_spoof_asv=0.05)
    C1, C2 = tdcf_coefficients(model)
    assert C1 == pytest.approx(0.888725, abs=1e-15) and C2 == pytest.approx(0.475, abs=1e-15)
    assert compute_min_tdcf([2, 3], [0, 1], model)[0] == 0.0
    assert compute_min_tdcf([5, 5], [5, 5, 5], model)[0] == pytest.approx(1.0, abs=1e-15)

    rng = Rng(3)
    for _ in range(100):
        n = 2 + rng.below(199)
        nb = 1 + rng.below(n - 1)
        x = rng.normal(n)
        x[:nb] += 2 * rng.random()
        if rng.random() < 0.3:
            x = np.round(x, 1)
        b, s = x[:nb].tolist(), x[nb:].tolist()
        m = TdcfCostModel(p_miss_asv=rng.uniform(0, 0.2), p_fa_asv=rng.uniform(0, 0.2),
                          p_miss_spoof_asv=rng.uniform(0, 0.9))
        c1, c2 = tdcf_coefficients(m)
        assert abs(compute_eer(b, s)[0] - brute_force_eer(b, s)) <= 1e-12
        assert abs(compute_min_tdcf(b, s, m)[0] - brute_force_min_tdcf(b, s, c1, c2)) <= 1e-12


@acceptance(4, "MFA reaches held-out EER <= 1% within 2000 steps, under 5 minutes")
def test_training_recoverability():
    start = time.perf_counter()
    base = dict(L=4, T=50, D=16, delta=4.0, noise=1.0, mode="global_shift")
    X, y = sample(SynthConfig(n_per_class=400, seed=1, **base))
    Xe, ye = sample(SynthConfig(n_per_class=200, seed=2, **base))
    cfg = TrainConfig(batch=32, lr0=0.003, step_size=3200, gamma=0.5, beta1=0.9, beta2=0.999,
                      max_steps=2000, seed=0)
    result = train(X, y, cfg, ClassifierKind.MFA)
    scores = predict_scores(Xe, result.params)
    eer = compute_eer(scores[ye == 1], scores[ye == 0])[0]
    elapsed = time.perf_counter() - start
    print(f"held-out eer={eer:.4f} runtime={elapsed:.1f}s")
    assert eer <= 0.01
    assert elapsed < 300


@acceptance(5, "MFA beats GAP on layer_sparse(j=1) in >= 4 of 5 seeds")
def test_ablation_direction():
    base = dict(L=6, T=20, D=8, mode="layer_sparse", layer=1, delta=1.0, noise=1.0, n_per_class=200)
    wins = 0
    for s in range(5):
        X, y = sample(SynthConfig(seed=100 + s, **base))
        Xe, ye = sample(SynthConfig(seed=200 + s, **base))
        cfg = TrainConfig(max_steps=500, seed=s)
        eers = {}
        for kind in (ClassifierKind.MFA, ClassifierKind.GAP):
            scores = predict_scores(Xe, train(X, y, cfg, kind).params)
            eers[kind] = compute_eer(scores[ye == 1], scores[ye == 0])[0]
        print(f"seed {s}: mfa={eers[ClassifierKind.MFA]:.4f} gap={eers[ClassifierKind.GAP]:.4f}")
        wins += eers[ClassifierKind.MFA] < eers[ClassifierKind.GAP]
    assert wins >= 4


def _pipeline(root):
    synth = ["--set", "synth.L=3", "--set", "synth.T=12", "--set", "synth.D=6",
             "--set", "synth.n_per_class=30", "--set", "synth.delta=1.5"]
    tdcf = root / "cost.txt"
    tdcf.write_text("p_miss_asv=0.05\np_fa_asv=0.05\np_miss_spoof_asv=0.05\n")
    steps = [
        ["synth", "--out", root / "tr", *synth, "--set", "synth.seed=1"],
        ["synth", "--out", root / "ev", *synth, "--set", "synth.seed=2"],
        ["train", "--manifest", root / "tr/manifest.tsv", "--data", root / "tr",
         "--set", "train.max_steps=60", "--set", "train.seed=3", "--out", root / "model.ckpt"],
        ["score", "--manifest", root / "ev/manifest.tsv", "--data", root / "ev",
         "--ckpt", root / "model.best.ckpt", "--out", root / "scores.txt"],
    ]
    for argv in steps:
        assert main([str(a) for a in argv]) == 0
    return ["--scores", str(root / "scores.txt"), "--labels", str(root / "ev/manifest.tsv"),
            "--tdcf", str(tdcf)]


@acceptance(6, "pipeline is byte-for-byte deterministic")
def test_pipeline_determinism(tmp_path, capsys):
    reports = []
    for run in ("a", "b"):
        root = tmp_path / run
        root.mkdir()
        eval_args = _pipeline(root)
        capsys.readouterr()
        assert main(["eval", *eval_args]) == 0
        reports.append(capsys.readouterr().out)
    assert reports[0] == reports[1] and reports[0].startswith("eer=")
    for name in ("model.ckpt", "model.best.ckpt", "model.log.tsv", "scores.txt",
                 "tr/manifest.tsv", "ev/utt00000.leb"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


@acceptance(7, "LEB and checkpoint roundtrips are lossless; malformed inputs rejected")
def test_format_conformance():
    rng = Rng(7)
    for _ in range(50):
        shape = tuple(1 + rng.below(6) for _ in range(3))
        x = rng.normal(shape, scale=10 ** rng.uniform(-3, 3)).astype(np.float32)
        assert ds.read_leb(ds.leb_bytes(x)).tobytes() == x.tobytes()
        tensors = {}
        for j in range(1 + rng.below(5)):
            rank = rng.below(4)
            tshape = tuple(1 + rng.below(4) for _ in range(rank))
            tensors[f"t{j}.w"] = np.array(rng.normal(tshape), dtype=np.float32)
        back = ds.load_checkpoint(ds.checkpoint_bytes(tensors))
        assert list(back) == list(tensors)
        for k in tensors:
            assert back[k].shape == tensors[k].shape and back[k].tobytes() == tensors[k].tobytes()

    leb = ds.leb_bytes(np.ones((2, 3, 4), dtype=np.float32))
    bad_leb = [
        (b"LEB2" + leb[4:], ds.BadMagicError),
        (leb[:4] + struct.pack("<I", 7) + leb[8:], ds.BadVersionError),
        (leb[:20] + b"\x02" + leb[21:], ds.BadDtypeError),
        (leb[:15], ds.TruncatedError),
        (leb[:-4], ds.TruncatedError),
        (leb + b"\x00" * 4, ds.SizeMismatchError),
    ]
    ckpt = ds.checkpoint_bytes({"w": np.ones((2, 2), dtype=np.float32)})
    bad_ckpt = [
        (b"MFAX" + ckpt[4:], ds.BadMagicError),
        (ckpt[:4] + struct.pack("<I", 3) + ckpt[8:], ds.BadVersionError),
        (ckpt[:-1], ds.TruncatedError),
        (ckpt + b"\x00", ds.SizeMismatchError),
    ]
    for data, error in bad_leb:
        with pytest.raises(error):
            ds.read_leb(data)
    for data, error in bad_ckpt:
        with pytest.raises(error):
            ds.load_checkpoint(data)


@acceptance(8, "learning-rate schedule and Adam trajectories")
def test_scheduler_and_optimizer():
    cfg = TrainConfig()
    assert [lr_at(s, cfg) for s in (0, 3200, 6400)] == [0.003, 0.0015, 0.00075]
    rng = Rng(8)
    for _ in range(20):
        grads = rng.normal(10, scale=3.0).tolist()
        lr, x0 = rng.uniform(1e-4, 1e-1), rng.normal()
        p = np.array([x0])
        state = AdamState.zeros_like(p)
        got = []
        for g in grads:
            adam_step(p, np.array([g]), state, lr)
            got.append(p[0])
        np.testing.assert_allclose(got, scalar_adam(grads, lr, x0=x0), rtol=0, atol=1e-12)
