import math

import numpy as np
import pytest

import sinessl


def test_sinusoidal_threshold_start_and_curve():
    sched = {"kind": "sinusoidal_decay", "t_f": 0.95, "alpha": 0.5, "beta": 0.05, "omega": 1.0}
    assert sinessl.threshold_at(sched, 0, 5000) == 0.95
    curve = sinessl.threshold_curve(sched, 1000)
    assert len(curve) == 1001
    for i in (1, 17, 500, 1000):
        lin = 0.95 * (1 - 0.5 * i / 1000)
        assert curve[i] == pytest.approx(lin + 0.05 * math.sin(i), abs=1e-12)
        lo, hi = sinessl.envelope(0.95, 0.5, 0.05, 1.0, i, 1000)
        assert lo <= curve[i] <= hi


def test_unknown_schedule_is_config_error():
    with pytest.raises(sinessl.ConfigError):
        sinessl.threshold_at({"kind": "cosine"}, 0, 10)


def test_pseudo_label_tie_and_gate():
    assert sinessl.pseudo_label([0.4, 0.4, 0.2], 0.5) == (0, 0.4, False)
    cls, p, ok = sinessl.pseudo_label([0.1, 0.9, 0.0], 0.9)
    assert (cls, ok) == (1, True)
    with pytest.raises(sinessl.ContractError):
        sinessl.pseudo_label([0.5, 0.6], 0.5)


def test_q_sample_inverts():
    rng = np.random.default_rng(0)
    s = sinessl.DiffusionSchedule()
    x0 = rng.standard_normal((4, 1, 32, 32))
    eps = rng.standard_normal(x0.shape)
    for t in (1, 200, 400):
        xt = sinessl.q_sample(x0, t, eps, s)
        assert xt.shape == x0.shape
        np.testing.assert_allclose(sinessl.invert_with_oracle(xt, t, eps, s), x0, atol=1e-9)


def test_bundle_shapes_and_hand_rule(tmp_path):
    b = sinessl.make_bundle({"labeled_per_class": 2, "unlabeled": 12, "test_per_class": 30, "seed": 4})
    assert b["labeled_images"].shape == (6, 1, 32, 32)
    assert b["unlabeled_images"].shape == (12, 1, 32, 32)
    assert b["test_images"].shape == (90, 1, 32, 32)
    assert b["pool_kind"] == "real_clean"
    assert np.abs(b["test_images"]).max() <= 1.0
    ids = set(b["labeled_ids"]) | set(b["unlabeled_ids"]) | set(b["test_ids"])
    assert len(ids) == 6 + 12 + 90
    pred = np.array(sinessl.hand_classify(b["test_images"]))
    assert (pred == np.array(b["test_classes"])).mean() > 0.8

    path = tmp_path / "x.tnsr"
    sinessl.save_tnsr(str(path), b["labeled_images"])
    np.testing.assert_allclose(sinessl.load_tnsr(str(path)), b["labeled_images"], atol=1e-6)


def test_missing_synthetic_pool_names_path(tmp_path):
    with pytest.raises(sinessl.IoError, match="nope.tnsr"):
        sinessl.make_bundle({"pool_kind": "synthetic", "synthetic_pool": str(tmp_path / "nope.tnsr")})


def test_short_training_run(tmp_path):
    cfg = sinessl.default_config()
    cfg["data"].update(unlabeled=32, test_per_class=10)
    cfg["train"].update(iterations=4, eval_every=2)
    acc = sinessl.train_ssl(cfg, str(tmp_path / "run"))
    assert 0.0 <= acc <= 1.0
    header = (tmp_path / "run" / "metrics.csv").read_text().splitlines()[0]
    assert header == "iter,loss_sup,loss_unsup,mask_rate,threshold,test_accuracy"


def test_cli_exit_codes(tmp_path):
    assert sinessl.cli(["gen-data", "--out", str(tmp_path / "d"), "--unlabeled", "9"]) == 0
    assert (tmp_path / "d" / "bundle_meta.json").exists()
    assert sinessl.cli(["train-ssl", "--config", str(tmp_path / "missing.json")]) == 2
