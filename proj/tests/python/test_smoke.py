import numpy as np
import pytest

import advinn


def test_wavelet_round_trip_and_energy():
    rng = np.random.default_rng(0)
    x = rng.random((3, 16, 16))
    for levels in (1, 2):
        c = advinn.dwt(x, levels)
        assert c.shape == (3 * 4**levels, 16 >> levels, 16 >> levels)
        assert np.abs(advinn.idwt(c, levels) - x).max() < 1e-12
        assert abs((c**2).sum() - (x**2).sum()) < 1e-9


def test_band_channels_partition():
    groups = [advinn.band_channels(1, 2, b) for b in (advinn.Band.LL, advinn.Band.LH, advinn.Band.HL, advinn.Band.HH)]
    assert sorted(sum(groups, [])) == list(range(16))
    assert groups[0] == [0]


def test_iiem_identity_and_inverse():
    rng = np.random.default_rng(1)
    a, b = rng.random((3, 8, 8)), rng.random((3, 8, 8))
    theta = advinn.Iiem(channels=3, seed=3)
    adv, res = theta.forward(a, b)
    assert np.abs(adv - a).max() < 1e-12 and np.abs(res - b).max() < 1e-12
    theta.perturb_parameters(seed=4, scale=0.05)
    adv, res = theta.forward(a, b)
    assert np.abs(adv - a).max() > 1e-6
    c, t = theta.inverse(adv, res)
    assert np.abs(c - a).max() < 1e-10 and np.abs(t - b).max() < 1e-10


def test_metrics():
    rng = np.random.default_rng(2)
    a = rng.random((3, 16, 16))
    assert advinn.ssim(a, a) == 1.0
    b = np.clip(a + 0.01, 0, 1)
    assert advinn.linf_distance(a, b) == pytest.approx(np.abs(a - b).max())
    assert advinn.l2_distance(a, b) == pytest.approx(np.sqrt(((a - b) ** 2).sum()))


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        advinn.dwt(np.zeros((3, 5, 5)), 1)
    with pytest.raises(OSError):
        advinn.Classifier.load("/nonexistent/classifier.advinn")


def test_dataset_shapes():
    d = advinn.shapes_dataset(seed=1, n_train=16, n_test=8, size=32)
    assert d["train_images"].shape == (16, 3, 32, 32)
    assert len(d["test_labels"]) == 8
    assert d["train_images"].min() >= 0 and d["train_images"].max() <= 1


def test_workflow(tmp_path):
    settings = {
        "data-dir": tmp_path / "data",
        "out-dir": tmp_path / "out",
        "n-train": 128,
        "n-test": 32,
        "epochs": 4,
        "num-images": 2,
        "max-iter": 30,
    }
    advinn.gen_data(settings)
    train_acc, test_acc = advinn.train(settings)
    assert 0 <= test_acc <= 1 and train_acc > 0.3
    summary = advinn.attack(settings)
    assert summary["count"] == 2
    assert (tmp_path / "out" / "attack_results.csv").read_text().startswith("id,target_class,success")

    model = advinn.Classifier.load(str(tmp_path / "out" / "classifier.advinn"))
    image = advinn.shapes_dataset(seed=1, n_train=8, n_test=4)["test_images"][0]
    r = advinn.run_attack(model, image, {"max-iter": 5})
    assert r["iterations"] <= 5
    assert r["linf"] <= 8 / 255 + 1 / 510
    assert r["x_adv"].shape == image.shape
