import numpy as np
import pytest
from oracles import gradient_check

from polardemosaic import autodiff as ad
from polardemosaic.imagecore import MosaicedImage, PlanarImage, load_weights
from polardemosaic.mosaic import SynthConfig, generate_synthetic_dataset
from polardemosaic.pfadn import (
    ModelConfig,
    PfadnModel,
    TrainConfig,
    demosaic_full_frame,
    evaluate_loss,
    load_tiles,
    load_checkpoint,
    pad_even_aligned,
    pfadn_loss,
    train,
    write_history_csv,
)

SMALL = ModelConfig(tile=16, mconv_width=2, mconv_blocks=2, shrink=3, map_layers=1, expand=4,
                    angle_widths=(3, 2), deconv_size=5)


def with_random_biases(model, rng):
    """Nonzero biases keep the tiny angle head away from the all-zero output where x / (|x| + eps) is singular."""
    for name, p in model.params.items():
        if name.endswith(".bias"):
            p.value = rng.uniform(0.1, 0.5, p.shape).astype(p.dtype)
    return model


@pytest.fixture(scope="module")
def tiny_manifest(tmp_path_factory):
    return generate_synthetic_dataset(None, 12, tmp_path_factory.mktemp("tiny"), SynthConfig(tile=16), seed=5)


def test_forward_shapes_and_unit_vectors():
    rng = np.random.default_rng(0)
    model = with_random_biases(PfadnModel.init(SMALL, seed=0), rng)
    x = rng.uniform(0, 1, (3, 16, 16))
    i, a = model.forward(x)
    assert i.shape == (3, 16, 16, 1) and a.shape == (3, 16, 16, 2)
    np.testing.assert_allclose(np.linalg.norm(a.value, axis=-1), 1.0, atol=1e-5)
    with pytest.raises(ValueError):
        model.forward(np.zeros((1, 8, 8)))


def test_default_parameter_inventory():
    model = PfadnModel.init(seed=0)
    w = model.weights()
    assert w["mconv0.0.kernel"].shape == (2, 2, 1, 16)
    assert w["mconv2.3.kernel"].shape == (2, 2, 16, 16)
    assert w["shrink.kernel"].shape == (1, 1, 64, 12)
    assert w["map3.kernel"].shape == (3, 3, 12, 12)
    assert w["expand.kernel"].shape == (1, 1, 12, 56)
    assert w["deconv.kernel"].shape == (5, 5, 1, 56)
    assert w["angle_out.kernel"].shape == (3, 3, 16, 2)


def test_save_load_round_trip(tmp_path):
    model = PfadnModel.init(SMALL, seed=3)
    model.save(tmp_path / "w.bin")
    back = PfadnModel.load(tmp_path / "w.bin")
    assert back.config == SMALL
    for k, v in model.weights().items():
        assert back.weights()[k].tobytes() == v.tobytes()
    back.save(tmp_path / "w2.bin")
    assert (tmp_path / "w.bin").read_bytes() == (tmp_path / "w2.bin").read_bytes()


def test_loss_zero_at_ground_truth():
    rng = np.random.default_rng(1)
    i = rng.uniform(0, 1, (2, 16, 16, 1))
    a = ad.normalize_pairs(ad.Node(rng.standard_normal((2, 16, 16, 2)))).value
    assert float(pfadn_loss(i, ad.Node(i), a, ad.Node(a)).value) == pytest.approx(0.0, abs=1e-12)


def test_full_network_gradient():
    rng = np.random.default_rng(2)
    model = with_random_biases(PfadnModel.init(SMALL, seed=2, dtype=np.float64), rng)
    names = sorted(model.params)
    x = rng.uniform(0, 1, (1, 16, 16, 1))
    i_gt = rng.uniform(0, 1, (1, 16, 16, 1))
    a_gt = ad.normalize_pairs(ad.Node(rng.standard_normal((1, 16, 16, 2)))).value

    def build(nodes):
        model.params = dict(zip(names, nodes))
        i, a = model.forward(x, train=True)
        return pfadn_loss(i_gt, i, a_gt, a)

    err = gradient_check(build, [model.params[n].value for n in names], rng, sample=6)
    assert err <= 1e-3


def test_training_reduces_loss(tiny_manifest):
    model = PfadnModel.init(SMALL, seed=0)
    _, history = train(model, tiny_manifest, TrainConfig(lr=3e-3, epochs=4, batch_size=3))
    assert history[-1].train_loss < history[0].train_loss


def test_resume_is_bit_exact(tiny_manifest, tmp_path):
    cfg = TrainConfig(lr=2e-3, epochs=3, batch_size=4, seed=1, patience=1)
    full, _ = train(PfadnModel.init(SMALL, seed=4), tiny_manifest, cfg, checkpoint=tmp_path / "full.bin")
    half, _ = train(PfadnModel.init(SMALL, seed=4), tiny_manifest,
                    TrainConfig(lr=2e-3, epochs=1, batch_size=4, seed=1, patience=1), checkpoint=tmp_path / "half.bin")
    model, state = load_checkpoint(tmp_path / "half.bin")
    assert state.epoch == 1
    train(model, tiny_manifest, TrainConfig(lr=2e-3, epochs=2, batch_size=4, seed=1, patience=1),
          checkpoint=tmp_path / "resumed.bin", state=state)
    assert (tmp_path / "full.bin").read_bytes() == (tmp_path / "resumed.bin").read_bytes()
    assert load_weights(tmp_path / "full.bin")["train.epoch"] == 3


def test_history_csv(tmp_path, tiny_manifest):
    _, history = train(PfadnModel.init(SMALL, seed=0), tiny_manifest, TrainConfig(epochs=2, batch_size=6))
    write_history_csv(history, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,lr" and len(lines) == 3


def test_pad_keeps_filter_parity():
    raw = np.arange(36.0).reshape(6, 6)
    out = pad_even_aligned(raw, 10, 8)
    assert out.shape == (10, 8)
    for r in range(10):
        for c in range(8):
            rr, cc = min(r, 4 + r % 2), min(c, 4 + c % 2)
            assert out[r, c] == raw[rr, cc]


def test_full_frame_tiling_matches_single_tile():
    model = PfadnModel.init(SMALL, seed=0)
    rng = np.random.default_rng(3)
    raw = rng.uniform(0, 1, (20, 36))
    res = demosaic_full_frame(model, MosaicedImage(PlanarImage(raw)), batch=2)
    assert res.intensity.shape == (20, 36, 1) and res.aolp.shape == (20, 36, 1)
    tile = pad_even_aligned(raw, 32, 48)[:16, 16:32]
    i, _ = model.forward(tile[None])
    np.testing.assert_allclose(res.intensity.data[:16, 16:32, 0], i.value[0, :, :, 0], atol=1e-6)
    threaded = demosaic_full_frame(model, MosaicedImage(PlanarImage(raw)), jobs=2, batch=1)
    np.testing.assert_array_equal(threaded.intensity.data, res.intensity.data)


def test_loss_worked_example(monkeypatch):
    import polardemosaic.pfadn as pf

    monkeypatch.setattr(pf.ad, "ssim", lambda a, b: ad.Node(np.float64(1.0)))
    monkeypatch.setattr(pf.ad, "l1_loss", lambda a, b: ad.Node(np.float64(0.1)))
    monkeypatch.setattr(pf.ad, "l2_loss", lambda a, b: ad.Node(np.float64(0.04)))
    z = np.zeros((1, 4, 4, 1))
    assert float(pfadn_loss(z, ad.Node(z), z, ad.Node(z)).value) == pytest.approx(0.028)
    assert float(pfadn_loss(z, ad.Node(z), z, ad.Node(z), gamma=1.0).value) == pytest.approx(0.016)
    assert float(pfadn_loss(z, ad.Node(z), z, ad.Node(z), gamma=0.0).value) == pytest.approx(0.04)


def test_two_plateaus_quarter_lr(tiny_manifest):
    from polardemosaic.autodiff import AdamState
    from polardemosaic.pfadn import TrainState

    state = TrainState(lr=1e-3, best_val=-np.inf, adam=AdamState(lr=1e-3))
    _, history = train(PfadnModel.init(SMALL, seed=0), tiny_manifest,
                       TrainConfig(lr=1e-3, epochs=2, batch_size=6, patience=1), state=state)
    assert history[-1].lr == pytest.approx(1e-3 / 4)


def test_learning_sanity_200_steps(tmp_path):
    manifest = generate_synthetic_dataset(None, 40, tmp_path, SynthConfig(tile=32, train_fraction=0.8), seed=11)
    assert len(manifest.train) == 32
    cfg = TrainConfig(lr=2e-3, epochs=50, batch_size=8, patience=100)  # 4 steps per epoch
    model = PfadnModel.init(ModelConfig(tile=32), seed=0)
    data = load_tiles(manifest, manifest.train, 32)
    start = evaluate_loss(model, data, cfg)
    model, _ = train(model, manifest, cfg)
    assert model.train_state.adam.step == 200
    assert evaluate_loss(model, data, cfg) <= 0.5 * start


def test_full_frame_padding_arithmetic():
    model = PfadnModel.init(SMALL, seed=0)
    raw = np.random.default_rng(4).uniform(0, 1, (18, 34))
    res = demosaic_full_frame(model, MosaicedImage(PlanarImage(raw)))
    assert res.intensity.shape == (18, 34, 1)
    single = np.random.default_rng(5).uniform(0, 1, (16, 16))
    i, a = model.forward(single[None])
    res = demosaic_full_frame(model, MosaicedImage(PlanarImage(single)))
    np.testing.assert_array_equal(res.intensity.data[..., 0], i.value[0, :, :, 0])
    with pytest.raises(ValueError):
        demosaic_full_frame(model, MosaicedImage(PlanarImage(np.zeros((17, 16)))))


def test_forward_is_deterministic():
    model = PfadnModel.init(SMALL, seed=6)
    x = np.random.default_rng(6).uniform(0, 1, (2, 16, 16))
    a, b = model.forward(x), model.forward(x)
    assert a[0].value.tobytes() == b[0].value.tobytes() and a[1].value.tobytes() == b[1].value.tobytes()


@pytest.mark.parametrize("k", [3, 5, 7, 9])
def test_deconv_has_no_edge_falloff(k):
    """A constant feature map must upsample to a 2-periodic image all the way to the tile edge."""
    cfg = ModelConfig(tile=16, mconv_width=2, mconv_blocks=1, shrink=2, map_layers=1, expand=3,
                      angle_widths=(2,), deconv_size=k)
    model = PfadnModel.init(cfg, seed=1)
    for name, p in model.params.items():
        if name.startswith(("shrink", "map0", "expand")):
            p.value = np.abs(p.value) + 0.1
    i, _ = model.forward(np.full((1, 16, 16), 0.5))
    out = i.value[0, :, :, 0]
    np.testing.assert_allclose(out, np.tile(out[:2, :2], (8, 8)), rtol=1e-5)
