import numpy as np
import pytest

from polardemosaic.cli import main
from polardemosaic.imagecore import PlanarImage, read_image, write_pgm
from polardemosaic.lcdgt import RigConfig, write_synthetic_captures
from polardemosaic.runconfig import ConfigError, RunConfig


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "d"
    assert main(["synth", "--out", str(out), "--samples", "8", "--seed", "1"]) == 0
    return out


def test_synth_layout(dataset, tmp_path):
    files = sorted(p.name for p in dataset.iterdir())
    assert len(files) == 25 and sum(f.endswith(".pfm") for f in files) == 24
    again = tmp_path / "again"
    main(["synth", "--out", str(again), "--samples", "8", "--seed", "1"])
    for name in files:
        assert (dataset / name).read_bytes() == (again / name).read_bytes()


def test_missing_out_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--samples", "3"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_demosaic_sizes(tmp_path):
    raw = np.random.default_rng(0).uniform(0, 1, (4, 4))
    write_pgm(PlanarImage(raw), tmp_path / "raw.pgm")
    assert main(["demosaic", "--method", "naive", "--in", str(tmp_path / "raw.pgm"),
                 "--out-prefix", str(tmp_path / "n")]) == 0
    assert read_image(tmp_path / "n_intensity.pfm").shape == (2, 2, 1)
    assert read_image(tmp_path / "n_aolp.pfm").shape == (2, 2, 1)
    assert main(["demosaic", "--method", "bicubic", "--in", str(tmp_path / "raw.pgm"),
                 "--out-prefix", str(tmp_path / "b")]) == 0
    assert read_image(tmp_path / "b_intensity.pfm").shape == (4, 4, 1)


def test_demosaic_pfadn_needs_weights(tmp_path):
    write_pgm(PlanarImage(np.zeros((4, 4))), tmp_path / "raw.pgm")
    assert main(["demosaic", "--method", "pfadn", "--in", str(tmp_path / "raw.pgm"),
                 "--out-prefix", str(tmp_path / "p")]) == 2


def test_missing_input_is_io_error(tmp_path):
    assert main(["demosaic", "--method", "naive", "--in", str(tmp_path / "nope.pgm"),
                 "--out-prefix", str(tmp_path / "p")]) == 1


def test_eval_four_rows(dataset, tmp_path):
    out = tmp_path / "r.csv"
    assert main(["eval", "--manifest", str(dataset / "manifest.jsonl"), "--methods", "naive,bilinear",
                 "--sigmas", "0,0.002", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 5
    assert main(["eval", "--manifest", str(dataset / "manifest.jsonl"), "--methods", "naive,bogus",
                 "--out", str(out)]) == 2


def test_eval_skips_pfadn_without_weights(dataset, tmp_path):
    out = tmp_path / "r.csv"
    assert main(["eval", "--manifest", str(dataset / "manifest.jsonl"), "--methods", "naive,pfadn",
                 "--out", str(out)]) == 0
    assert "pfadn" not in out.read_text()


def small_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# tiny network\nmodel.tile = 128\nmodel.mconv_width=2\nmodel.mconv_blocks=1\n"
                   "model.shrink=2\nmodel.map_layers=1\nmodel.expand=2\nmodel.angle_widths=2\n"
                   "train.batch_size=3\ntrain.lr=1e-3\n")
    return cfg


def test_train_resume_zero_epochs_is_identity(dataset, tmp_path):
    cfg = small_config(tmp_path)
    w1, w2 = tmp_path / "w1.bin", tmp_path / "w2.bin"
    assert main(["train", "--manifest", str(dataset / "manifest.jsonl"), "--out", str(w1), "--epochs", "1",
                 "--config", str(cfg), "--history", str(tmp_path / "h.csv")]) == 0
    assert main(["train", "--manifest", str(dataset / "manifest.jsonl"), "--out", str(w2), "--resume", str(w1),
                 "--epochs", "0", "--config", str(cfg)]) == 0
    assert w1.read_bytes() == w2.read_bytes()
    out = tmp_path / "r.csv"
    assert main(["eval", "--manifest", str(dataset / "manifest.jsonl"), "--methods", "pfadn",
                 "--weights", str(w1), "--out", str(out)]) == 0
    assert out.read_text().splitlines()[1].startswith("pfadn,0,")


def test_unknown_config_key(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("train.lr=1e-3\ntrain.lrr=2\n")
    with pytest.raises(ConfigError):
        RunConfig.load(bad)
    assert main(["synth", "--out", str(tmp_path / "x"), "--samples", "1", "--config", str(bad)]) == 2


def test_config_defaults_documented():
    cfg = RunConfig()
    assert cfg["train.lr"] == 1e-4 and cfg.model().angle_widths == (32, 16)
    assert cfg.synth().tile == 128


@pytest.fixture(scope="module")
def captures(tmp_path_factory):
    root = tmp_path_factory.mktemp("caps")
    rig = RigConfig(camera_shape=(96, 128), screen_shape=(120, 160))
    write_synthetic_captures(root / "flat", rig, flat_display=0.8)
    write_synthetic_captures(root / "random", rig)
    return root


def test_alpha_estimate_prints_planted_angle(captures, capsys):
    assert main(["alpha-estimate", "--captures", str(captures / "flat")]) == 0
    out = capsys.readouterr().out.strip()
    assert out.startswith("alpha_deg=37.0")
    assert abs(float(out.split()[0].split("=")[1]) - 37.0) < 0.01


def test_gt_build_writes_manifest_and_qc(captures, tmp_path):
    cfg = tmp_path / "gt.cfg"
    cfg.write_text("gt.tile=32\ngt.alpha_deg=37\n")
    out = tmp_path / "gt"
    assert main(["gt-build", "--captures", str(captures / "random"), "--out", str(out), "--config", str(cfg)]) == 0
    qc = sorted(out.glob("qc_*.json"))
    assert len(qc) == 5
    lines = (out / "manifest.jsonl").read_text().splitlines()
    assert len(lines) >= 5
    assert read_image(out / "input_pose_000_0000.pfm").shape == (32, 32, 1)


def test_gt_build_missing_captures(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["gt-build", "--captures", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == 1
