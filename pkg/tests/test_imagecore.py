import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from polardemosaic.imagecore import (
    PFA,
    ChannelMismatch,
    DatasetManifest,
    DuplicateName,
    MagicMismatch,
    ManifestEntry,
    MosaicedImage,
    NaNPayload,
    PayloadSizeMismatch,
    PlanarImage,
    TrailingBytes,
    TruncatedPayload,
    UnsupportedFormat,
    load_weights,
    read_image,
    read_manifest,
    read_pfm,
    read_pgm,
    save_weights,
    write_pfm,
    write_pgm,
)


def test_pattern_layout():
    assert [PFA.angle_at(r, c) for r in (0, 1) for c in (0, 1)] == [90, 45, 135, 0]
    for a in (0, 45, 90, 135):
        assert PFA.angle_at(*PFA.offset_of(a)) == a
    grid = PFA.angle_grid(4, 6)
    assert grid[2, 4] == 90 and grid[3, 5] == 0


def test_planar_image_is_immutable_copy():
    src = np.zeros((2, 3))
    img = PlanarImage(src)
    src[0, 0] = 5
    assert img.shape == (2, 3, 1) and img.data[0, 0, 0] == 0
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1


def test_planar_image_rejects_nonfinite():
    with pytest.raises(ValueError):
        PlanarImage(np.array([[np.nan]]))


def test_mosaiced_image_needs_even_single_channel():
    with pytest.raises(ValueError):
        MosaicedImage(PlanarImage(np.zeros((3, 4))))
    with pytest.raises(ValueError):
        MosaicedImage(PlanarImage(np.zeros((4, 4, 3))))


@pytest.mark.parametrize("maxval", [255, 4095, 65535])
def test_pgm_round_trip_bytes(tmp_path, maxval):
    rng = np.random.default_rng(maxval)
    q = rng.integers(0, maxval + 1, size=(5, 7))
    img = PlanarImage(q / maxval)
    write_pgm(img, tmp_path / "a.pgm", maxval=maxval)
    back = read_pgm(tmp_path / "a.pgm")
    assert back.source_maxval == maxval
    np.testing.assert_array_equal(np.rint(back.data[..., 0] * maxval), q)
    write_pgm(back, tmp_path / "b.pgm")
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()


def test_pgm_header_comments_and_errors(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    np.testing.assert_allclose(read_pgm(p).data[..., 0], [[0.0, 1.0]])
    p.write_bytes(b"P2\n2 1\n255\n0 255\n")
    with pytest.raises(UnsupportedFormat):
        read_pgm(p)
    p.write_bytes(b"P5\n2 2\n255\n\x00")
    with pytest.raises(TruncatedPayload):
        read_pgm(p)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 6), st.sampled_from([1, 3])),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_pfm_round_trip_bit_exact(tmp_path_factory, data):
    p = tmp_path_factory.mktemp("pfm") / "x.pfm"
    write_pfm(PlanarImage(data), p)
    back = read_pfm(p)
    assert back.data.dtype == np.float32
    assert back.data.tobytes() == np.ascontiguousarray(data).tobytes()


def test_pfm_big_endian_and_row_order(tmp_path):
    p = tmp_path / "be.pfm"
    rows = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=">f4")
    # bottom row first on disk
    p.write_bytes(b"Pf\n2 2\n1.0\n" + rows[::-1].tobytes())
    np.testing.assert_array_equal(read_pfm(p).data[..., 0], rows.astype(np.float32))


def test_pfm_errors(tmp_path):
    p = tmp_path / "bad.pfm"
    p.write_bytes(b"P6\n1 1\n-1.0\n" + b"\x00" * 4)
    with pytest.raises(MagicMismatch):
        read_pfm(p)
    p.write_bytes(b"Pf\n1 1\n-1.0\n" + np.array([np.nan], "<f4").tobytes())
    with pytest.raises(NaNPayload):
        read_pfm(p)
    with pytest.raises(ChannelMismatch):
        write_pfm(PlanarImage(np.zeros((2, 2, 2))), tmp_path / "two.pfm")


def test_read_image_dispatch(tmp_path):
    with pytest.raises(UnsupportedFormat):
        read_image(tmp_path / "x.png")


def test_weights_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    params = {"b": rng.standard_normal((3, 2)).astype(np.float32), "a": np.float32(2.5),
              "c": rng.standard_normal((2, 2, 1, 4)).astype(np.float32)}
    save_weights(params, tmp_path / "w.bin")
    back = load_weights(tmp_path / "w.bin")
    assert sorted(back) == ["a", "b", "c"]
    for k, v in params.items():
        assert back[k].tobytes() == np.asarray(v, "<f4").tobytes()
    save_weights(back, tmp_path / "w2.bin")
    assert (tmp_path / "w.bin").read_bytes() == (tmp_path / "w2.bin").read_bytes()


def test_weights_errors(tmp_path):
    with pytest.raises(DuplicateName):
        save_weights([("a", np.zeros(1)), ("a", np.zeros(1))], tmp_path / "d.bin")
    save_weights({"a": np.zeros(3)}, tmp_path / "w.bin")
    raw = (tmp_path / "w.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-2])
    with pytest.raises(PayloadSizeMismatch):
        load_weights(tmp_path / "t.bin")
    (tmp_path / "x.bin").write_bytes(raw + b"\x00")
    with pytest.raises(TrailingBytes):
        load_weights(tmp_path / "x.bin")
    (tmp_path / "m.bin").write_bytes(b"NOTPFADN" + raw[8:])
    with pytest.raises(MagicMismatch):
        load_weights(tmp_path / "m.bin")


def test_manifest_round_trip(tmp_path):
    for name in ("in.pfm", "i.pfm", "a.pfm"):
        write_pfm(PlanarImage(np.zeros((4, 4), np.float32)), tmp_path / name)
    entries = [ManifestEntry("in.pfm", "i.pfm", "a.pfm", "train"), ManifestEntry("in.pfm", "i.pfm", "a.pfm", "test")]
    DatasetManifest(entries, tmp_path).write(tmp_path / "m.jsonl")
    m = read_manifest(tmp_path / "m.jsonl")
    assert m.entries == entries and len(m.train) == 1 and len(m.test) == 1
    m.validate()
    raw, intensity, aolp, mask = m.load_entry(m.train[0])
    assert raw.shape == (4, 4) and mask is None
    with pytest.raises(ValueError):
        ManifestEntry("a", "b", "c", "val")
