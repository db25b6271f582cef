import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from tsom.core import (
    DirectionalStack,
    Frame,
    ImageReadError,
    PipelineConfig,
    ReplicateConvolver,
    Sequence,
    convolve_direct,
    load_sequence,
    natural_key,
    normalize_minmax,
    overlay_detections,
    save_map,
    save_sequence,
)
from tsom.rt import Detection


def write_png(path, arr, mode="L"):
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode=mode).save(path)


# --- Frame / Sequence --------------------------------------------------------


def test_frame_is_read_only_and_validated():
    f = Frame(np.zeros((3, 4)))
    assert (f.width, f.height) == (4, 3)
    with pytest.raises(ValueError):
        f.data[0, 0] = 1.0
    with pytest.raises(ValueError):
        Frame(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        Frame(np.zeros(5))


def test_uint8_maps_exactly():
    f = Frame.from_uint8(np.array([[0, 255, 51]], dtype=np.uint8))
    assert f.data.tolist() == [[0.0, 1.0, 0.2]]


@given(
    st.integers(1, 12),
    st.integers(1, 12),
    st.data(),
)
def test_frame_indexing_matches_row_major_layout(w, h, data):
    values = np.arange(w * h, dtype=np.float64) / (w * h)
    f = Frame(values.reshape(h, w))
    x = data.draw(st.integers(0, w - 1))
    y = data.draw(st.integers(0, h - 1))
    assert f.at(x, y) == values[y * w + x]


def test_sequence_time_and_shape_checks():
    seq = Sequence(np.zeros((4, 2, 3)), fps=25.0)
    assert len(seq) == 4 and seq.width == 3 and seq.height == 2
    assert seq.time(5) == 0.2
    with pytest.raises(ValueError):
        Sequence(np.zeros((2, 2, 2)), fps=0.0)
    with pytest.raises(ValueError):
        Sequence.from_frames([Frame(np.zeros((2, 2))), Frame(np.zeros((3, 2)))])
    with pytest.raises(ValueError):
        Sequence.from_frames([])


def test_quadrature_pairs():
    maps = np.zeros((1, 4, 1, 2, 2))
    s = DirectionalStack((0.0,), (0.0, np.pi / 2, np.pi, 3 * np.pi / 2), maps)
    assert s.quadrature_pairs() == [(0, 1), (2, 3)]
    s2 = DirectionalStack((0.0,), (0.0, np.pi), np.zeros((1, 2, 1, 2, 2)))
    assert s2.quadrature_pairs() == []
    with pytest.raises(ValueError):
        DirectionalStack((0.0, 1.0), (0.0,), maps)


# --- image I/O ---------------------------------------------------------------


def test_directory_of_identical_frames(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (512, 512)).astype(np.uint8)
    for k in range(20):
        write_png(tmp_path / f"f{k}.png", img)
    seq = load_sequence(tmp_path)
    assert len(seq) == 20
    assert all(np.array_equal(seq.frames[k], seq.frames[0]) for k in range(20))
    assert np.array_equal(seq.frames[0], img / 255.0)


def test_white_is_one_and_red_is_rec601(tmp_path):
    write_png(tmp_path / "a.png", np.full((2, 2), 255))
    assert load_sequence(tmp_path / "a.png").frames.max() == 1.0
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[..., 0] = 255
    write_png(tmp_path / "b.png", rgb, mode="RGB")
    assert load_sequence(tmp_path / "b.png").frames[0, 0, 0] == pytest.approx(0.299, abs=1e-12)


def test_natural_sort_order(tmp_path):
    for k in (10, 2, 1):
        write_png(tmp_path / f"frame{k}.png", np.full((2, 2), k))
    seq = load_sequence(tmp_path)
    assert [round(v * 255) for v in seq.frames[:, 0, 0]] == [1, 2, 10]
    assert sorted(["frame10", "frame2"], key=natural_key) == ["frame2", "frame10"]


def test_load_errors_name_the_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_sequence(tmp_path / "missing")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ImageReadError):
        load_sequence(empty)
    mixed = tmp_path / "mixed"
    mixed.mkdir()
    write_png(mixed / "0.png", np.zeros((4, 4)))
    write_png(mixed / "1.png", np.zeros((4, 5)))
    with pytest.raises(ValueError, match="1.png"):
        load_sequence(mixed)
    bad = tmp_path / "bad"
    bad.mkdir()
    write_png(bad / "0.png", np.zeros((4, 4)))
    (bad / "1.png").write_bytes(b"not an image")
    with pytest.raises(ImageReadError, match="1.png"):
        load_sequence(bad)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(0, 255), min_size=12, max_size=12))
def test_grayscale_round_trip(tmp_path_factory, pixels):
    d = tmp_path_factory.mktemp("rt")
    seq = Sequence(np.array(pixels, dtype=np.float64).reshape(2, 2, 3) / 255.0)
    save_sequence(seq, d)
    back = load_sequence(d)
    assert np.array_equal(back.frames, seq.frames)


def test_save_map_normalizes(tmp_path):
    m = np.zeros((4, 4))
    m[1, 2] = 2.0
    save_map(m, tmp_path / "m.png")
    png = np.asarray(Image.open(tmp_path / "m.png"))
    assert png[1, 2] == 255 and png.sum() == 255
    save_map(np.full((3, 3), 7.0), tmp_path / "c.png")
    assert not np.asarray(Image.open(tmp_path / "c.png")).any()
    with pytest.raises(ValueError):
        save_map(np.array([[np.inf, 0.0]]), tmp_path / "x.png")
    assert normalize_minmax(np.array([1.0, 3.0])).tolist() == [0.0, 1.0]


def test_overlay_is_local():
    f = Frame(np.full((30, 30), 0.5))
    out = overlay_detections(f, [Detection(0, 10, 10, 1.0)])
    yy, xx = np.nonzero(out.data != f.data)
    assert len(yy) > 0
    assert np.all(np.hypot(xx - 10, yy - 10) <= 5)


# --- configuration -----------------------------------------------------------


def test_config_defaults_and_validation(tmp_path):
    cfg = PipelineConfig()
    assert cfg.alpha == [0.125] * 8
    assert cfg.kernel_size == 13
    for bad in ({"kernel_size": 4}, {"kernel_size": 1}, {"n_directions": 1}, {"alpha": [1.0]},
                {"soma_mu": 1.5}, {"sigma1": float("nan")}, {"flicker_mode": "x"}):
        with pytest.raises(ValueError):
            PipelineConfig(**bad)
    with pytest.raises(ValueError, match="unknown"):
        PipelineConfig.from_dict({"sigma": 1.0})
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"n_directions": 4, "zscore_epsilon": 1.0}))
    cfg = PipelineConfig.from_json(p)
    assert cfg.alpha == [0.25] * 4
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg


# --- convolution -------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.integers(5, 20), st.integers(5, 20), st.sampled_from([1, 3, 5]), st.integers(0, 2**31))
def test_fft_convolution_matches_direct(h, w, k, seed):
    rng = np.random.default_rng(seed)
    img = rng.normal(size=(h, w))
    ker = rng.normal(size=(k, k))
    assert np.allclose(ReplicateConvolver(ker)(img), convolve_direct(img, ker), atol=1e-10)


def test_convolver_kernel_stack_shape(rng):
    kernels = rng.normal(size=(3, 5, 5))
    maps = rng.normal(size=(2, 9, 11))
    out = ReplicateConvolver(kernels)(maps)
    assert out.shape == (2, 3, 9, 11)
    assert np.allclose(out[1, 2], convolve_direct(maps[1], kernels[2]), atol=1e-10)
    with pytest.raises(ValueError):
        ReplicateConvolver(np.ones((4, 4)))


def test_kernel_larger_than_map_uses_replicated_border(rng):
    img = rng.normal(size=(5, 6))
    ker = rng.normal(size=(9, 9))
    assert np.allclose(ReplicateConvolver(ker)(img), convolve_direct(img, ker), atol=1e-10)
