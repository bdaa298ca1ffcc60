import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from conftest import brute_window
from probsnake.raster import (
    GradientField,
    GrayImage,
    ImageFormatError,
    UnsupportedFormatError,
    build_integral,
    gradient,
    load_image,
    load_ppm,
    make_scene,
    save_pgm,
    save_ppm,
    window_stats,
)


def test_gray_image_invariants():
    img = GrayImage.from_rows(3, 2, [1, 2, 3, 4, 5, 6])
    assert (img.width, img.height) == (3, 2)
    assert img.data[1, 0] == 4
    with pytest.raises(ValueError):
        GrayImage.from_rows(3, 2, [1, 2, 3])
    with pytest.raises(ValueError):
        GrayImage(np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        img.data[0, 0] = 9


# -- file I/O ---------------------------------------------------------------


def test_load_p5_8bit(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([1, 2, 3, 4]))
    img = load_image(p)
    assert (img.width, img.height) == (2, 2)
    assert img.data.ravel().tolist() == [1, 2, 3, 4]


def test_load_p5_with_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n3 1 # width height\n255\n" + bytes([7, 8, 9]))
    assert load_image(p).data.ravel().tolist() == [7, 8, 9]


def test_truncated_payload(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([1, 2, 3]))
    with pytest.raises(ImageFormatError, match="unexpected end of data"):
        load_image(p)


def test_p5_16bit_independent_encoder(tmp_path):
    samples = [0, 1, 40000, 65535]
    p = tmp_path / "w.pgm"
    p.write_bytes(b"P5 2 2 65535\n" + b"".join(struct.pack(">H", s) for s in samples))
    img = load_image(p)
    assert img.data.ravel().tolist() == samples


@pytest.mark.parametrize(
    "payload, exc",
    [
        (b"P5\n2 x\n255\n\x00\x00\x00\x00", ImageFormatError),
        (b"P5\n2 2\n0\n\x00\x00\x00\x00", ImageFormatError),
        (b"P5\n2", ImageFormatError),
        (b"P2\n2 2\n255\n1 2 3 4\n", UnsupportedFormatError),
        (b"GIF89a....", UnsupportedFormatError),
    ],
)
def test_malformed_and_unsupported(tmp_path, payload, exc):
    p = tmp_path / "bad.img"
    p.write_bytes(payload)
    with pytest.raises(exc):
        load_image(p)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "nope.pgm")


def test_png_gray_and_16bit(tmp_path):
    a = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    Image.fromarray(a, mode="L").save(tmp_path / "g.png")
    assert np.array_equal(load_image(tmp_path / "g.png").data, a)
    b = (np.arange(12, dtype=np.uint16).reshape(3, 4) * 5000).astype(np.uint16)
    Image.fromarray(b).save(tmp_path / "g16.png")
    assert np.array_equal(load_image(tmp_path / "g16.png").data, b)


def test_png_color_rejected(tmp_path):
    Image.new("RGB", (4, 4)).save(tmp_path / "c.png")
    with pytest.raises(UnsupportedFormatError):
        load_image(tmp_path / "c.png")


@pytest.mark.parametrize("maxval", [255, 65535])
def test_pgm_round_trip(tmp_path, maxval):
    rng = np.random.default_rng(5)
    data = rng.integers(0, maxval + 1, size=(7, 9)).astype(float)
    save_pgm(GrayImage(data), tmp_path / "r.pgm", maxval=maxval)
    assert np.array_equal(load_image(tmp_path / "r.pgm").data, data)
    raw = (tmp_path / "r.pgm").read_bytes()
    save_pgm(load_image(tmp_path / "r.pgm"), tmp_path / "r2.pgm", maxval=maxval)
    assert (tmp_path / "r2.pgm").read_bytes() == raw


def test_ppm_round_trip(tmp_path):
    rgb = np.random.default_rng(0).integers(0, 256, size=(5, 6, 3)).astype(np.uint8)
    save_ppm(rgb, tmp_path / "o.ppm")
    assert (tmp_path / "o.ppm").read_bytes().startswith(b"P6\n6 5\n255\n")
    assert np.array_equal(load_ppm(tmp_path / "o.ppm"), rgb)


# -- integral tables ----------------------------------------------------------


def test_integral_hand_sum():
    t = build_integral(GrayImage(np.array([[1.0, 2.0], [3.0, 4.0]])))
    assert t.sum[2, 2] == 10 and t.sum_sq[2, 2] == 30
    assert np.all(t.sum[0] == 0) and np.all(t.sum[:, 0] == 0)
    assert t.exact


def test_integral_zero_image():
    t = build_integral(GrayImage(np.zeros((5, 4))))
    assert not t.sum.any() and not t.sum_sq.any()


def test_integral_rectangles_match_double_loop():
    rng = np.random.default_rng(11)
    data = rng.integers(0, 256, size=(16, 16))
    t = build_integral(GrayImage(data.astype(float)))
    for _ in range(200):
        x0, x1 = sorted(rng.integers(0, 17, size=2))
        y0, y1 = sorted(rng.integers(0, 17, size=2))
        s, q = t.rect_sum(x0, y0, x1, y1)
        bs = sum(int(data[y, x]) for y in range(y0, y1) for x in range(x0, x1))
        bq = sum(int(data[y, x]) ** 2 for y in range(y0, y1) for x in range(x0, x1))
        assert (s, q) == (bs, bq)


def test_integral_monotone_for_nonnegative():
    data = np.random.default_rng(2).uniform(0, 10, size=(9, 7))
    t = build_integral(GrayImage(data))
    assert np.all(np.diff(t.sum, axis=0) >= 0) and np.all(np.diff(t.sum, axis=1) >= 0)


# -- window statistics --------------------------------------------------------


def test_window_constant_image():
    t = build_integral(GrayImage(np.full((10, 10), 42.0)))
    for c in [(0, 0), (5, 5), (9, 3)]:
        assert window_stats(t, c, 3) == (42.0, 0.0)


def test_window_singleton():
    data = np.arange(20.0).reshape(4, 5)
    t = build_integral(GrayImage(data))
    assert window_stats(t, (3, 2), 0) == (13.0, 0.0)


def test_window_on_step_matches_loop():
    img, _ = make_scene("step-edge", 32, column=16)
    t = build_integral(img)
    for cx in (15, 16):
        mean, var = window_stats(t, (cx, 10), 3)
        bm, bv = brute_window(img.data, cx, 10, 3)
        assert mean == pytest.approx(bm, rel=1e-12)
        assert var == pytest.approx(bv, rel=1e-12)
    # 3 of 7 columns on one side: 100^2 * (3/7) * (4/7)
    assert window_stats(t, (15, 10), 3)[1] == pytest.approx(1e4 * 12 / 49)


def test_window_clipped_at_border():
    data = np.random.default_rng(4).integers(0, 50, size=(8, 8)).astype(float)
    t = build_integral(GrayImage(data))
    m, v = window_stats(t, (0, 7), 2)
    assert (m, v) == pytest.approx(brute_window(data, 0, 7, 2))


def test_window_errors():
    t = build_integral(GrayImage(np.zeros((4, 4))))
    with pytest.raises(ValueError):
        window_stats(t, (4, 0), 1)
    with pytest.raises(ValueError):
        window_stats(t, (1, 1), -1)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    shift=st.floats(-1e3, 1e3),
    scale=st.floats(0.1, 10),
    half=st.integers(0, 4),
)
def test_window_variance_shift_and_scale(seed, shift, scale, half):
    rng = np.random.default_rng(seed)
    data = rng.uniform(0, 255, size=(12, 12))
    cx, cy = (int(v) for v in rng.integers(0, 12, size=2))
    _, v = window_stats(build_integral(GrayImage(data)), (cx, cy), half)
    _, vs = window_stats(build_integral(GrayImage(data + shift)), (cx, cy), half)
    _, vk = window_stats(build_integral(GrayImage(data * scale)), (cx, cy), half)
    if half == 0:
        assert v == vs == vk == 0
    else:
        assert vs == pytest.approx(v, rel=1e-9)
        assert vk == pytest.approx(v * scale * scale, rel=1e-9)


# -- gradient -----------------------------------------------------------------


def test_gradient_ramp():
    g = gradient(GrayImage(np.tile(np.arange(6.0), (5, 1))))
    assert np.allclose(g.gx, 1) and np.allclose(g.gy, 0) and np.allclose(g.mag_sq, 1)


def test_gradient_constant():
    g = gradient(GrayImage(np.full((4, 4), 3.0)))
    assert not g.gx.any() and not g.gy.any() and not g.mag_sq.any()


def test_gradient_matches_difference_oracle():
    data = np.random.default_rng(8).normal(size=(8, 8))
    g = gradient(GrayImage(data))
    h, w = data.shape
    for y in range(h):
        for x in range(w):
            if 0 < x < w - 1:
                ex = (data[y, x + 1] - data[y, x - 1]) / 2
            else:
                ex = data[y, 1] - data[y, 0] if x == 0 else data[y, w - 1] - data[y, w - 2]
            if 0 < y < h - 1:
                ey = (data[y + 1, x] - data[y - 1, x]) / 2
            else:
                ey = data[1, x] - data[0, x] if y == 0 else data[h - 1, x] - data[h - 2, x]
            assert abs(g.gx[y, x] - ex) < 1e-12 and abs(g.gy[y, x] - ey) < 1e-12
            assert abs(g.mag_sq[y, x] - (ex * ex + ey * ey)) < 1e-12


def test_gradient_degenerate():
    with pytest.raises(ValueError):
        gradient(GrayImage(np.zeros((1, 5))))


def test_gradient_field_consistency():
    gx, gy = np.random.default_rng(1).normal(size=(2, 4, 4))
    f = GradientField(gx, gy)
    assert np.array_equal(f.mag_sq, gx**2 + gy**2)


# -- scenes -------------------------------------------------------------------


def test_step_edge_definition():
    img, truth = make_scene("step-edge", 32, column=12)
    assert np.all(img.data[:, 11] == 0) and np.all(img.data[:, 12] == 100)
    assert truth.kind == "line" and truth.points[0][0] == 11.5


def test_disk_definition():
    img, truth = make_scene("disk", 64, center=(30.0, 33.0), radius=12)
    ys, xs = np.mgrid[0:64, 0:64]
    d = np.hypot(xs - 30, ys - 33)
    assert np.all(img.data[d < 12] == 100) and np.all(img.data[d >= 12] == 0)
    assert truth.distance([[42.0, 33.0]])[0] == pytest.approx(0)


def test_two_region_determinism():
    a, _ = make_scene("two-region-gaussian", 48, noise=10, seed=9)
    b, _ = make_scene("two-region-gaussian", 48, noise=10, seed=9)
    c, _ = make_scene("two-region-gaussian", 48, noise=10, seed=10)
    assert a.data.tobytes() == b.data.tobytes()
    assert a.data.tobytes() != c.data.tobytes()


def test_polyline_edge_scene():
    img, truth = make_scene("polyline-edge", 64, vertices=((0, 20), (63, 40)))
    assert img.data[10, 0] == 0 and img.data[30, 0] == 100
    assert truth.distance([[0.0, 25.0]])[0] == pytest.approx(5 * 63 / np.hypot(63, 20))


@pytest.mark.parametrize(
    "kind, params",
    [
        ("disk", {"radius": 40}),
        ("step-edge", {"column": 70}),
        ("polyline-edge", {"vertices": ((0, 5), (80, 70))}),
        ("nonsense", {}),
    ],
)
def test_scene_bounds_errors(kind, params):
    with pytest.raises(ValueError):
        make_scene(kind, 64, **params)


def test_scene_too_small():
    with pytest.raises(ValueError):
        make_scene("disk", 8)
