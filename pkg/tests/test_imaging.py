import math

import numpy as np
import pytest

from drive_curate.errors import DegenerateBox, SingularHomography
from drive_curate.geometry import CameraModel, apply_homography
from drive_curate.imaging import (
    CROP_SIZE, ImageBuffer, adaptive_homography, crop_adaptive, crop_fixed_fov,
    fixed_fov_crop_camera, fixed_fov_homography, hflip, hflip_intrinsics, read_png_mask,
    read_png_rgb, warp_image, write_png_mask, write_png_rgb,
)

K = CameraModel(500.0, 500.0, 320.0, 240.0, 640, 480)


def test_buffer_validation_and_immutability():
    with pytest.raises(ValueError):
        ImageBuffer(np.full((4, 4, 3), 1.5))
    img = ImageBuffer(np.zeros((4, 5, 3)))
    assert (img.width, img.height, img.channels) == (5, 4, 3)
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1.0
    assert ImageBuffer(np.zeros((3, 3), np.uint8)).is_mask


def test_identity_warp_is_exact(rng):
    img = ImageBuffer(rng.random((20, 30, 3)))
    assert warp_image(img, np.eye(3), (30, 20)) == img


def test_integer_shift_matches_slicing(rng):
    img = ImageBuffer(rng.random((20, 30, 3)))
    h = np.array([[1.0, 0, -3], [0, 1, -2], [0, 0, 1]])  # dst = src - (3, 2)
    out = warp_image(img, h, (30, 20)).data
    np.testing.assert_allclose(out[:18, :27], img.data[2:, 3:], atol=1e-15)
    assert np.all(out[18:, :] == 1.0) and np.all(out[:, 27:] == 1.0)


def test_half_pixel_shift_is_bilinear_average(rng):
    a = rng.random((8, 8, 3))
    h = np.array([[1.0, 0, -0.5], [0, 1, 0], [0, 0, 1]])
    out = warp_image(ImageBuffer(a), h, (7, 8)).data
    np.testing.assert_allclose(out, 0.5 * (a[:, :7] + a[:, 1:]), atol=1e-15)


def test_mask_warp_nearest_and_fill():
    m = np.arange(16, dtype=np.uint8).reshape(4, 4)
    h = np.array([[2.0, 0, 0.5], [0, 2.0, 0.5], [0, 0, 1]])
    out = warp_image(ImageBuffer(m), h, (10, 10), fill=0).data[:, :, 0]
    assert set(np.unique(out)) <= set(range(16))
    assert out[1, 1] == m[0, 0] and out[5, 5] == m[2, 2]
    assert np.all(out[9, :] == 0)


def test_singular_homography():
    img = ImageBuffer(np.zeros((4, 4, 3)))
    with pytest.raises(SingularHomography):
        warp_image(img, np.zeros((3, 3)), (4, 4))
    with pytest.raises(SingularHomography):
        warp_image(img, np.diag([1.0, 1.0, np.nan]), (4, 4))


def test_fixed_fov_camera():
    k = fixed_fov_crop_camera(49.1)
    assert k.fx == pytest.approx(128.0 / math.tan(math.radians(49.1) / 2))
    assert (k.cx, k.cy) == (128.0, 128.0)
    h, kc = fixed_fov_homography(K, 49.1)
    np.testing.assert_allclose(apply_homography(h, [[K.cx, K.cy]]), [[128.0, 128.0]], atol=1e-12)
    with pytest.raises(ValueError):
        fixed_fov_homography(K, 150.0)


def test_fixed_fov_scale_independent_of_image():
    kc = fixed_fov_crop_camera(30.0)
    big = CameraModel(2000.0, 2000.0, 960.0, 540.0, 1920, 1080)
    # a ray at angle phi lands at f_crop * tan(phi) from the centre for any source camera
    for k in (K, big):
        h, _ = fixed_fov_homography(k, 30.0)
        uv = apply_homography(h, [[k.cx + k.fx * 0.1, k.cy]])
        assert uv[0, 0] - 128.0 == pytest.approx(kc.fx * 0.1)


def test_adaptive_homography_maps_bbox():
    h, kc, s, (x0, y0, side) = adaptive_homography(K, (300, 220, 80, 40), 1.2)
    assert side == pytest.approx(96.0)
    assert s == pytest.approx(CROP_SIZE / 96.0)
    c = apply_homography(h, [[340.0, 240.0]])
    np.testing.assert_allclose(c, [[128.0, 128.0]], atol=1e-12)
    # crop intrinsics are consistent with the map
    p = np.array([[0.3, -0.2, 2.0]])
    np.testing.assert_allclose(apply_homography(h, K.project(p)), kc.project(p), atol=1e-9)
    with pytest.raises(DegenerateBox):
        adaptive_homography(K, (0, 0, 1.0, 1.0), 1.2)


def test_crop_outputs(rng):
    img = ImageBuffer(rng.random((480, 640, 3)))
    a = crop_fixed_fov(img, K, 49.1)
    b = crop_adaptive(img, K, (200, 150, 240, 180), 1.2)
    for r in (a, b):
        assert (r.image.width, r.image.height) == (256, 256)
    assert a.scale_factor == pytest.approx(a.intrinsics.fx / K.fx)


def test_hflip_involution(rng):
    img = ImageBuffer(rng.random((5, 7, 3)))
    assert hflip(hflip(img)) == img
    k = CameraModel(100, 100, 10.25, 20, 256, 256)
    assert hflip_intrinsics(hflip_intrinsics(k)) == k
    assert hflip_intrinsics(k).cx == 255 - 10.25


def test_png_round_trip(tmp_path, rng):
    img = ImageBuffer(rng.integers(0, 256, (9, 11, 3)) / 255.0)
    write_png_rgb(img, tmp_path / "a.png")
    assert read_png_rgb(tmp_path / "a.png") == img
    for dtype, hi in ((np.uint8, 255), (np.int32, 3000)):
        m = rng.integers(0, hi, (6, 5)).astype(dtype)
        write_png_mask(m, tmp_path / "m.png")
        np.testing.assert_array_equal(read_png_mask(tmp_path / "m.png"), m)


def test_quantized_is_png_exact(rng, tmp_path):
    img = ImageBuffer(rng.random((6, 6, 3))).quantized()
    write_png_rgb(img, tmp_path / "q.png")
    assert read_png_rgb(tmp_path / "q.png") == img
