import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from snn_sleep.encoding import (EncoderConfig, load_raster_bits, poisson_encode, resize_batch,
                                resize_image, save_raster_bits, save_raster_text)

cv2 = pytest.importorskip("cv2")

HALF = EncoderConfig(f_max=500.0)  # unsaturated: p = 0.5 for a white pixel


def test_silent_pixel(rng):
    r = poisson_encode(np.zeros(225), HALF, rng)
    assert r.shape == (225, 100) and r.sum() == 0


def test_saturated_white_pixel_spikes_every_step(rng):
    with pytest.warns(UserWarning, match="saturated"):
        cfg = EncoderConfig()
    r = poisson_encode(np.ones(225), cfg, rng)
    assert np.all(r == 1)


def test_half_pixel_rate_within_three_sigma(rng):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cfg = EncoderConfig(T_image=100_000.0, image_dims=(1, 1))
    r = poisson_encode(np.array([0.5]), cfg, rng)
    n, p = r.size, 0.5
    assert n == 100_000
    assert abs(r.sum() - n * p) <= 3 * np.sqrt(n * p * (1 - p))
    assert r.sum() / 100.0 == pytest.approx(500.0, abs=3 * np.sqrt(n * p * (1 - p)) / 100)


@given(a=st.floats(0, 1), b=st.floats(0, 1))
def test_brighter_never_fires_less(a, b):
    lo, hi = sorted((a, b))
    cfg = EncoderConfig(f_max=800.0, T_image=4000.0, image_dims=(1, 1))
    rng = np.random.default_rng(0)
    n_lo = int(poisson_encode(np.array([lo]), cfg, rng).sum())
    n_hi = int(poisson_encode(np.array([hi]), cfg, rng).sum())
    n = cfg.n_steps
    p_lo, p_hi = lo * 0.8, hi * 0.8
    # difference of two binomials, one-sided 3 sigma
    sd = np.sqrt(n * (p_lo * (1 - p_lo) + p_hi * (1 - p_hi)))
    assert n_hi - n_lo >= -3 * sd - 1e-9


@given(seed=st.integers(0, 2**32 - 1))
def test_binary_shape_and_determinism(seed):
    img = np.random.default_rng(seed).random(225)
    a = poisson_encode(img, HALF, np.random.default_rng(seed))
    b = poisson_encode(img, HALF, np.random.default_rng(seed))
    assert a.shape == (225, 100) and a.dtype == np.uint8
    assert set(np.unique(a)) <= {0, 1}
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("bad", [np.full(225, 1.1), np.full(225, -0.1), np.ones(224),
                                 np.full(225, np.nan)])
def test_encode_validation(bad, rng):
    with pytest.raises(ValueError):
        poisson_encode(bad, HALF, rng)


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(f_max=2000.0)
    with pytest.raises(ValueError):
        EncoderConfig(T_image=10.5)


# -- resize --------------------------------------------------------------------------

def test_identity_and_constant():
    img = np.random.default_rng(1).random((15, 15))
    np.testing.assert_array_equal(resize_image(img), img)
    np.testing.assert_allclose(resize_image(np.full((28, 28), 0.37)), 0.37, rtol=1e-12)


def test_checkerboard_mean():
    board = (np.indices((28, 28)).sum(0) % 2).astype(float)
    out = resize_image(board)
    assert out.min() >= 0 and out.max() <= 1
    assert abs(out.mean() - board.mean()) <= 0.05


@given(h=st.integers(2, 40), w=st.integers(2, 40), seed=st.integers(0, 1000))
def test_matches_opencv_bilinear(h, w, seed):
    img = np.random.default_rng(seed).random((h, w))
    ref = cv2.resize(img, (15, 15), interpolation=cv2.INTER_LINEAR)
    np.testing.assert_allclose(resize_image(img), np.clip(ref, 0, 1), atol=1e-12)


def test_resize_errors_and_batch():
    with pytest.raises(ValueError):
        resize_image(np.zeros((0, 5)))
    with pytest.raises(ValueError):
        resize_image(np.zeros(5))
    assert resize_batch(np.zeros((3, 28, 28))).shape == (3, 15, 15)


# -- raster export ------------------------------------------------------------------------

def test_bitset_roundtrip(tmp_path, rng):
    r = poisson_encode(rng.random(225), HALF, rng)
    save_raster_bits(r, tmp_path / "r.bin")
    np.testing.assert_array_equal(load_raster_bits(tmp_path / "r.bin"), r)
    assert (tmp_path / "r.bin").stat().st_size == 8 + (225 * 100 + 7) // 8


def test_text_format(tmp_path):
    r = np.zeros((2, 5), np.uint8)
    r[0, [1, 4]] = 1
    save_raster_text(r, tmp_path / "r.txt", dt=1.0)
    assert (tmp_path / "r.txt").read_text().splitlines() == ["0: 1 4", "1: "]
