"""Rate coding of grayscale images into spike rasters."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EncoderConfig:
    f_max: float = 1000.0  # Hz
    T_image: float = 100.0  # ms
    dt: float = 1.0  # ms
    image_dims: tuple[int, int] = (15, 15)

    def __post_init__(self):
        p = self.spike_probability
        if p > 1.0 + 1e-12:
            raise ValueError(f"f_max * dt gives spike probability {p} > 1")
        steps = self.T_image / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("T_image must be a multiple of dt")
        if p >= 1.0:
            warnings.warn("encoder is saturated: white pixels spike on every step",
                          stacklevel=3)

    @property
    def spike_probability(self) -> float:
        return self.f_max * self.dt / 1000.0

    @property
    def n_steps(self) -> int:
        return int(round(self.T_image / self.dt))

    @property
    def n_inputs(self) -> int:
        return self.image_dims[0] * self.image_dims[1]


def poisson_encode(image, cfg: EncoderConfig, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli-per-step spike raster of shape ``(n_inputs, n_steps)``.

    Neuron ``i`` fires on each step with probability ``pixel_i * f_max * dt``.
    """
    x = np.asarray(image, dtype=float).ravel()
    if x.size != cfg.n_inputs:
        raise ValueError(f"image has {x.size} pixels, encoder expects {cfg.n_inputs}")
    if np.any(x < 0) or np.any(x > 1) or not np.all(np.isfinite(x)):
        raise ValueError("pixel values must lie in [0, 1]")
    p = x * cfg.spike_probability
    return (rng.random((x.size, cfg.n_steps)) < p[:, None]).astype(np.uint8)


def resize_image(image, target=(15, 15)) -> np.ndarray:
    """Bilinear resize with half-pixel centres, clipped to [0, 1]."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("expected a non-empty 2-D image")
    H, W = img.shape
    h, w = target
    if (H, W) == (h, w):
        return np.clip(img, 0.0, 1.0)

    def coords(n_out, n_in):
        c = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        c = np.clip(c, 0, n_in - 1)
        lo = np.floor(c).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, c - lo

    r0, r1, fr = coords(h, H)
    c0, c1, fc = coords(w, W)
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bot = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    out = top * (1 - fr)[:, None] + bot * fr[:, None]
    return np.clip(out, 0.0, 1.0)


def resize_batch(images, target=(15, 15)) -> np.ndarray:
    return np.stack([resize_image(im, target) for im in images])


# -- raster export ---------------------------------------------------------------

def save_raster_bits(raster, path):
    """Packed bitset: uint32 LE (n_neurons, n_steps) header then row-major bits."""
    raster = np.asarray(raster, dtype=np.uint8)
    n, t = raster.shape
    with open(path, "wb") as f:
        f.write(np.array([n, t], dtype="<u4").tobytes())
        f.write(np.packbits(raster, axis=None).tobytes())


def load_raster_bits(path) -> np.ndarray:
    with open(path, "rb") as f:
        n, t = np.frombuffer(f.read(8), dtype="<u4")
        bits = np.frombuffer(f.read(), dtype=np.uint8)
    return np.unpackbits(bits, count=int(n) * int(t)).reshape(int(n), int(t))


def save_raster_text(raster, path, dt: float = 1.0):
    """One line per neuron: ``index: t1 t2 ...`` (spike times in ms)."""
    raster = np.asarray(raster)
    with open(path, "w") as f:
        for i, row in enumerate(raster):
            times = np.flatnonzero(row) * dt
            f.write(f"{i}: " + " ".join(f"{x:g}" for x in times) + "\n")
