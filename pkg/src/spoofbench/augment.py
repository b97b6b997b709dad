"""Per-frame training augmentations.

Each transform fires independently with probability ``apply_prob``:
random area crop followed by a random rescale back toward 16x16, HSV
shift, Gaussian noise, motion blur, sensor (ISO) noise, 90-degree
rotation, horizontal flip.  The output is always clamped to [0, 1].
Labels are session metadata and are never touched here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .data import FRAME_SIDE, Frame
from .errors import ConfigError
from .rng import RngStream
from .tensor import Tensor


@dataclass(frozen=True)
class AugmentConfig:
    apply_prob: float = 0.5
    crop_ratio: tuple[float, float] = (0.33, 1.0)  # area fraction kept
    resize_ratio: tuple[float, float] = (0.7, 1.35)  # side scale after crop
    hue_shift: float = 0.1  # +/- turns
    sat_scale: float = 0.2  # +/- relative
    val_scale: float = 0.2  # +/- relative
    noise_std: tuple[float, float] = (0.005, 0.03)
    blur_lengths: tuple[int, ...] = (3, 5)
    iso_strength: float = 0.03
    iso_channel_gain: float = 0.08
    enable_rotation: bool = True
    enable_flip: bool = True

    def __post_init__(self):
        if not 0 <= self.apply_prob <= 1:
            raise ConfigError(f"apply_prob {self.apply_prob} outside [0, 1]")
        for name, (lo, hi) in (
            ("crop_ratio", self.crop_ratio),
            ("resize_ratio", self.resize_ratio),
            ("noise_std", self.noise_std),
        ):
            if not lo <= hi:
                raise ConfigError(f"{name} range ({lo}, {hi}) is empty")
        if not 0 < self.crop_ratio[0] <= self.crop_ratio[1] <= 1:
            raise ConfigError(f"crop_ratio {self.crop_ratio} must lie in (0, 1]")
        if self.resize_ratio[0] <= 0:
            raise ConfigError("resize_ratio must be positive")
        if self.noise_std[0] < 0:
            raise ConfigError("noise std must be >= 0")
        if not self.blur_lengths or any(n < 1 for n in self.blur_lengths):
            raise ConfigError(f"blur lengths must be >= 1, got {self.blur_lengths}")
        if min(self.hue_shift, self.sat_scale, self.val_scale) < 0:
            raise ConfigError("hsv shift ranges must be >= 0")
        if self.iso_strength < 0 or self.iso_channel_gain < 0:
            raise ConfigError("iso noise parameters must be >= 0")


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB->HSV on the last axis, all components in [0, 1]."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    v = maxc
    c = maxc - minc
    s = np.where(maxc > 0, c / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(c > 0, c, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.select([maxc == r, maxc == g], [bc - gc, 2.0 + rc - bc], default=4.0 + gc - rc)
    h = np.where(c > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rgb_to_hsv`, same layout."""
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(int) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize (c, h, w) with half-pixel-aligned bilinear sampling.

    Same-size resizing reproduces the input exactly.
    """
    c, h, w = img.shape
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    v00 = img[:, y0[:, None], x0[None, :]]
    v01 = img[:, y0[:, None], x1[None, :]]
    v10 = img[:, y1[:, None], x0[None, :]]
    v11 = img[:, y1[:, None], x1[None, :]]
    top = v00 * (1.0 - wx) + v01 * wx
    bot = v10 * (1.0 - wx) + v11 * wx
    return top * (1.0 - wy) + bot * wy


def _fit_to_side(img: np.ndarray, side: int) -> np.ndarray:
    """Center-crop or edge-pad (c, h, w) to (c, side, side)."""
    c, h, w = img.shape
    if h > side:
        off = (h - side) // 2
        img = img[:, off : off + side, :]
    elif h < side:
        lo = (side - h) // 2
        img = np.pad(img, ((0, 0), (lo, side - h - lo), (0, 0)), mode="edge")
    _, _, w = img.shape
    if w > side:
        off = (w - side) // 2
        img = img[:, :, off : off + side]
    elif w < side:
        lo = (side - w) // 2
        img = np.pad(img, ((0, 0), (0, 0), (lo, side - w - lo)), mode="edge")
    return img


def _crop_resize(img: np.ndarray, gen: np.random.Generator, cfg: AugmentConfig) -> np.ndarray:
    side = img.shape[1]
    area = gen.uniform(*cfg.crop_ratio)
    crop_side = int(np.clip(round(side * np.sqrt(area)), 4, side))
    y0 = int(gen.integers(0, side - crop_side + 1))
    x0 = int(gen.integers(0, side - crop_side + 1))
    crop = img[:, y0 : y0 + crop_side, x0 : x0 + crop_side]
    scale = gen.uniform(*cfg.resize_ratio)
    target = int(np.clip(round(crop_side * scale), 2, 2 * side))
    return _fit_to_side(bilinear_resize(crop, target, target), side)


def _hsv_jitter(img: np.ndarray, gen: np.random.Generator, cfg: AugmentConfig) -> np.ndarray:
    hsv = rgb_to_hsv(np.clip(img, 0.0, 1.0).transpose(1, 2, 0))
    hsv[..., 0] = (hsv[..., 0] + gen.uniform(-cfg.hue_shift, cfg.hue_shift)) % 1.0
    hsv[..., 1] = np.clip(hsv[..., 1] * (1.0 + gen.uniform(-cfg.sat_scale, cfg.sat_scale)), 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * (1.0 + gen.uniform(-cfg.val_scale, cfg.val_scale)), 0.0, 1.0)
    return hsv_to_rgb(hsv).transpose(2, 0, 1)


def _motion_blur(img: np.ndarray, gen: np.random.Generator, cfg: AugmentConfig) -> np.ndarray:
    length = int(cfg.blur_lengths[gen.integers(0, len(cfg.blur_lengths))])
    if length == 1:
        return img
    direction = int(gen.integers(0, 4))
    kernel = np.zeros((length, length))
    if direction == 0:
        kernel[length // 2, :] = 1.0
    elif direction == 1:
        kernel[:, length // 2] = 1.0
    elif direction == 2:
        np.fill_diagonal(kernel, 1.0)
    else:
        np.fill_diagonal(np.fliplr(kernel), 1.0)
    kernel /= kernel.sum()
    return ndimage.convolve(img, kernel[None], mode="nearest")


def _iso_noise(img: np.ndarray, gen: np.random.Generator, cfg: AugmentConfig) -> np.ndarray:
    lum = 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]
    shot = gen.normal(0.0, 1.0, lum.shape) * cfg.iso_strength * np.sqrt(np.clip(lum, 0.0, 1.0) + 1e-3)
    gains = 1.0 + gen.uniform(-cfg.iso_channel_gain, cfg.iso_channel_gain, 3)
    return img * gains[:, None, None] + shot[None]


def augment(frame: Frame, cfg: AugmentConfig, rng: RngStream) -> Frame:
    out = augment_array(frame.pixels.array, cfg, rng)
    return Frame(Tensor._wrap(out))


def augment_array(pixels: np.ndarray, cfg: AugmentConfig, rng: RngStream) -> np.ndarray:
    """Array-level augmentation used by the training loop; returns a fresh
    (3, 16, 16) array clamped to [0, 1]."""
    gen = rng.generator()
    img = np.array(pixels, dtype=np.float64)
    gates = gen.random(7) < cfg.apply_prob
    if gates[0]:
        img = _crop_resize(img, gen, cfg)
    if gates[1]:
        img = _hsv_jitter(img, gen, cfg)
    if gates[2]:
        img = img + gen.normal(0.0, gen.uniform(*cfg.noise_std), img.shape)
    if gates[3]:
        img = _motion_blur(img, gen, cfg)
    if gates[4]:
        img = _iso_noise(img, gen, cfg)
    if gates[5] and cfg.enable_rotation:
        img = np.rot90(img, k=int(gen.integers(1, 4)), axes=(1, 2))
    if gates[6] and cfg.enable_flip:
        img = img[:, :, ::-1]
    assert img.shape == (3, FRAME_SIDE, FRAME_SIDE)
    return np.ascontiguousarray(np.clip(img, 0.0, 1.0))
