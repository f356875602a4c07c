"""Raster types, pixel-level primitives, and 8-bit PNG I/O.

Everything else in the package is built on the three raster types defined
here. Pixel values are floats in [0, 1]; the 0-255 scale exists only at the
PNG boundary and inside the metrics module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import PIL.Image

# BT.709 luma weights, used for gray conversion everywhere in the package.
LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)


class ShapeMismatchError(ValueError):
    """Two rasters that must share dimensions do not."""


def _require_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"raster shapes differ: {a.shape} vs {b.shape}")


def _checked_array(data, ndim: int, what: str) -> np.ndarray:
    arr = np.array(data, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"{what} data must have {ndim} dimensions, got shape {arr.shape}")
    if min(arr.shape[:2], default=0) < 1:
        raise ValueError(f"{what} must have positive height and width, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} data contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Image:
    """H x W x C raster, C in {1, 3}, float64 values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = _checked_array(self.data, 3, "image")
        if arr.shape[2] not in (1, 3):
            raise ValueError(f"image must have 1 or 3 channels, got {arr.shape[2]}")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]; run raw buffers through clamp01()")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class ScalarMask:
    """Single-channel H x W raster with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = _checked_array(self.data, 2, "mask")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("mask values must lie in [0, 1]")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Single-channel H x W raster with values drawn from {0, 1}."""

    data: np.ndarray

    def __post_init__(self):
        arr = _checked_array(self.data, 2, "binary mask")
        if not np.all((arr == 0.0) | (arr == 1.0)):
            raise ValueError("binary mask values must be exactly 0 or 1")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def _image_data(img) -> np.ndarray:
    if isinstance(img, Image):
        return img.data
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W, 1|3) image data, got shape {arr.shape}")
    return arr


def clamp01(img) -> Image:
    """Clip every value into [0, 1]; the entry point for raw buffers."""
    return Image(np.clip(_image_data(img), 0.0, 1.0))


def invert(img: Image) -> Image:
    """Per-pixel 1 - x."""
    return Image(1.0 - img.data)


def subtract_clip(a: Image, b: Image) -> Image:
    """Per-pixel max(a - b, 0)."""
    _require_same_shape(a.data, b.data)
    return Image(np.maximum(a.data - b.data, 0.0))


def abs_diff(a: Image, b: Image) -> Image:
    """Per-pixel |a - b|."""
    _require_same_shape(a.data, b.data)
    return Image(np.abs(a.data - b.data))


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian samples at integer offsets, radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _convolve_axis(data: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0)] * data.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(data, pad, mode="reflect")  # reflect-101 border
    out = np.zeros_like(data)
    for i, w in enumerate(kernel):
        window = [slice(None)] * data.ndim
        window[axis] = slice(i, i + data.shape[axis])
        out += w * padded[tuple(window)]
    return out


def blur_array(data: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of an (H, W) or (H, W, C) float array."""
    kernel = gaussian_kernel1d(sigma)
    return _convolve_axis(_convolve_axis(data, kernel, 0), kernel, 1)


def gaussian_blur(img, sigma: float):
    """Gaussian blur; accepts Image or ScalarMask and returns the same kind.

    Kernel radius is ceil(3*sigma), the kernel is normalized to sum 1, and
    borders are handled by reflect-101, so constant rasters are exact fixed
    points.
    """
    if isinstance(img, ScalarMask):
        return ScalarMask(np.clip(blur_array(img.data, sigma), 0.0, 1.0))
    if isinstance(img, Image):
        return Image(np.clip(blur_array(img.data, sigma), 0.0, 1.0))
    raise TypeError(f"expected Image or ScalarMask, got {type(img).__name__}")


def threshold(img, tau: float) -> BinaryMask:
    """1 where value > tau (strictly), else 0. Input must be single-channel."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"threshold must lie strictly inside (0, 1), got {tau}")
    if isinstance(img, (ScalarMask, BinaryMask)):
        data = img.data
    elif isinstance(img, Image):
        if img.channels != 1:
            raise ValueError("threshold needs a single-channel input; convert with to_gray() first")
        data = img.data[:, :, 0]
    else:
        data = np.asarray(img, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"expected single-channel data, got shape {data.shape}")
    return BinaryMask((data > tau).astype(np.float64))


def to_gray(img: Image) -> ScalarMask:
    """BT.709 luma for 3-channel images, identity copy for single-channel."""
    if img.channels == 1:
        return ScalarMask(img.data[:, :, 0])
    if img.channels == 3:
        w = np.asarray(LUMA_WEIGHTS)
        return ScalarMask(np.clip(img.data @ w, 0.0, 1.0))
    raise ValueError(f"unsupported channel count: {img.channels}")


def read_png(path) -> Image:
    """Read an 8-bit RGB or grayscale PNG, mapping byte v to v/255."""
    with PIL.Image.open(path) as im:
        if im.mode == "RGB":
            arr = np.asarray(im, dtype=np.float64) / 255.0
        elif im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)[:, :, None] / 255.0
        else:
            raise ValueError(
                f"unsupported PNG mode {im.mode!r} in {path}: need 8-bit RGB or grayscale, no alpha"
            )
    return Image(arr)


def read_mask_png(path) -> ScalarMask:
    """Read an 8-bit grayscale PNG as a scalar mask."""
    with PIL.Image.open(path) as im:
        if im.mode != "L":
            raise ValueError(f"expected 8-bit grayscale PNG for a mask, got mode {im.mode!r} in {path}")
        return ScalarMask(np.asarray(im, dtype=np.float64) / 255.0)


def read_binary_png(path) -> BinaryMask:
    """Read an 8-bit grayscale PNG whose bytes are all 0 or 255."""
    with PIL.Image.open(path) as im:
        if im.mode != "L":
            raise ValueError(f"expected 8-bit grayscale PNG for a binary mask, got mode {im.mode!r}")
        raw = np.asarray(im)
    if not np.all((raw == 0) | (raw == 255)):
        raise ValueError(f"binary mask PNG {path} contains bytes other than 0 and 255")
    return BinaryMask((raw == 255).astype(np.float64))


def write_png(path, raster) -> None:
    """Write an Image, ScalarMask, or BinaryMask as an 8-bit PNG (round(x*255))."""
    if isinstance(raster, Image):
        data = raster.data[:, :, 0] if raster.channels == 1 else raster.data
    elif isinstance(raster, (ScalarMask, BinaryMask)):
        data = raster.data
    else:
        raise TypeError(f"cannot write {type(raster).__name__} as PNG")
    payload = np.round(data * 255.0).astype(np.uint8)
    mode = "RGB" if payload.ndim == 3 else "L"
    PIL.Image.fromarray(payload, mode=mode).save(path, format="PNG")
