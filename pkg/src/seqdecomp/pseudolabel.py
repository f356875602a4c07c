"""Weakly supervised pseudo-targets built from an original image and its views.

Only the original and the distorted views are consumed; ground-truth
distortion components never enter this module. The targets are approximate
by construction: brightening relative to the original is blamed on light,
darkening on shadow, and whatever the resulting shading model cannot explain
is thresholded into a binary occlusion mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .imgcore import (
    BinaryMask,
    Image,
    ScalarMask,
    abs_diff,
    gaussian_blur,
    subtract_clip,
    threshold,
    to_gray,
)


@dataclass(frozen=True)
class LabelConfig:
    blur_sigma: float = 5.0      # smoothing of the view/origin difference, px
    occ_threshold: float = 0.15  # binarization level for the occlusion residual
    shadow_floor: float = 0.02   # keeps the multiplicative mask away from 0

    def __post_init__(self):
        if self.blur_sigma <= 0:
            raise ValueError("blur_sigma must be positive")
        if not 0.0 < self.occ_threshold < 1.0:
            raise ValueError("occ_threshold must lie strictly inside (0, 1)")
        if not 0.0 < self.shadow_floor < 1.0:
            raise ValueError("shadow_floor must lie strictly inside (0, 1)")


def light_mask(view: Image, origin: Image, cfg: LabelConfig) -> ScalarMask:
    """Additive-light estimate: blurred positive part of view - origin."""
    return to_gray(gaussian_blur(subtract_clip(view, origin), cfg.blur_sigma))


def shadow_mask(view: Image, origin: Image, cfg: LabelConfig) -> ScalarMask:
    """Multiplicative-shadow estimate from the darkening signal.

    The darkening D = blur((origin - view)+) equals the same subtraction on
    inverted inputs, and 1 - D converts it to a multiplicative mask (exact on
    white content, approximate elsewhere). The floor keeps gradients alive.
    """
    darkening = to_gray(gaussian_blur(subtract_clip(origin, view), cfg.blur_sigma))
    return ScalarMask(np.clip(1.0 - darkening.data, cfg.shadow_floor, 1.0))


def shading_image(origin: Image, shadow: ScalarMask, light: ScalarMask) -> Image:
    """Original with shadow and light applied (no occlusions), clamped to [0, 1]."""
    if shadow.data.shape != origin.data.shape[:2] or light.data.shape != origin.data.shape[:2]:
        raise ValueError("mask dimensions must match the image")
    raw = origin.data * shadow.data[:, :, None] + light.data[:, :, None]
    return Image(np.clip(raw, 0.0, 1.0))


def occlusion_mask(view: Image, shading_target: Image, cfg: LabelConfig) -> BinaryMask:
    """Binary occlusion estimate: thresholded |shading_target - view|."""
    return threshold(to_gray(abs_diff(shading_target, view)), cfg.occ_threshold)


@dataclass(frozen=True)
class SequenceLabels:
    """All pseudo-targets for one sequence, index-aligned with its views."""

    shadow: tuple[ScalarMask, ...]
    light: tuple[ScalarMask, ...]
    shading: tuple[Image, ...]
    occ: tuple[BinaryMask, ...]

    @property
    def n_views(self) -> int:
        return len(self.shadow)


def label_sequence(origin: Image, views: Sequence[Image], cfg: LabelConfig | None = None) -> SequenceLabels:
    """Compute shadow, light, shading, and occlusion targets for every view."""
    cfg = cfg or LabelConfig()
    shadows, lights, shadings, occs = [], [], [], []
    for view in views:
        s = shadow_mask(view, origin, cfg)
        l = light_mask(view, origin, cfg)
        target = shading_image(origin, s, l)
        shadows.append(s)
        lights.append(l)
        shadings.append(target)
        occs.append(occlusion_mask(view, target, cfg))
    return SequenceLabels(tuple(shadows), tuple(lights), tuple(shadings), tuple(occs))
