"""Seeded generator of distorted image sequences with full ground truth.

Each sample is one original image plus N views, every view distorted by a
global ambient dimming, feathered polygonal hard shadows, Gaussian
spotlights, and textured occluder shapes. All randomness flows through the
Philox counter-based generator (Salmon et al., 4x64 variant as shipped in
numpy), so a sample is a pure function of its seed and config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import decomp
from .imgcore import BinaryMask, Image, ScalarMask, blur_array

# Occluder texture: flat color plus low-amplitude seeded value noise.
NOISE_AMPLITUDE = 0.05
NOISE_CELL_PX = 12.0


def rng_from_seed(seed: int) -> np.random.Generator:
    """Philox-keyed generator; the one PRNG used everywhere in the package."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.Philox(key=seed))


@dataclass(frozen=True)
class HardShadow:
    polygon: tuple[tuple[float, float], ...]  # 3-6 vertices, normalized [0,1]^2
    intensity: float                          # multiplies interior by (1 - intensity)
    feather_sigma: float                      # edge softening, pixels; 0 = crisp


@dataclass(frozen=True)
class Spotlight:
    center: tuple[float, float]  # normalized coords
    radius_sigma: float          # Gaussian radius, pixels
    intensity: float             # additive peak value


@dataclass(frozen=True)
class Occluder:
    shape: str                          # "ellipse" | "polygon"
    region: tuple                       # ellipse: (cx, cy, rx, ry, angle); polygon: vertices
    color: tuple[float, float, float]
    alpha: float                        # (0, 1]; < 1 premixes with the shaded view
    texture_seed: int


@dataclass(frozen=True)
class AugmentationParams:
    """Everything needed to render one view's distortions deterministically."""

    ambient_factor: float
    hard_shadows: tuple[HardShadow, ...]
    spotlights: tuple[Spotlight, ...]
    occluders: tuple[Occluder, ...]
    max_occlusion_coverage: float = 0.4  # occluders pushing the union past this are skipped

    def __post_init__(self):
        if not 0.3 <= self.ambient_factor <= 1.0:
            raise ValueError(f"ambient_factor must lie in [0.3, 1.0], got {self.ambient_factor}")
        for sh in self.hard_shadows:
            if not 0.2 <= sh.intensity <= 0.8:
                raise ValueError(f"shadow intensity must lie in [0.2, 0.8], got {sh.intensity}")
            if not 3 <= len(sh.polygon) <= 6:
                raise ValueError("shadow polygons need 3-6 vertices")
        for sp in self.spotlights:
            if not 0.2 <= sp.intensity <= 1.0:
                raise ValueError(f"spotlight intensity must lie in [0.2, 1.0], got {sp.intensity}")
        for oc in self.occluders:
            if not 0.0 < oc.alpha <= 1.0:
                raise ValueError(f"occluder alpha must lie in (0, 1], got {oc.alpha}")
            if oc.shape not in ("ellipse", "polygon"):
                raise ValueError(f"unknown occluder shape {oc.shape!r}")


@dataclass(frozen=True)
class GeneratorConfig:
    """Sampling ranges for the distortion families.

    Defaults are tuned for 128x128 desk-scale sequences: moderate dimming,
    a few soft shadows and spotlights, and vivid occluders that stay clear
    of the darkest lumas (near-black occluders are indistinguishable from
    shadows by construction of the model).
    """

    height: int = 128
    width: int = 128
    n_views: int = 10
    ambient_range: tuple[float, float] = (0.82, 1.0)
    shadow_count_range: tuple[int, int] = (0, 2)
    shadow_intensity_range: tuple[float, float] = (0.2, 0.4)
    shadow_feather_range: tuple[float, float] = (2.0, 6.0)
    shadow_radius_range: tuple[float, float] = (0.12, 0.24)
    spotlight_count_range: tuple[int, int] = (0, 2)
    spotlight_sigma_range: tuple[float, float] = (10.0, 26.0)
    spotlight_intensity_range: tuple[float, float] = (0.2, 0.5)
    occluder_count_range: tuple[int, int] = (0, 2)
    occluder_radius_range: tuple[float, float] = (0.12, 0.2)
    occluder_alpha_range: tuple[float, float] = (0.75, 1.0)
    max_occlusion_coverage: float = 0.4

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.n_views < 1:
            raise ValueError("frame size and view count must be positive")
        for name, (lo, hi), bounds in (
            ("ambient_range", self.ambient_range, (0.3, 1.0)),
            ("shadow_intensity_range", self.shadow_intensity_range, (0.2, 0.8)),
            ("spotlight_intensity_range", self.spotlight_intensity_range, (0.2, 1.0)),
            ("occluder_alpha_range", self.occluder_alpha_range, (1e-9, 1.0)),
        ):
            if not bounds[0] <= lo <= hi <= bounds[1]:
                raise ValueError(f"{name} must satisfy {bounds[0]} <= lo <= hi <= {bounds[1]}")
        for name, (lo, hi) in (
            ("shadow_count_range", self.shadow_count_range),
            ("spotlight_count_range", self.spotlight_count_range),
            ("occluder_count_range", self.occluder_count_range),
        ):
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi")
        for name, (lo, hi) in (
            ("shadow_feather_range", self.shadow_feather_range),
            ("shadow_radius_range", self.shadow_radius_range),
            ("spotlight_sigma_range", self.spotlight_sigma_range),
            ("occluder_radius_range", self.occluder_radius_range),
        ):
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi")
        if not 0.0 < self.max_occlusion_coverage <= 1.0:
            raise ValueError("max_occlusion_coverage must lie in (0, 1]")


@dataclass(frozen=True)
class SceneSample:
    """One original image, its distorted views, and their true components."""

    origin: Image
    views: tuple[Image, ...]
    gt_shadow: tuple[ScalarMask, ...]
    gt_light: tuple[ScalarMask, ...]
    gt_occ_mask: tuple[BinaryMask, ...]
    gt_occ_content: tuple[Image, ...]
    params: tuple[AugmentationParams, ...]
    seed: int

    def __post_init__(self):
        n = len(self.views)
        if n < 1:
            raise ValueError("a sample needs at least one view")
        same = (self.gt_shadow, self.gt_light, self.gt_occ_mask, self.gt_occ_content, self.params)
        if any(len(part) != n for part in same):
            raise ValueError("per-view fields must all have the same length")
        hw = self.views[0].data.shape[:2]
        rasters = [self.origin, *self.views, *self.gt_shadow, *self.gt_light, *self.gt_occ_mask, *self.gt_occ_content]
        if any(r.data.shape[:2] != hw for r in rasters):
            raise ValueError("all rasters in a sample must share height and width")

    @property
    def n_views(self) -> int:
        return len(self.views)

    def recompose_view(self, i: int) -> np.ndarray:
        """Rebuild view i from its stored ground-truth components."""
        raw = decomp.compose(
            self.origin.data,
            self.gt_shadow[i].data,
            self.gt_light[i].data,
            self.gt_occ_mask[i].data,
            self.gt_occ_content[i].data,
        )
        return np.clip(raw, 0.0, 1.0)


def _pixel_centers(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized coordinates of pixel centers: (X, Y) each (H, W)."""
    ys = (np.arange(h) + 0.5) / h
    xs = (np.arange(w) + 0.5) / w
    return np.meshgrid(xs, ys)


def rasterize_polygon(vertices, h: int, w: int) -> np.ndarray:
    """Even-odd fill of a polygon in normalized coords; float 0/1 of shape (H, W)."""
    v = np.asarray(vertices, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
        raise ValueError(f"polygon needs at least 3 (x, y) vertices, got shape {v.shape}")
    if len(np.unique(v, axis=0)) < 3:
        raise ValueError("degenerate polygon: fewer than 3 distinct vertices")
    X, Y = _pixel_centers(h, w)
    inside = np.zeros((h, w), dtype=bool)
    n = len(v)
    for i in range(n):
        x0, y0 = v[i]
        x1, y1 = v[(i + 1) % n]
        if y0 == y1:
            continue
        crosses = (y0 > Y) != (y1 > Y)
        x_at = x0 + (Y - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (X < x_at)
    return inside.astype(np.float64)


def rasterize_ellipse(cx: float, cy: float, rx: float, ry: float, angle: float, h: int, w: int) -> np.ndarray:
    """Filled rotated ellipse; center/radii in normalized coords, float 0/1 (H, W)."""
    X, Y = _pixel_centers(h, w)
    dx = (X - cx) * w
    dy = (Y - cy) * h
    ca, sa = math.cos(angle), math.sin(angle)
    u = dx * ca + dy * sa
    t = -dx * sa + dy * ca
    inside = (u / (rx * w)) ** 2 + (t / (ry * h)) ** 2 <= 1.0
    return inside.astype(np.float64)


def value_noise(h: int, w: int, cell: float, rng: np.random.Generator) -> np.ndarray:
    """Smooth value noise in [0, 1]: random lattice, smoothstep-faded bilinear interp."""
    cell = max(float(cell), 1.0)
    gh = int(np.ceil(h / cell)) + 2
    gw = int(np.ceil(w / cell)) + 2
    grid = rng.random((gh, gw))
    y = np.arange(h) / cell
    x = np.arange(w) / cell
    yi = np.floor(y).astype(int)
    xi = np.floor(x).astype(int)
    yf = y - yi
    xf = x - xi
    yf = yf * yf * (3.0 - 2.0 * yf)
    xf = xf * xf * (3.0 - 2.0 * xf)
    yi_m, xi_m = np.meshgrid(yi, xi, indexing="ij")
    fy, fx = np.meshgrid(yf, xf, indexing="ij")
    v00 = grid[yi_m, xi_m]
    v01 = grid[yi_m, xi_m + 1]
    v10 = grid[yi_m + 1, xi_m]
    v11 = grid[yi_m + 1, xi_m + 1]
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return top + fy * (bot - top)


def _hsv_to_rgb(hue: float, sat: float, val: float) -> tuple[float, float, float]:
    i = int(hue * 6.0) % 6
    f = hue * 6.0 - int(hue * 6.0)
    p = val * (1.0 - sat)
    q = val * (1.0 - sat * f)
    t = val * (1.0 - sat * (1.0 - f))
    return ((val, t, p), (q, val, p), (p, val, t), (p, q, val), (t, p, val), (val, p, q))[i]


def _chroma_salience(color) -> float:
    """Luma-weighted deviation from the gray axis.

    A single-channel multiplicative/additive shading field can fully explain
    any gray value, so this is roughly the residual an occluder of this color
    leaves behind after the shading model has absorbed what it can.
    """
    w = np.asarray((0.2126, 0.7152, 0.0722))
    c = np.asarray(color)
    return float(np.sum(w * np.abs(c - np.sum(w * c))))


def _sample_occluder_color(rng: np.random.Generator) -> tuple[float, float, float]:
    """Vivid color with enough chroma that shading cannot silently explain it."""
    color = (1.0, 0.0, 0.0)
    for _ in range(64):
        color = _hsv_to_rgb(float(rng.uniform()), float(rng.uniform(0.6, 1.0)), float(rng.uniform(0.5, 0.95)))
        if _chroma_salience(color) >= 0.22:
            return color
    return color


def _sample_polygon(rng: np.random.Generator, n_vertices: int, radius_range) -> tuple[tuple[float, float], ...]:
    """Star-shaped polygon around a random center, vertices clipped into [0,1]^2."""
    for _ in range(32):
        cx, cy = rng.uniform(0.25, 0.75, size=2)
        angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, size=n_vertices))
        radii = rng.uniform(radius_range[0], radius_range[1], size=n_vertices)
        xs = np.clip(cx + radii * np.cos(angles), 0.0, 1.0)
        ys = np.clip(cy + radii * np.sin(angles), 0.0, 1.0)
        verts = tuple(zip(xs.tolist(), ys.tolist()))
        if len(set(verts)) >= 3 and len(np.unique(angles)) == n_vertices:
            return verts
    raise RuntimeError("could not sample a non-degenerate polygon")


def sample_params(rng_seed: int, config: GeneratorConfig) -> AugmentationParams:
    """Draw one view's augmentation parameters; deterministic in the seed."""
    rng = rng_from_seed(rng_seed)
    ambient = float(rng.uniform(*config.ambient_range))

    shadows = []
    for _ in range(int(rng.integers(config.shadow_count_range[0], config.shadow_count_range[1] + 1))):
        n_vertices = int(rng.integers(3, 7))
        shadows.append(
            HardShadow(
                polygon=_sample_polygon(rng, n_vertices, config.shadow_radius_range),
                intensity=float(rng.uniform(*config.shadow_intensity_range)),
                feather_sigma=float(rng.uniform(*config.shadow_feather_range)),
            )
        )

    spots = []
    for _ in range(int(rng.integers(config.spotlight_count_range[0], config.spotlight_count_range[1] + 1))):
        spots.append(
            Spotlight(
                center=tuple(rng.uniform(0.15, 0.85, size=2).tolist()),
                radius_sigma=float(rng.uniform(*config.spotlight_sigma_range)),
                intensity=float(rng.uniform(*config.spotlight_intensity_range)),
            )
        )

    occluders = []
    for _ in range(int(rng.integers(config.occluder_count_range[0], config.occluder_count_range[1] + 1))):
        color = _sample_occluder_color(rng)
        alpha = float(rng.uniform(*config.occluder_alpha_range))
        texture_seed = int(rng.integers(0, 2**63 - 1))
        if rng.uniform() < 0.7:
            geometry = (
                float(rng.uniform(0.25, 0.75)),
                float(rng.uniform(0.25, 0.75)),
                float(rng.uniform(*config.occluder_radius_range)),
                float(rng.uniform(*config.occluder_radius_range)),
                float(rng.uniform(0.0, math.pi)),
            )
            occluders.append(Occluder("ellipse", geometry, color, alpha, texture_seed))
        else:
            n_vertices = int(rng.integers(3, 7))
            poly = _sample_polygon(rng, n_vertices, config.occluder_radius_range)
            occluders.append(Occluder("polygon", poly, color, alpha, texture_seed))

    return AugmentationParams(
        ambient_factor=ambient,
        hard_shadows=tuple(shadows),
        spotlights=tuple(spots),
        occluders=tuple(occluders),
        max_occlusion_coverage=config.max_occlusion_coverage,
    )


def render_shadow_mask(params: AugmentationParams, h: int, w: int) -> ScalarMask:
    """Multiplicative shadow field: ambient base, feathered polygons darken."""
    if h < 1 or w < 1:
        raise ValueError("frame dimensions must be positive")
    mask = np.full((h, w), params.ambient_factor, dtype=np.float64)
    for sh in params.hard_shadows:
        indicator = rasterize_polygon(sh.polygon, h, w)
        if sh.feather_sigma > 0:
            indicator = blur_array(indicator, sh.feather_sigma)
        mask *= 1.0 - sh.intensity * indicator
    return ScalarMask(mask)


def render_light_mask(params: AugmentationParams, h: int, w: int) -> ScalarMask:
    """Additive light field: sum of isotropic Gaussian blobs, clamped to [0, 1]."""
    if h < 1 or w < 1:
        raise ValueError("frame dimensions must be positive")
    mask = np.zeros((h, w), dtype=np.float64)
    if params.spotlights:
        X, Y = _pixel_centers(h, w)
        for sp in params.spotlights:
            d2 = ((X - sp.center[0]) * w) ** 2 + ((Y - sp.center[1]) * h) ** 2
            mask += sp.intensity * np.exp(-d2 / (2.0 * sp.radius_sigma**2))
    return ScalarMask(np.clip(mask, 0.0, 1.0))


def _occluder_indicator(occ: Occluder, h: int, w: int) -> np.ndarray:
    if occ.shape == "ellipse":
        return rasterize_ellipse(*occ.region, h, w)
    return rasterize_polygon(occ.region, h, w)


def _occluder_texture(occ: Occluder, h: int, w: int) -> np.ndarray:
    rng = rng_from_seed(occ.texture_seed)
    noise = value_noise(h, w, NOISE_CELL_PX, rng)
    tex = np.asarray(occ.color)[None, None, :] + NOISE_AMPLITUDE * (2.0 * noise - 1.0)[:, :, None]
    return np.clip(tex, 0.0, 1.0)


def _paint_occluders(
    params: AugmentationParams, h: int, w: int, base: np.ndarray | None
) -> tuple[np.ndarray, np.ndarray]:
    """Union mask plus content canvas, occluders painted in order.

    With base=None the canvas holds raw textures (alpha ignored); with a base
    image, each occluder alpha-mixes its texture over the current canvas.
    Occluders that would push the union past max_occlusion_coverage are
    skipped, which keeps the coverage bound a hard guarantee.
    """
    union = np.zeros((h, w), dtype=bool)
    canvas = np.zeros((h, w, 3), dtype=np.float64) if base is None else base.copy()
    limit = params.max_occlusion_coverage * h * w
    for occ in params.occluders:
        inside = _occluder_indicator(occ, h, w).astype(bool)
        if not inside.any():
            continue
        if (union | inside).sum() > limit:
            continue
        tex = _occluder_texture(occ, h, w)
        if base is None:
            canvas[inside] = tex[inside]
        else:
            canvas[inside] = occ.alpha * tex[inside] + (1.0 - occ.alpha) * canvas[inside]
        union |= inside
    content = np.where(union[:, :, None], canvas, 0.0)
    return union.astype(np.float64), content


def render_occluder(params: AugmentationParams, h: int, w: int) -> tuple[BinaryMask, Image]:
    """Union mask of all occluders plus their raw (un-premixed) texture content."""
    if h < 1 or w < 1:
        raise ValueError("frame dimensions must be positive")
    mask, content = _paint_occluders(params, h, w, base=None)
    return BinaryMask(mask), Image(content)


def generate_sequence(origin: Image, base_seed: int, config: GeneratorConfig) -> SceneSample:
    """Build a full sample: N views rendered by the forward composition model.

    View i uses parameters sampled with seed base_seed + i. Ground-truth
    components are stored such that recomposing them reproduces each view
    bit-exactly (before any PNG quantization).
    """
    arr = origin.data
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
        origin = Image(arr)
    h, w = arr.shape[:2]

    views, shadows, lights, occ_masks, occ_contents, all_params = [], [], [], [], [], []
    for i in range(config.n_views):
        params = sample_params(base_seed + i, config)
        shadow = render_shadow_mask(params, h, w)
        light = render_light_mask(params, h, w)
        shaded = np.clip(decomp.apply_shading(arr, shadow.data, light.data), 0.0, 1.0)
        mask, content = _paint_occluders(params, h, w, base=shaded)
        view = np.clip(decomp.compose(arr, shadow.data, light.data, mask, content), 0.0, 1.0)

        views.append(Image(view))
        shadows.append(shadow)
        lights.append(light)
        occ_masks.append(BinaryMask(mask))
        occ_contents.append(Image(content))
        all_params.append(params)

    return SceneSample(
        origin=origin,
        views=tuple(views),
        gt_shadow=tuple(shadows),
        gt_light=tuple(lights),
        gt_occ_mask=tuple(occ_masks),
        gt_occ_content=tuple(occ_contents),
        params=tuple(all_params),
        seed=base_seed,
    )


def procedural_origin(seed: int, h: int = 128, w: int = 128) -> Image:
    """Seeded stand-in for a photo: colored noise field, soft shapes, fine texture.

    Bright on average with real fine-scale contrast, so that multiplicative /
    additive shading cannot silently explain flat occluders.
    """
    rng = rng_from_seed(seed)
    c0 = np.asarray(_hsv_to_rgb(float(rng.uniform()), float(rng.uniform(0.2, 0.7)), float(rng.uniform(0.55, 0.9))))
    c1 = np.asarray(_hsv_to_rgb(float(rng.uniform()), float(rng.uniform(0.2, 0.7)), float(rng.uniform(0.55, 0.9))))
    blend = value_noise(h, w, cell=max(h, w) / 3.0, rng=rng)
    img = c0[None, None, :] + blend[:, :, None] * (c1 - c0)[None, None, :]

    for _ in range(int(rng.integers(3, 8))):
        color = np.asarray(_hsv_to_rgb(float(rng.uniform()), float(rng.uniform(0.3, 0.9)), float(rng.uniform(0.45, 0.95))))
        cx, cy = rng.uniform(0.1, 0.9, size=2)
        rx = float(rng.uniform(0.06, 0.25))
        ry = float(rng.uniform(0.06, 0.25))
        angle = float(rng.uniform(0.0, math.pi))
        inside = rasterize_ellipse(float(cx), float(cy), rx, ry, angle, h, w)
        soft = blur_array(inside, sigma=2.0)[:, :, None]
        img = img * (1.0 - 0.85 * soft) + color[None, None, :] * 0.85 * soft

    coarse = value_noise(h, w, cell=9.0, rng=rng)
    fine = value_noise(h, w, cell=3.0, rng=rng)
    img += 0.16 * (2.0 * coarse - 1.0)[:, :, None] + 0.12 * (2.0 * fine - 1.0)[:, :, None]

    # Pull mean luma up into a bright band; dark scenes make dim views unreadable.
    luma = img @ np.asarray((0.2126, 0.7152, 0.0722))
    img += max(0.0, 0.7 - float(luma.mean()))
    return Image(np.clip(img, 0.02, 0.98))
