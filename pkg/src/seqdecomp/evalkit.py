"""Metrics and the evaluation protocol for decomposition results.

MSE is reported on the 0-255 scale so magnitudes line up with common raster
benchmarks; SSIM runs on luma with the canonical 11x11 Gaussian window
(sigma 1.5, K1=0.01, K2=0.03, dynamic range 1.0). The protocol scores the
recovered original, the shading-only reconstruction with true occlusion
regions excluded, the full reconstruction, and the occlusion masks.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import decomp
from .imgcore import BinaryMask, Image, LUMA_WEIGHTS, ScalarMask, ShapeMismatchError, threshold
from .synthgen import SceneSample, rng_from_seed

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_DYNAMIC_RANGE = 1.0
MASK_BINARIZE_LEVEL = 0.5

METRIC_PARAMS = {
    "ssim_window": SSIM_WINDOW,
    "ssim_sigma": SSIM_SIGMA,
    "ssim_k1": SSIM_K1,
    "ssim_k2": SSIM_K2,
    "ssim_dynamic_range": SSIM_DYNAMIC_RANGE,
    "mse_scale": 255,
    "mask_binarize_level": MASK_BINARIZE_LEVEL,
}


def _luma(img) -> np.ndarray:
    if isinstance(img, Image):
        data = img.data
    elif isinstance(img, (ScalarMask, BinaryMask)):
        return img.data
    else:
        data = np.asarray(img, dtype=np.float64)
    if data.ndim == 2:
        return data
    if data.shape[2] == 1:
        return data[:, :, 0]
    return data @ np.asarray(LUMA_WEIGHTS)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    ya, yb = _luma(a), _luma(b)
    if ya.shape != yb.shape:
        raise ShapeMismatchError(f"{ya.shape} vs {yb.shape}")
    return ya, yb


def mse255(a, b) -> float:
    """Mean squared error on the 0-255 scale, over all pixels and channels."""
    da = a.data if isinstance(a, (Image, ScalarMask, BinaryMask)) else np.asarray(a, dtype=np.float64)
    db = b.data if isinstance(b, (Image, ScalarMask, BinaryMask)) else np.asarray(b, dtype=np.float64)
    if da.shape != db.shape:
        raise ShapeMismatchError(f"{da.shape} vs {db.shape}")
    return float(np.mean((255.0 * da - 255.0 * db) ** 2))


def _ssim_kernel() -> np.ndarray:
    x = np.arange(SSIM_WINDOW, dtype=np.float64) - (SSIM_WINDOW - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
    return g / g.sum()


def _window_means(data: np.ndarray, g: np.ndarray) -> np.ndarray:
    rows = sliding_window_view(data, SSIM_WINDOW, axis=0) @ g
    return sliding_window_view(rows, SSIM_WINDOW, axis=1) @ g


def ssim(a, b) -> float:
    """Mean local SSIM on luma; 1.0 exactly for identical inputs."""
    ya, yb = _pair(a, b)
    if min(ya.shape) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM, got {ya.shape}")
    g = _ssim_kernel()
    c1 = (SSIM_K1 * SSIM_DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_DYNAMIC_RANGE) ** 2
    mu_a = _window_means(ya, g)
    mu_b = _window_means(yb, g)
    var_a = _window_means(ya * ya, g) - mu_a * mu_a
    var_b = _window_means(yb * yb, g) - mu_b * mu_b
    cov = _window_means(ya * yb, g) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def masked_metrics(a, b, exclude: BinaryMask) -> tuple[float, float]:
    """(mse255, ssim) with excluded pixels zeroed in BOTH inputs first."""
    da = a.data if isinstance(a, Image) else np.asarray(a, dtype=np.float64)
    db = b.data if isinstance(b, Image) else np.asarray(b, dtype=np.float64)
    if da.shape != db.shape:
        raise ShapeMismatchError(f"{da.shape} vs {db.shape}")
    if exclude.data.shape != da.shape[:2]:
        raise ShapeMismatchError(f"exclusion mask {exclude.data.shape} vs image {da.shape}")
    keep = (1.0 - exclude.data)[:, :, None] if da.ndim == 3 else 1.0 - exclude.data
    return mse255(da * keep, db * keep), ssim(da * keep, db * keep)


def false_positive_rate(pred: BinaryMask, gt: BinaryMask) -> float:
    """Fraction of true-background pixels marked positive; 0 when gt has no background."""
    if pred.data.shape != gt.data.shape:
        raise ShapeMismatchError(f"{pred.data.shape} vs {gt.data.shape}")
    negatives = gt.data == 0.0
    n_neg = int(negatives.sum())
    if n_neg == 0:
        return 0.0
    return float((pred.data[negatives] == 1.0).sum() / n_neg)


def intersection_over_union(pred: BinaryMask, gt: BinaryMask) -> float:
    """IoU of the positive regions; defined as 1.0 when both are empty."""
    if pred.data.shape != gt.data.shape:
        raise ShapeMismatchError(f"{pred.data.shape} vs {gt.data.shape}")
    p = pred.data == 1.0
    g = gt.data == 1.0
    union = int((p | g).sum())
    if union == 0:
        return 1.0
    return float((p & g).sum() / union)


def random_baseline(origins: Sequence[Image], rng_seed: int) -> tuple[float, float]:
    """Pair every original with a uniformly chosen different original.

    Returns the mean (mse255, ssim) over the pairs; the reference floor that
    any real reconstruction must beat.
    """
    n = len(origins)
    if n < 2:
        raise ValueError("random baseline needs at least 2 samples")
    rng = rng_from_seed(rng_seed)
    mses, ssims = [], []
    for i in range(n):
        j = int(rng.integers(0, n - 1))
        if j >= i:
            j += 1
        mses.append(mse255(origins[i], origins[j]))
        ssims.append(ssim(origins[i], origins[j]))
    return float(np.mean(mses)), float(np.mean(ssims))


@dataclass(frozen=True)
class SampleRecord:
    """Per-sample metric row; aggregate report fields are means of these."""

    sample_id: str
    oi_mse: float
    oi_ssim: float
    sl_mse_masked: float
    sl_ssim_masked: float
    full_mse: float
    full_ssim: float
    occ_fpr: float
    occ_iou: float

    def __post_init__(self):
        if min(self.oi_mse, self.sl_mse_masked, self.full_mse) < 0:
            raise ValueError("MSE values must be non-negative")
        for v in (self.oi_ssim, self.sl_ssim_masked, self.full_ssim):
            if not -1.0 <= v <= 1.0:
                raise ValueError("SSIM values must lie in [-1, 1]")
        for v in (self.occ_fpr, self.occ_iou):
            if not 0.0 <= v <= 1.0:
                raise ValueError("FPR and IoU must lie in [0, 1]")


@dataclass(frozen=True)
class EvalReport:
    records: tuple[SampleRecord, ...]
    aggregate: dict
    baseline_mse: float | None
    baseline_ssim: float | None

    def to_dict(self) -> dict:
        return {
            "metric_params": dict(METRIC_PARAMS),
            "samples": [asdict(r) for r in self.records],
            "aggregate": dict(self.aggregate),
            "random_baseline": {"mse": self.baseline_mse, "ssim": self.baseline_ssim},
        }


_RECORD_METRICS = (
    "oi_mse", "oi_ssim", "sl_mse_masked", "sl_ssim_masked", "full_mse", "full_ssim", "occ_fpr", "occ_iou",
)


def evaluate_rasters(
    sample_id: str,
    origin: Image,
    views: Sequence[Image],
    gt_occ_masks: Sequence[BinaryMask],
    oi: Image,
    shadings: Sequence[Image],
    recons: Sequence[Image],
    pred_masks: Sequence[BinaryMask],
) -> SampleRecord:
    """Score one sample from already-rendered rasters (shared by the in-memory
    and on-disk evaluation paths)."""
    oi_mse = mse255(oi, origin)
    oi_ssim = ssim(oi, origin)
    sl_m, sl_s, full_m, full_s, fprs, ious = [], [], [], [], [], []
    for view, gt_mask, shading, recon, pred in zip(views, gt_occ_masks, shadings, recons, pred_masks):
        m, s = masked_metrics(shading, view, gt_mask)
        sl_m.append(m)
        sl_s.append(s)
        full_m.append(mse255(recon, view))
        full_s.append(ssim(recon, view))
        fprs.append(false_positive_rate(pred, gt_mask))
        ious.append(intersection_over_union(pred, gt_mask))
    return SampleRecord(
        sample_id=sample_id,
        oi_mse=oi_mse,
        oi_ssim=oi_ssim,
        sl_mse_masked=float(np.mean(sl_m)),
        sl_ssim_masked=float(np.mean(sl_s)),
        full_mse=float(np.mean(full_m)),
        full_ssim=float(np.mean(full_s)),
        occ_fpr=float(np.mean(fprs)),
        occ_iou=float(np.mean(ious)),
    )


def decomposition_rasters(result: decomp.Decomposition) -> tuple[list[Image], list[Image], list[BinaryMask]]:
    """Shading images, full reconstructions, and binarized masks for a result."""
    oi = result.oi.data
    shadings, recons, masks = [], [], []
    for s, l, m, occ in zip(result.shadow, result.light, result.occ_mask, result.occ_content):
        shadings.append(Image(np.clip(decomp.apply_shading(oi, s.data, l.data), 0.0, 1.0)))
        recons.append(Image(np.clip(decomp.compose(oi, s.data, l.data, m.data, occ.data), 0.0, 1.0)))
        masks.append(threshold(m, MASK_BINARIZE_LEVEL))
    return shadings, recons, masks


def evaluate_sample(sample: SceneSample, result: decomp.Decomposition, sample_id: str = "") -> SampleRecord:
    """Score one decomposition against its sample's ground truth."""
    if result.n_views != sample.n_views:
        raise ValueError(f"result covers {result.n_views} views, sample has {sample.n_views}")
    shadings, recons, masks = decomposition_rasters(result)
    return evaluate_rasters(
        sample_id, sample.origin, sample.views, sample.gt_occ_mask, result.oi, shadings, recons, masks
    )


def build_report(
    records: Sequence[SampleRecord],
    origins: Sequence[Image] | None = None,
    baseline_seed: int = 0,
) -> EvalReport:
    """Aggregate per-sample records; attach the random-pairing baseline when
    at least two origins are supplied."""
    if not records:
        raise ValueError("cannot build a report from zero records")
    aggregate = {name: float(np.mean([getattr(r, name) for r in records])) for name in _RECORD_METRICS}
    base_mse = base_ssim = None
    if origins is not None and len(origins) >= 2:
        base_mse, base_ssim = random_baseline(origins, baseline_seed)
    return EvalReport(tuple(records), aggregate, base_mse, base_ssim)
