"""Composition model, loss terms, and closed-form gradients.

A distorted view is modeled from the shared original image by a
multiplicative shadow field, an additive light field, and per-pixel
replacement with occluder content inside a soft occlusion mask:

    view = (origin * shadow + light) * (1 - m) + occ_content * m

All functions here operate on raw float64 arrays; masks are (..., H, W)
and get broadcast over the channel axis. Optimization runs in an
unconstrained parameterization: every field is the logistic squash of a
free tensor, which keeps values inside (0, 1) with smooth gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy.special import expit

from .imgcore import BinaryMask, Image, ScalarMask, ShapeMismatchError

# Probability clamp for BCE loss values.
BCE_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Weights of the combined objective and the mask-fitting stage."""

    alpha_decomp: float = 1.0
    alpha_oi: float = 1.0
    mask_decay_weight: float = 0.05
    bce_pos_weight: float = 1.0
    bce_neg_weight: float = 1.0

    def __post_init__(self):
        if self.alpha_decomp < 0 or self.alpha_oi < 0 or self.mask_decay_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if self.bce_pos_weight <= 0 or self.bce_neg_weight <= 0:
            raise ValueError("BCE class weights must be strictly positive")


@dataclass
class ParamState:
    """Unconstrained optimization variables; values are expit(theta).

    Shapes: oi (H, W, C); shadow/light/occ_mask (N, H, W);
    occ_content (N, H, W, C).
    """

    oi: np.ndarray
    shadow: np.ndarray
    light: np.ndarray
    occ_mask: np.ndarray
    occ_content: np.ndarray

    def copy(self) -> "ParamState":
        return ParamState(**{f.name: getattr(self, f.name).copy() for f in fields(self)})

    def zeros_like(self) -> "ParamState":
        return ParamState(**{f.name: np.zeros_like(getattr(self, f.name)) for f in fields(self)})


PARAM_FIELDS = tuple(f.name for f in fields(ParamState))


@dataclass(frozen=True)
class Decomposition:
    """Squashed, export-ready solution for one sequence."""

    oi: Image
    shadow: tuple[ScalarMask, ...]
    light: tuple[ScalarMask, ...]
    occ_mask: tuple[ScalarMask, ...]
    occ_content: tuple[Image, ...]

    def __post_init__(self):
        n = len(self.shadow)
        if n < 1 or not (len(self.light) == len(self.occ_mask) == len(self.occ_content) == n):
            raise ValueError("decomposition needs the same number of every per-view field, at least 1")

    @property
    def n_views(self) -> int:
        return len(self.shadow)

    @classmethod
    def from_params(cls, theta: ParamState) -> "Decomposition":
        return cls(
            oi=Image(expit(theta.oi)),
            shadow=tuple(ScalarMask(expit(t)) for t in theta.shadow),
            light=tuple(ScalarMask(expit(t)) for t in theta.light),
            occ_mask=tuple(ScalarMask(expit(t)) for t in theta.occ_mask),
            occ_content=tuple(Image(expit(t)) for t in theta.occ_content),
        )


def _mask_axis(mask: np.ndarray) -> np.ndarray:
    return mask[..., None]


def apply_shading(oi: np.ndarray, shadow: np.ndarray, light: np.ndarray) -> np.ndarray:
    """origin * shadow + light, masks broadcast over channels. Not clamped."""
    if shadow.shape != light.shape:
        raise ShapeMismatchError(f"shadow/light shapes differ: {shadow.shape} vs {light.shape}")
    if oi.shape[-3:-1] != shadow.shape[-2:]:
        raise ShapeMismatchError(f"mask shape {shadow.shape} does not match image shape {oi.shape}")
    return oi * _mask_axis(shadow) + _mask_axis(light)


def compose(
    oi: np.ndarray,
    shadow: np.ndarray,
    light: np.ndarray,
    occ_mask: np.ndarray,
    occ_content: np.ndarray,
) -> np.ndarray:
    """Full forward model: shaded view with occluder content blended in.

    A binary mask yields exact replacement; a soft mask blends convexly so
    the model stays differentiable during optimization. Not clamped.
    """
    shaded = apply_shading(oi, shadow, light)
    m = _mask_axis(occ_mask)
    return shaded * (1.0 - m) + occ_content * m


def origin_loss(pred_oi: np.ndarray, gt_oi: np.ndarray) -> float:
    """Mean absolute error between predicted and reference original image."""
    if pred_oi.shape != gt_oi.shape:
        raise ShapeMismatchError(f"{pred_oi.shape} vs {gt_oi.shape}")
    return float(np.mean(np.abs(pred_oi - gt_oi)))


def composition_loss(
    views: np.ndarray,
    oi: np.ndarray,
    shadow: np.ndarray,
    light: np.ndarray,
    occ_mask: np.ndarray,
    occ_content: np.ndarray,
) -> float:
    """Sum over views of the per-view MAE between view and its composition."""
    recon = compose(oi[None], shadow, light, occ_mask, occ_content)
    if recon.shape != views.shape:
        raise ShapeMismatchError(f"views {views.shape} vs composition {recon.shape}")
    return float(np.abs(views - recon).mean(axis=(1, 2, 3)).sum())


def mask_decay(occ_mask: np.ndarray, weight: float) -> float:
    """weight times the mean of the occlusion masks over all views and pixels."""
    if weight < 0:
        raise ValueError("mask decay weight must be non-negative")
    return float(weight * np.mean(occ_mask))


def weighted_bce(pred: np.ndarray, target: np.ndarray, w_pos: float, w_neg: float) -> float:
    """Class-weighted binary cross entropy, averaged over all elements."""
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"{pred.shape} vs {target.shape}")
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    ll = w_pos * target * np.log(p) + w_neg * (1.0 - target) * np.log(1.0 - p)
    return float(-np.mean(ll))


def weighted_bce_grad(theta_m: np.ndarray, target: np.ndarray, w_pos: float, w_neg: float) -> np.ndarray:
    """Gradient of weighted_bce(expit(theta_m), target) with respect to theta_m.

    Written directly in logit space: d/dtheta = -(w_pos*t*(1-p) - w_neg*(1-t)*p),
    which avoids the p -> 0/1 division blow-up.
    """
    p = expit(theta_m)
    return -(w_pos * target * (1.0 - p) - w_neg * (1.0 - target) * p) / target.size


def total_loss(
    views: np.ndarray,
    theta: ParamState,
    gt_oi: np.ndarray | None,
    weights: LossWeights,
) -> float:
    """Combined objective: weighted composition MAE + origin MAE + mask decay.

    When gt_oi is None the origin term is dropped (the no-reference ablation).
    """
    oi = expit(theta.oi)
    loss = weights.alpha_decomp * composition_loss(
        views, oi, expit(theta.shadow), expit(theta.light), expit(theta.occ_mask), expit(theta.occ_content)
    )
    if gt_oi is not None:
        loss += weights.alpha_oi * origin_loss(oi, gt_oi)
    loss += mask_decay(expit(theta.occ_mask), weights.mask_decay_weight)
    return loss


def total_loss_and_grad(
    views: np.ndarray,
    theta: ParamState,
    gt_oi: np.ndarray | None,
    weights: LossWeights,
) -> tuple[float, ParamState]:
    """total_loss plus its closed-form gradient, sharing one forward pass.

    The MAE subgradient at exactly zero residual is taken as 0, so a perfect
    reconstruction is a stationary point of the data terms.
    """
    oi = expit(theta.oi)
    s = expit(theta.shadow)
    l = expit(theta.light)
    m = expit(theta.occ_mask)
    occ = expit(theta.occ_content)

    per_view_px = views[0].size
    shaded = apply_shading(oi[None], s, l)
    recon = shaded * _mask_axis(1.0 - m) + occ * _mask_axis(m)
    resid = recon - views
    loss = weights.alpha_decomp * float(np.abs(resid).mean(axis=(1, 2, 3)).sum())
    if gt_oi is not None:
        loss += weights.alpha_oi * float(np.mean(np.abs(oi - gt_oi)))
    loss += weights.mask_decay_weight * float(np.mean(m))

    # dL/d(recon): sign of the residual, scaled by the per-view mean + sum.
    r = np.sign(resid) * (weights.alpha_decomp / per_view_px)
    g_shaded = r * _mask_axis(1.0 - m)
    g_oi = (g_shaded * _mask_axis(s)).sum(axis=0)
    if gt_oi is not None:
        g_oi = g_oi + np.sign(oi - gt_oi) * (weights.alpha_oi / oi.size)
    g_s = (g_shaded * oi[None]).sum(axis=3)
    g_l = g_shaded.sum(axis=3)
    g_m = (r * (occ - shaded)).sum(axis=3) + weights.mask_decay_weight / m.size
    g_occ = r * _mask_axis(m)

    grad = ParamState(
        oi=g_oi * oi * (1.0 - oi),
        shadow=g_s * s * (1.0 - s),
        light=g_l * l * (1.0 - l),
        occ_mask=g_m * m * (1.0 - m),
        occ_content=g_occ * occ * (1.0 - occ),
    )
    return loss, grad


def total_loss_grad(
    views: np.ndarray,
    theta: ParamState,
    gt_oi: np.ndarray | None,
    weights: LossWeights,
) -> ParamState:
    """Closed-form gradient of total_loss with respect to every theta tensor."""
    return total_loss_and_grad(views, theta, gt_oi, weights)[1]
