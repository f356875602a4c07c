"""Staged first-order optimization of the decomposition for one sequence.

The curriculum mirrors the pseudo-label pipeline: fit shadow/light against
the pseudo shading targets, fit the occlusion mask against the pseudo binary
masks, then fine-tune everything jointly on the combined objective. Each
stage freezes every parameter outside its declared subset, and each stage
runs its own bias-corrected adaptive-moment (Adam) update.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from . import decomp, pseudolabel
from .decomp import Decomposition, LossWeights, ParamState
from .synthgen import SceneSample

STAGE_NAMES = ("sl", "occ", "joint")
LOGIT_CLIP = 1e-4  # squash targets into [LOGIT_CLIP, 1 - LOGIT_CLIP] before logit

STAGE_FIELDS = {
    "sl": ("shadow", "light"),
    "occ": ("occ_mask",),
    "joint": ("oi", "shadow", "light", "occ_mask", "occ_content"),
}


class SolveDivergedError(RuntimeError):
    """Raised when a stage produces a non-finite loss."""


@dataclass(frozen=True)
class SolverConfig:
    sl_steps: int = 300
    occ_steps: int = 200
    joint_steps: int = 600
    step_size: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss_weights: LossWeights = field(default_factory=LossWeights)
    convergence_tol: float = 1e-6   # relative loss change over the window
    convergence_window: int = 20
    stages: tuple[str, ...] = ("sl", "occ", "joint")
    use_gt_oi: bool = True          # anchor oi to the known original when available

    def __post_init__(self):
        if min(self.sl_steps, self.occ_steps, self.joint_steps) < 1:
            raise ValueError("stage step counts must be positive")
        if self.step_size <= 0 or self.eps <= 0:
            raise ValueError("step_size and eps must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("moment decay rates must lie in (0, 1)")
        if self.convergence_window < 1:
            raise ValueError("convergence_window must be positive")
        unknown = set(self.stages) - set(STAGE_NAMES)
        if unknown or not self.stages:
            raise ValueError(f"stages must be a non-empty subset of {STAGE_NAMES}, got {self.stages}")

    def steps_for(self, stage: str) -> int:
        return {"sl": self.sl_steps, "occ": self.occ_steps, "joint": self.joint_steps}[stage]


@dataclass
class StageTrace:
    name: str
    losses: list[float]
    termination: str  # "steps-exhausted" | "converged"


@dataclass
class SolveTrace:
    stages: list[StageTrace]
    wall_time_s: float

    def to_dict(self) -> dict:
        return {
            "stages": [
                {"name": s.name, "losses": s.losses, "termination": s.termination} for s in self.stages
            ],
            "wall_time_s": self.wall_time_s,
        }


@dataclass
class AdamState:
    m: ParamState
    v: ParamState
    t: int = 0

    @classmethod
    def zeros_like(cls, theta: ParamState) -> "AdamState":
        return cls(m=theta.zeros_like(), v=theta.zeros_like(), t=0)


def _safe_logit(values: np.ndarray) -> np.ndarray:
    return logit(np.clip(values, LOGIT_CLIP, 1.0 - LOGIT_CLIP))


def init_state(
    views: np.ndarray,
    labels: pseudolabel.SequenceLabels,
    gt_oi: np.ndarray | None = None,
) -> ParamState:
    """Initial logits: robust original estimate plus pseudo-target warm starts.

    The original starts at the per-pixel median across views (occlusions and
    local distortions are outliers there), or at the ground-truth original
    when supplied. Mask logits start mildly confident (0.9 / 0.1) so the
    occlusion stage can flip them cheaply.
    """
    if labels.n_views != views.shape[0]:
        raise ValueError(f"labels cover {labels.n_views} views, got {views.shape[0]}")
    oi0 = np.median(views, axis=0) if gt_oi is None else gt_oi
    occ0 = np.stack([m.data for m in labels.occ])
    return ParamState(
        oi=_safe_logit(oi0),
        shadow=_safe_logit(np.stack([m.data for m in labels.shadow])),
        light=_safe_logit(np.stack([m.data for m in labels.light])),
        occ_mask=_safe_logit(0.9 * occ0 + 0.1 * (1.0 - occ0)),
        occ_content=_safe_logit(views),
    )


def adam_step(
    theta: ParamState,
    grad: ParamState,
    state: AdamState,
    cfg: SolverConfig,
    active_fields: tuple[str, ...],
) -> None:
    """One bias-corrected adaptive-moment update, applied in place to the
    active fields only; everything else stays bit-identical."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    for name in active_fields:
        g = getattr(grad, name)
        p = getattr(theta, name)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter shape {p.shape} for {name}")
        m = getattr(state.m, name)
        v = getattr(state.v, name)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**state.t)
        v_hat = v / (1.0 - b2**state.t)
        p -= cfg.step_size * m_hat / (np.sqrt(v_hat) + cfg.eps)


def _run_stage(name, theta, loss_and_grad, steps, cfg) -> StageTrace:
    active = STAGE_FIELDS[name]
    adam = AdamState.zeros_like(theta)
    losses: list[float] = []
    termination = "steps-exhausted"
    for step in range(steps):
        loss, grad = loss_and_grad(theta)
        if not np.isfinite(loss):
            raise SolveDivergedError(f"non-finite loss {loss} at stage {name!r}, step {step}")
        losses.append(loss)
        if step >= cfg.convergence_window:
            prev = losses[-1 - cfg.convergence_window]
            if abs(losses[-1] - prev) <= cfg.convergence_tol * max(abs(prev), 1e-12):
                termination = "converged"
                break
        adam_step(theta, grad, adam, cfg, active)
    return StageTrace(name=name, losses=losses, termination=termination)


def _shading_loss_grad(theta: ParamState, oi_fixed: np.ndarray, targets: np.ndarray):
    """Sum over views of MAE(oi_fixed * s + l, target), grads on shadow/light."""
    s = expit(theta.shadow)
    l = expit(theta.light)
    shaded = decomp.apply_shading(oi_fixed[None], s, l)
    resid = shaded - targets
    loss = float(np.abs(resid).mean(axis=(1, 2, 3)).sum())
    r = np.sign(resid) / targets[0].size
    grad = theta.zeros_like()
    grad.shadow = (r * oi_fixed[None]).sum(axis=3) * s * (1.0 - s)
    grad.light = r.sum(axis=3) * l * (1.0 - l)
    return loss, grad


def bce_class_weights(targets: np.ndarray) -> tuple[float, float]:
    """Inverse-frequency class weights; degenerate single-class targets fall
    back to 1/1 with a warning."""
    n_pos = float(targets.sum())
    n_neg = float(targets.size - n_pos)
    if n_pos == 0.0 or n_neg == 0.0:
        warnings.warn("pseudo occlusion masks contain a single class; using unit BCE weights")
        return 1.0, 1.0
    total = float(targets.size)
    return total / (2.0 * n_pos), total / (2.0 * n_neg)


def _mask_loss_grad(theta: ParamState, targets: np.ndarray, w_pos: float, w_neg: float):
    pred = expit(theta.occ_mask)
    loss = decomp.weighted_bce(pred, targets, w_pos, w_neg)
    grad = theta.zeros_like()
    grad.occ_mask = decomp.weighted_bce_grad(theta.occ_mask, targets, w_pos, w_neg)
    return loss, grad


def fit_shading(theta: ParamState, targets: np.ndarray, cfg: SolverConfig) -> StageTrace:
    """Stage "sl": fit shadow/light logits to the pseudo shading targets."""
    oi_fixed = expit(theta.oi)
    return _run_stage(
        "sl", theta, lambda th: _shading_loss_grad(th, oi_fixed, targets), cfg.sl_steps, cfg
    )


def fit_occlusion(theta: ParamState, targets: np.ndarray, cfg: SolverConfig) -> StageTrace:
    """Stage "occ": fit mask logits to the pseudo binary masks with weighted BCE."""
    w_pos, w_neg = bce_class_weights(targets)
    return _run_stage(
        "occ", theta, lambda th: _mask_loss_grad(th, targets, w_pos, w_neg), cfg.occ_steps, cfg
    )


def fit_joint(theta: ParamState, views: np.ndarray, gt_oi: np.ndarray | None, cfg: SolverConfig) -> StageTrace:
    """Stage "joint": fine-tune every parameter on the combined objective."""
    w = cfg.loss_weights
    return _run_stage(
        "joint", theta, lambda th: decomp.total_loss_and_grad(views, th, gt_oi, w), cfg.joint_steps, cfg
    )


def solve(
    sample: SceneSample,
    cfg: SolverConfig | None = None,
    labels: pseudolabel.SequenceLabels | None = None,
) -> tuple[Decomposition, SolveTrace]:
    """Run the configured stages on one sequence and return the final state.

    Pseudo-labels are computed with default settings when not supplied.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    if labels is None:
        labels = pseudolabel.label_sequence(sample.origin, sample.views)
    views = np.stack([v.data for v in sample.views])
    gt_oi = sample.origin.data if cfg.use_gt_oi else None

    theta = init_state(views, labels, gt_oi=gt_oi)
    shading_targets = np.stack([t.data for t in labels.shading])
    occ_targets = np.stack([t.data for t in labels.occ])

    traces = []
    for stage in cfg.stages:
        if stage == "sl":
            traces.append(fit_shading(theta, shading_targets, cfg))
        elif stage == "occ":
            traces.append(fit_occlusion(theta, occ_targets, cfg))
        else:
            traces.append(fit_joint(theta, views, gt_oi, cfg))
    return Decomposition.from_params(theta), SolveTrace(traces, time.perf_counter() - t0)
