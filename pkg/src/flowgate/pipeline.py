"""End-to-end orchestration: flows, warp, occlusion gate, inpaint, compose.

A prediction runs the serialized stages: the predictor supplies the next-step
flow pair, the backward field propagates the last frame, the forward field's
splat density yields the occlusion map, the inpainter fills mask-0 pixels of
the propagated frame, and the gate composites the two. Every Prediction
satisfies final == compose(warped, inpainted, mask) exactly.

Multi-frame prediction appends each final frame to the working history and,
in the default REESTIMATE feedback mode, re-runs the predictor on the
augmented history; EXTRAPOLATE keeps rolling the first flow forward instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .core import Clip, EnergyMap, FlowField, Frame, OcclusionMap, _resize_plane
from .flowpred import (
    ExtrapolationMode,
    FlowPredictor,
    FlowSolverConfig,
    GroundTruthOracle,
    VariationalExtrapolator,
    ZeroFlowPredictor,
    extrapolate_flow,
    predict_flows,
)
from .inpaint import compose, pullpush_inpaint
from .losses import LossConfig
from .metrics import evaluate_prediction
from .synthbench import LabeledClip, generate_clip
from .warp import backward_warp, occlusion_pipeline

__all__ = [
    "PredictorKind",
    "MaskSource",
    "InpainterKind",
    "FeedbackMode",
    "PipelineConfig",
    "Prediction",
    "predict_next",
    "predict_multi",
    "run_ablation",
    "aggregate_ablation",
    "ABLATION_VARIANTS",
]


class PredictorKind(Enum):
    VARIATIONAL = "variational"
    ORACLE = "oracle"
    ZERO = "zero"


class MaskSource(Enum):
    COMPUTED = "computed"
    ALL_ONES = "all_ones"
    ORACLE = "oracle"


class InpainterKind(Enum):
    PULLPUSH = "pullpush"
    NONE = "none"


class FeedbackMode(Enum):
    REESTIMATE = "reestimate"
    EXTRAPOLATE = "extrapolate"


@dataclass(frozen=True)
class PipelineConfig:
    predictor: PredictorKind = PredictorKind.VARIATIONAL
    flow: FlowSolverConfig = field(default_factory=FlowSolverConfig)
    losses: LossConfig = field(default_factory=LossConfig)
    inpainter: InpainterKind = InpainterKind.PULLPUSH
    mask_source: MaskSource = MaskSource.COMPUTED
    extrapolation: ExtrapolationMode = ExtrapolationMode.WARP_COMPOSE
    feedback: FeedbackMode = FeedbackMode.REESTIMATE

    def make_predictor(self) -> FlowPredictor:
        if self.predictor is PredictorKind.VARIATIONAL:
            return VariationalExtrapolator(self.flow, self.extrapolation)
        if self.predictor is PredictorKind.ORACLE:
            return GroundTruthOracle()
        return ZeroFlowPredictor()

    def to_dict(self) -> dict:
        from .losses import Normalization

        return {
            "predictor": self.predictor.value,
            "flow": {
                "alpha": self.flow.alpha,
                "lambda_smt": self.flow.lambda_smt,
                "min_side": self.flow.min_side,
                "iterations": self.flow.iterations,
                "step_size": self.flow.step_size,
                "charbonnier_eps": self.flow.charbonnier_eps,
                "max_backtracks": self.flow.max_backtracks,
                "rel_tol": self.flow.rel_tol,
            },
            "losses": {
                "alpha": self.losses.alpha,
                "beta": self.losses.beta,
                "lambda_smt": self.losses.lambda_smt,
                "lambda_prc": self.losses.lambda_prc,
                "lambda_sty": self.losses.lambda_sty,
                "lambda_var": self.losses.lambda_var,
                "lambda_seg": self.losses.lambda_seg,
                "ssim_window": self.losses.ssim_window,
                "ssim_sigma": self.losses.ssim_sigma,
                "normalization": self.losses.normalization.value,
            },
            "inpainter": self.inpainter.value,
            "mask_source": self.mask_source.value,
            "extrapolation": self.extrapolation.value,
            "feedback": self.feedback.value,
        }

    @staticmethod
    def from_dict(d: dict) -> "PipelineConfig":
        from .losses import Normalization

        base = PipelineConfig()
        known = {"predictor", "flow", "losses", "inpainter", "mask_source", "extrapolation", "feedback"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        flow_d = dict(d.get("flow", {}))
        loss_d = dict(d.get("losses", {}))
        if "normalization" in loss_d:
            loss_d["normalization"] = Normalization(loss_d["normalization"])
        return PipelineConfig(
            predictor=PredictorKind(d.get("predictor", base.predictor.value)),
            flow=replace(base.flow, **flow_d),
            losses=replace(base.losses, **loss_d),
            inpainter=InpainterKind(d.get("inpainter", base.inpainter.value)),
            mask_source=MaskSource(d.get("mask_source", base.mask_source.value)),
            extrapolation=ExtrapolationMode(d.get("extrapolation", base.extrapolation.value)),
            feedback=FeedbackMode(d.get("feedback", base.feedback.value)),
        )


@dataclass(frozen=True)
class Prediction:
    """One pipeline output bundle. final is the gated composite."""

    final: Frame
    warped: Frame
    flow_fwd: FlowField
    flow_bwd: FlowField
    energy: EnergyMap
    mask: OcclusionMap
    inpainted: Frame


def _resolve_mask(clip: Clip, cfg: PipelineConfig, computed: OcclusionMap) -> OcclusionMap:
    if cfg.mask_source is MaskSource.COMPUTED:
        return computed
    if cfg.mask_source is MaskSource.ALL_ONES:
        return OcclusionMap.ones(computed.height, computed.width)
    idx = len(clip.frames) - 1
    if clip.gt_occlusion_masks is None or len(clip.gt_occlusion_masks) <= idx:
        raise ValueError("clip lacks a ground-truth occlusion mask for the prediction step")
    return clip.gt_occlusion_masks[idx]


def _predict_from_flows(clip: Clip, cfg: PipelineConfig, fwd: FlowField, bwd: FlowField) -> Prediction:
    warped = backward_warp(clip.frames[-1], bwd)
    energy, computed = occlusion_pipeline(fwd)
    mask = _resolve_mask(clip, cfg, computed)
    if cfg.inpainter is InpainterKind.NONE:
        inpainted = warped
    else:
        inpainted = pullpush_inpaint(warped, mask)
    final = compose(warped, inpainted, mask)
    return Prediction(
        final=final,
        warped=warped,
        flow_fwd=fwd,
        flow_bwd=bwd,
        energy=energy,
        mask=mask,
        inpainted=inpainted,
    )


def predict_next(clip: Clip, cfg: PipelineConfig | None = None) -> Prediction:
    """Predict the frame that follows the clip's last frame."""
    cfg = cfg or PipelineConfig()
    if len(clip.frames) < 2:
        raise ValueError("prediction needs at least 2 history frames")
    fwd, bwd = predict_flows(clip, cfg.make_predictor(), cfg.flow)
    return _predict_from_flows(clip, cfg, fwd, bwd)


def _append_frame(clip: Clip, frame: Frame) -> Clip:
    return Clip(
        frames=clip.frames + (frame,),
        frame_interval=clip.frame_interval,
        gt_forward_flows=clip.gt_forward_flows,
        gt_backward_flows=clip.gt_backward_flows,
        gt_occlusion_masks=clip.gt_occlusion_masks,
        gt_label_maps=clip.gt_label_maps,
    )


def predict_multi(clip: Clip, horizon: int, cfg: PipelineConfig | None = None) -> list[Prediction]:
    """Recursive prediction: each final frame joins the working history."""
    cfg = cfg or PipelineConfig()
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    preds: list[Prediction] = []
    working = clip
    rolling_fwd: FlowField | None = None
    for step in range(horizon):
        if cfg.feedback is FeedbackMode.EXTRAPOLATE and rolling_fwd is not None:
            fwd, bwd = extrapolate_flow(rolling_fwd, cfg.extrapolation)
            pred = _predict_from_flows(working, cfg, fwd, bwd)
        else:
            pred = predict_next(working, cfg)
        rolling_fwd = pred.flow_fwd
        preds.append(pred)
        working = _append_frame(working, pred.final)
    return preds


def _blur_reconstruction(frame: Frame) -> Frame:
    """Autoencoder-bottleneck stand-in: 4x bilinear down then back up."""
    h, w = frame.height, frame.width
    small = _resize_plane(frame.data, max(1, h // 4), max(1, w // 4))
    return Frame.from_array(_resize_plane(small, h, w), clamp=True)


ABLATION_VARIANTS = ("warp_only", "no_occlusion_stub", "computed_mask")


def _variant_outputs(pred: Prediction, variant: str) -> tuple[Frame, OcclusionMap]:
    h, w = pred.warped.height, pred.warped.width
    if variant == "warp_only":
        return pred.warped, OcclusionMap.ones(h, w)
    if variant == "no_occlusion_stub":
        blurred = _blur_reconstruction(pred.warped)
        final = Frame.from_array(0.5 * (pred.warped.data + blurred.data), clamp=True)
        return final, OcclusionMap.ones(h, w)
    if variant == "computed_mask":
        return pred.final, pred.mask
    raise ValueError(f"unknown ablation variant {variant!r}")


def run_ablation(
    scenes,
    cfg: PipelineConfig | None = None,
    variants: tuple = ABLATION_VARIANTS,
    history_len: int = 2,
) -> list[dict]:
    """Score each scene under each occlusion-handling variant.

    scenes may be SceneSpec or LabeledClip instances; rows carry PSNR/SSIM of
    the variant's composite against the true next frame and the
    occluded-class IoU of its mask against ground truth.
    """
    cfg = cfg or PipelineConfig()
    rows = []
    for scene in scenes:
        if isinstance(scene, LabeledClip):
            labeled, seed = scene, -1
        else:
            labeled, seed = generate_clip(scene), scene.seed
        target = labeled.frames[history_len]
        gt_mask = labeled.gt_occlusion_masks[history_len - 1]
        pred = predict_next(labeled.history(history_len), cfg)
        for variant in variants:
            final, mask = _variant_outputs(pred, variant)
            m = evaluate_prediction(final, target, mask=mask, gt_mask=gt_mask)
            rows.append(
                {
                    "scene_seed": seed,
                    "variant": variant,
                    "psnr": m.psnr,
                    "ssim": m.ssim,
                    "iou_occluded": m.iou_occluded,
                    "occluded_fraction": labeled.occluded_fraction,
                }
            )
    return rows


def aggregate_ablation(rows: list[dict]) -> dict:
    """Per-variant means of every numeric column."""
    out: dict = {}
    for row in rows:
        bucket = out.setdefault(row["variant"], {})
        for key in ("psnr", "ssim", "iou_occluded"):
            bucket.setdefault(key, []).append(row[key])
    return {
        variant: {key: float(np.mean(vals)) for key, vals in cols.items()}
        for variant, cols in out.items()
    }
