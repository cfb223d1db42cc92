"""Quantitative evaluation: PSNR, endpoint error, and serializable reports.

SSIM lives in the losses module and is re-exported here. PSNR is capped at
100 dB so reports stay finite and serializable; the schema reserves an
optional "lpips" slot for external tools but never fills it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import FlowField, Frame, OcclusionMap
from .losses import ssim
from .synthbench import MaskClass, iou

__all__ = ["psnr", "endpoint_error", "evaluate_prediction", "StepMetrics", "Report", "PSNR_CAP"]

PSNR_CAP = 100.0


def psnr(x: Frame, y: Frame) -> float:
    """10*log10(1/MSE) for unit-range frames, capped at 100 dB."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    d = x.data - y.data
    mse = float((d * d).mean())
    if mse <= 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def endpoint_error(f: FlowField, g: FlowField, mask=None) -> tuple[float, np.ndarray]:
    """Per-pixel Euclidean distance between flow vectors and its (masked) mean."""
    if f.vectors.shape != g.vectors.shape:
        raise ValueError(f"shape mismatch {f.vectors.shape} vs {g.vectors.shape}")
    d = f.vectors - g.vectors
    emap = np.sqrt((d * d).sum(axis=2))
    if mask is None:
        return float(emap.mean()), emap
    m = mask.mask if isinstance(mask, OcclusionMap) else np.asarray(mask, dtype=np.float64)
    count = m.sum()
    mean = float((emap * m).sum() / count) if count > 0 else 0.0
    return mean, emap


@dataclass(frozen=True)
class StepMetrics:
    psnr: float
    ssim: float
    epe: float | None = None
    iou_occluded: float | None = None
    lpips: float | None = None

    def to_dict(self) -> dict:
        d = {"psnr": self.psnr, "ssim": self.ssim}
        for k in ("epe", "iou_occluded", "lpips"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        return d

    @staticmethod
    def from_dict(d: dict) -> "StepMetrics":
        return StepMetrics(
            psnr=d["psnr"],
            ssim=d["ssim"],
            epe=d.get("epe"),
            iou_occluded=d.get("iou_occluded"),
            lpips=d.get("lpips"),
        )


@dataclass(frozen=True)
class Report:
    clip_id: str
    steps: tuple
    config_echo: dict = field(default_factory=dict)

    @property
    def means(self) -> dict:
        out = {}
        for key in ("psnr", "ssim", "epe", "iou_occluded", "lpips"):
            vals = [getattr(s, key) for s in self.steps if getattr(s, key) is not None]
            if vals:
                out[key] = float(np.mean(vals))
        return out

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "steps": [s.to_dict() for s in self.steps],
            "means": self.means,
            "config_echo": self.config_echo,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @staticmethod
    def from_dict(d: dict) -> "Report":
        return Report(
            clip_id=d["clip_id"],
            steps=tuple(StepMetrics.from_dict(s) for s in d["steps"]),
            config_echo=d.get("config_echo", {}),
        )

    @staticmethod
    def from_json(s: str) -> "Report":
        return Report.from_dict(json.loads(s))


def evaluate_prediction(
    pred: Frame,
    gt: Frame,
    flow: FlowField | None = None,
    gt_flow: FlowField | None = None,
    mask: OcclusionMap | None = None,
    gt_mask: OcclusionMap | None = None,
) -> StepMetrics:
    """Per-frame metrics; EPE/IoU appear only when their inputs are supplied."""
    s, _ = ssim(pred, gt)
    epe = endpoint_error(flow, gt_flow)[0] if flow is not None and gt_flow is not None else None
    iou_occ = iou(mask, gt_mask, MaskClass.OCCLUDED) if mask is not None and gt_mask is not None else None
    return StepMetrics(psnr=psnr(pred, gt), ssim=s, epe=epe, iou_occluded=iou_occ)
