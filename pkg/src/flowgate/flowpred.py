"""Flow estimation and constant-velocity extrapolation.

The estimator stands in for a learned predictor: it minimizes the flow
objective (Charbonnier photometric term plus edge-weighted smoothness)
directly, coarse-to-fine, by normalized steepest descent with backtracking
halving. Backtracking only ever accepts non-increasing steps, so the
per-level objective trace is monotone by construction.

Extrapolation assumes constant velocity. WARP_COMPOSE resamples the previous
forward flow at each pixel's motion-compensated source (p minus its own
flow); ZERO_ORDER repeats the field unchanged. The matching backward field is
synthesized by splatting the negated forward vectors to the target grid with
nearest-deposit tie-breaking and filling splat holes from the nearest valid
neighbor (row-major scan tie-break).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import (
    Clip,
    FlowDirection,
    FlowField,
    Frame,
    _resize_plane,
    _sample_bilinear_clamped,
    build_pyramid,
    to_grayscale,
)
from .losses import _edge_weights, _smt_grad, _smt_value, _warp_with_jacobian

__all__ = [
    "FlowSolverConfig",
    "ExtrapolationMode",
    "SolverError",
    "SolverTrace",
    "estimate_flow",
    "extrapolate_flow",
    "predict_flows",
    "FlowPredictor",
    "VariationalExtrapolator",
    "GroundTruthOracle",
    "ZeroFlowPredictor",
]


class ExtrapolationMode(Enum):
    ZERO_ORDER = "zero_order"
    WARP_COMPOSE = "warp_compose"


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class FlowSolverConfig:
    """Solver knobs. alpha is the SSIM mix used when the flow objective is
    evaluated as a metric; the descent itself always runs on the Charbonnier
    photometric term (alpha = 0 path)."""

    alpha: float = 0.0
    lambda_smt: float = 0.1
    min_side: int = 16
    iterations: int = 200
    step_size: float = 0.5
    charbonnier_eps: float = 1e-3
    max_backtracks: int = 24
    rel_tol: float = 1e-8

    def __post_init__(self):
        if self.alpha < 0 or self.lambda_smt < 0:
            raise ValueError("weights must be non-negative")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")


@dataclass
class SolverTrace:
    """Objective values per pyramid level (coarsest level first), one entry
    per accepted state starting with the initialization."""

    levels: list = field(default_factory=list)


def _objective_and_grad(a, b, f, wx, wy, cfg):
    warped, ddx, ddy = _warp_with_jacobian(a, f)
    r = warped - b
    eps = cfg.charbonnier_eps
    charb = np.sqrt(r * r + eps * eps)
    obj = float(charb.mean())
    w = r / charb / r.size
    grad = np.empty_like(f)
    grad[:, :, 0] = (w * ddx).sum(axis=2)
    grad[:, :, 1] = (w * ddy).sum(axis=2)
    if cfg.lambda_smt > 0:
        obj += cfg.lambda_smt * _smt_value(f, wx, wy, eps)
        grad += cfg.lambda_smt * _smt_grad(f, wx, wy, eps)
    return obj, grad


def _descend_level(a, b, f, cfg):
    wx, wy = _edge_weights(b)
    obj, grad = _objective_and_grad(a, b, f, wx, wy, cfg)
    if not np.isfinite(obj):
        raise SolverError(f"non-finite objective {obj} at level init ({a.shape[0]}x{a.shape[1]})")
    objs = [obj]
    step = cfg.step_size
    for _ in range(cfg.iterations):
        gmax = float(np.abs(grad).max())
        if gmax <= 1e-15:
            break
        direction = grad / gmax
        s = step
        accepted = None
        for _ in range(cfg.max_backtracks):
            cand = f - s * direction
            cobj, cgrad = _objective_and_grad(a, b, cand, wx, wy, cfg)
            if not np.isfinite(cobj):
                raise SolverError(
                    f"non-finite objective {cobj} during descent (step {s}, level {a.shape[0]}x{a.shape[1]})"
                )
            if cobj <= obj:
                accepted = (cand, cobj, cgrad)
                break
            s *= 0.5
        if accepted is None:
            break
        f, new_obj, grad = accepted
        objs.append(new_obj)
        converged = (obj - new_obj) <= cfg.rel_tol * max(abs(obj), 1e-12)
        obj = new_obj
        if converged:
            break
        step = min(cfg.step_size, 2.0 * s)
    return f, objs


def estimate_flow(
    src: Frame,
    dst: Frame,
    cfg: FlowSolverConfig | None = None,
    trace: SolverTrace | None = None,
) -> FlowField:
    """Estimate the backward flow on dst's grid that warps src onto dst.

    Frames are luma-converted, pyramids built down to cfg.min_side, and each
    level refines the 2x-upsampled coarser estimate starting from zero flow
    at the coarsest level.
    """
    cfg = cfg or FlowSolverConfig()
    if src.shape != dst.shape:
        raise ValueError(f"shape mismatch {src.shape} vs {dst.shape}")
    pyr_a = build_pyramid(to_grayscale(src), cfg.min_side)
    pyr_b = build_pyramid(to_grayscale(dst), cfg.min_side)
    n_levels = len(pyr_a)
    f = np.zeros((pyr_a[n_levels - 1].height, pyr_a[n_levels - 1].width, 2))
    for lev in range(n_levels - 1, -1, -1):
        a = pyr_a[lev].data
        b = pyr_b[lev].data
        if f.shape[:2] != a.shape[:2]:
            f = _resize_plane(f, a.shape[0], a.shape[1]) * 2.0
        f, objs = _descend_level(a, b, f, cfg)
        if trace is not None:
            trace.levels.append(objs)
    return FlowField(f, FlowDirection.BACKWARD)


def _fill_from_nearest_valid(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Fill invalid cells with the value of the Euclidean-nearest valid cell;
    distance ties resolve to the first valid cell in row-major order."""
    out = values.copy()
    vy, vx = np.nonzero(valid)
    hy, hx = np.nonzero(~valid)
    vy32 = vy.astype(np.int32)
    vx32 = vx.astype(np.int32)
    chunk = 512
    for start in range(0, len(hy), chunk):
        cy = hy[start : start + chunk].astype(np.int32)
        cx = hx[start : start + chunk].astype(np.int32)
        d2 = (cy[:, None] - vy32) ** 2 + (cx[:, None] - vx32) ** 2
        k = d2.argmin(axis=1)
        out[cy, cx] = values[vy[k], vx[k]]
    return out


def _synthesize_backward(fwd: np.ndarray) -> np.ndarray:
    """Backward field on the target grid from a forward field on the source
    grid. Each source pixel proposes -flow at the integer cell nearest its
    continuous target (round-half-up); the closest deposit wins a cell, holes
    are filled from the nearest deposited cell. An all-out-of-bounds field
    degenerates to the negated forward vectors.
    """
    h, w = fwd.shape[:2]
    ii, jj = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    ty = ii + fwd[:, :, 1]
    tx = jj + fwd[:, :, 0]
    ry = np.floor(ty + 0.5).astype(np.intp)
    rx = np.floor(tx + 0.5).astype(np.intp)
    inside = (ry >= 0) & (ry < h) & (rx >= 0) & (rx < w)
    if not inside.any():
        return -fwd
    dist2 = (ty - ry) ** 2 + (tx - rx) ** 2
    cell = (ry[inside] * w + rx[inside]).ravel()
    d2 = dist2[inside].ravel()
    src_flat = np.nonzero(inside.ravel())[0]
    order = np.lexsort((src_flat, d2, cell))
    cells_sorted = cell[order]
    first = np.unique(cells_sorted, return_index=True)[1]
    winners = src_flat[order[first]]
    target_cells = cells_sorted[first]
    bwd = np.zeros_like(fwd)
    bwd.reshape(-1, 2)[target_cells] = -fwd.reshape(-1, 2)[winners]
    valid = np.zeros(h * w, dtype=bool)
    valid[target_cells] = True
    valid = valid.reshape(h, w)
    if not valid.all():
        bwd = _fill_from_nearest_valid(bwd, valid)
    return bwd


def extrapolate_flow(
    f_prev_fwd: FlowField,
    mode: ExtrapolationMode = ExtrapolationMode.WARP_COMPOSE,
) -> tuple[FlowField, FlowField]:
    """One constant-velocity step: (forward t-1 -> t, backward t -> t-1)."""
    f_prev_fwd.require(FlowDirection.FORWARD)
    vec = f_prev_fwd.vectors
    if mode is ExtrapolationMode.ZERO_ORDER:
        fwd = vec.copy()
    elif mode is ExtrapolationMode.WARP_COMPOSE:
        h, w = vec.shape[:2]
        ii, jj = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
        fwd = _sample_bilinear_clamped(vec, ii - vec[:, :, 1], jj - vec[:, :, 0])
    else:
        raise ValueError(f"unknown extrapolation mode {mode!r}")
    bwd = _synthesize_backward(fwd)
    return FlowField(fwd, FlowDirection.FORWARD), FlowField(bwd, FlowDirection.BACKWARD)


class FlowPredictor:
    """Contract: given a history clip, produce the next-step flow pair
    (forward on the last frame's grid, backward on the predicted frame's grid).
    """

    def predict(self, clip: Clip) -> tuple[FlowField, FlowField]:
        raise NotImplementedError


class VariationalExtrapolator(FlowPredictor):
    """Default predictor: fit the last inter-frame flow, extrapolate one step."""

    def __init__(self, cfg: FlowSolverConfig | None = None,
                 mode: ExtrapolationMode = ExtrapolationMode.WARP_COMPOSE):
        self.cfg = cfg or FlowSolverConfig()
        self.mode = mode

    def predict(self, clip: Clip) -> tuple[FlowField, FlowField]:
        if len(clip.frames) < 2:
            raise ValueError("clip needs at least 2 frames")
        prev, last = clip.frames[-2], clip.frames[-1]
        # estimate_flow(src=last, dst=prev) lives on prev's grid and gives each
        # prev pixel's displacement into last: the pair's forward flow.
        pair_fwd = estimate_flow(last, prev, self.cfg).retag(FlowDirection.FORWARD)
        return extrapolate_flow(pair_fwd, self.mode)


class GroundTruthOracle(FlowPredictor):
    """Reads the clip's ground truth for the step leaving the last frame."""

    def predict(self, clip: Clip) -> tuple[FlowField, FlowField]:
        if len(clip.frames) < 2:
            raise ValueError("clip needs at least 2 frames")
        idx = len(clip.frames) - 1
        if (
            clip.gt_forward_flows is None
            or clip.gt_backward_flows is None
            or len(clip.gt_forward_flows) <= idx
            or len(clip.gt_backward_flows) <= idx
        ):
            raise ValueError("clip lacks ground-truth flow for the prediction step")
        fwd = clip.gt_forward_flows[idx].require(FlowDirection.FORWARD)
        bwd = clip.gt_backward_flows[idx].require(FlowDirection.BACKWARD)
        return fwd, bwd


class ZeroFlowPredictor(FlowPredictor):
    """Ablation: everything is static."""

    def predict(self, clip: Clip) -> tuple[FlowField, FlowField]:
        if len(clip.frames) < 2:
            raise ValueError("clip needs at least 2 frames")
        h, w = clip.frames[-1].height, clip.frames[-1].width
        return (
            FlowField.zero(h, w, FlowDirection.FORWARD),
            FlowField.zero(h, w, FlowDirection.BACKWARD),
        )


def predict_flows(
    clip: Clip,
    predictor: FlowPredictor | None = None,
    cfg: FlowSolverConfig | None = None,
) -> tuple[FlowField, FlowField]:
    """Next-step flow pair from a history clip (>= 2 frames required)."""
    if len(clip.frames) < 2:
        raise ValueError("clip needs at least 2 frames")
    if predictor is None:
        predictor = VariationalExtrapolator(cfg)
    return predictor.predict(clip)
