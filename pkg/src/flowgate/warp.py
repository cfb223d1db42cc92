"""Backward bilinear warping, forward energy splatting, and occlusion maps.

The warping side resamples a source frame along a BACKWARD flow. The splat
side pushes one unit of density per source pixel along a FORWARD flow,
splitting it bilinearly over the four integer neighbors of the continuous
target location; the accumulated density distinguishes disoccluded targets
(nothing lands there) from contested ones (two or more units land there),
and the occlusion map keeps exactly the pixels strictly between those two
regimes.
"""

from __future__ import annotations

import numpy as np

from .core import (
    BorderMode,
    EnergyMap,
    FlowDirection,
    FlowField,
    Frame,
    OcclusionMap,
    _sample_bilinear_clamped,
)

__all__ = [
    "backward_warp",
    "splat_energy",
    "occlusion_from_energy",
    "occlusion_pipeline",
]


def backward_warp(src: Frame, flow: FlowField, border: BorderMode = BorderMode.CLAMP) -> Frame:
    """Propagate src onto the flow's grid: out(i,j) = src(i + v(i,j), j + u(i,j)).

    Sampling is bilinear; out-of-bounds reads either clamp to the edge
    (CLAMP) or contribute zero (ZERO). Zero flow is an exact identity for
    both border modes.
    """
    flow.require(FlowDirection.BACKWARD)
    if (flow.height, flow.width) != (src.height, src.width):
        raise ValueError("flow and source shapes must match")
    h, w = src.height, src.width
    ii, jj = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    ys = ii + flow.v
    xs = jj + flow.u
    if border is BorderMode.CLAMP:
        out = _sample_bilinear_clamped(src.data, ys, xs)
    elif border is BorderMode.ZERO:
        out = _sample_bilinear_zero(src.data, ys, xs)
    else:
        raise ValueError(f"unknown border mode {border!r}")
    return Frame.from_array(out, clamp=True)


def _sample_bilinear_zero(plane: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    h, w = plane.shape[:2]
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy = (ys - y0)[..., None]
    fx = (xs - x0)[..., None]
    y0 = y0.astype(np.intp)
    x0 = x0.astype(np.intp)
    out = np.zeros(ys.shape + (plane.shape[2],))
    weights = ((1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx)
    corners = ((y0, x0), (y0, x0 + 1), (y0 + 1, x0), (y0 + 1, x0 + 1))
    for wgt, (yc, xc) in zip(weights, corners):
        inside = ((yc >= 0) & (yc < h) & (xc >= 0) & (xc < w))[..., None]
        vals = plane[np.clip(yc, 0, h - 1), np.clip(xc, 0, w - 1)]
        out += wgt * vals * inside
    return out


def splat_energy(flow: FlowField) -> EnergyMap:
    """Forward-splat one unit of density per source pixel along the flow.

    Each pixel's unit splits bilinearly over the four integer neighbors of
    its continuous target; corners falling outside the grid drop their share
    (no renormalization, no clamping to the border). Accumulation order is
    deterministic (row-major over source pixels, corner by corner).
    """
    flow.require(FlowDirection.FORWARD)
    h, w = flow.height, flow.width
    ii, jj = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    ys = ii + flow.v
    xs = jj + flow.u
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy = ys - y0
    fx = xs - x0
    y0 = y0.astype(np.intp)
    x0 = x0.astype(np.intp)
    energy = np.zeros((h, w))
    weights = ((1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx)
    corners = ((y0, x0), (y0, x0 + 1), (y0 + 1, x0), (y0 + 1, x0 + 1))
    for wgt, (yc, xc) in zip(weights, corners):
        inside = (yc >= 0) & (yc < h) & (xc >= 0) & (xc < w)
        np.add.at(energy, (yc[inside], xc[inside]), wgt[inside])
    # Bilinear weights can produce -0.0 or epsilon-negative sums; the map is >= 0.
    np.maximum(energy, 0.0, out=energy)
    return EnergyMap(energy)


def occlusion_from_energy(
    energy: EnergyMap, lo: float = 0.0, hi: float = 2.0, eps: float = 1e-6
) -> OcclusionMap:
    """Threshold a density map into the binary confidence gate.

    mask = 1 iff lo + eps < E < hi - eps. The eps guard bands absorb
    floating-point splat noise around the exact 0 and 2 decision points;
    E exactly at hi counts as occluded.
    """
    if lo >= hi:
        raise ValueError(f"lo must be < hi, got lo={lo}, hi={hi}")
    d = energy.density
    mask = ((d > lo + eps) & (d < hi - eps)).astype(np.float64)
    return OcclusionMap(mask)


def occlusion_pipeline(flow_fwd: FlowField, lo: float = 0.0, hi: float = 2.0, eps: float = 1e-6):
    """Splat then threshold; returns (EnergyMap, OcclusionMap) for inspection."""
    energy = splat_energy(flow_fwd)
    return energy, occlusion_from_energy(energy, lo=lo, hi=hi, eps=eps)
