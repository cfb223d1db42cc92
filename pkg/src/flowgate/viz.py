"""Flow and mask rendering with the standard Middlebury color wheel."""

from __future__ import annotations

import numpy as np

from .core import FlowField, Frame, OcclusionMap

__all__ = ["flow_to_color", "overlay_mask"]


def _make_colorwheel() -> np.ndarray:
    """55-color RY/YG/GC/CB/BM/MR wheel, rows in [0, 1]."""
    ry, yg, gc, cb, bm, mr = 15, 6, 4, 11, 13, 6
    ncols = ry + yg + gc + cb + bm + mr
    wheel = np.zeros((ncols, 3))
    col = 0
    wheel[0:ry, 0] = 255
    wheel[0:ry, 1] = np.floor(255 * np.arange(ry) / ry)
    col += ry
    wheel[col : col + yg, 0] = 255 - np.floor(255 * np.arange(yg) / yg)
    wheel[col : col + yg, 1] = 255
    col += yg
    wheel[col : col + gc, 1] = 255
    wheel[col : col + gc, 2] = np.floor(255 * np.arange(gc) / gc)
    col += gc
    wheel[col : col + cb, 1] = 255 - np.floor(255 * np.arange(cb) / cb)
    wheel[col : col + cb, 2] = 255
    col += cb
    wheel[col : col + bm, 2] = 255
    wheel[col : col + bm, 0] = np.floor(255 * np.arange(bm) / bm)
    col += bm
    wheel[col : col + mr, 2] = 255 - np.floor(255 * np.arange(mr) / mr)
    wheel[col : col + mr, 0] = 255
    return wheel / 255.0


_WHEEL = _make_colorwheel()


def flow_to_color(flow: FlowField, max_flow: float | None = None) -> Frame:
    """Map flow vectors to the Middlebury wheel; saturation encodes magnitude
    normalized by max_flow (defaults to the field's own maximum radius)."""
    u = flow.u
    v = flow.v
    rad = np.sqrt(u * u + v * v)
    denom = max_flow if max_flow is not None else float(rad.max())
    if denom <= 0:
        denom = 1.0
    u = u / denom
    v = v / denom
    rad = np.sqrt(u * u + v * v)
    a = np.arctan2(-v, -u) / np.pi
    ncols = _WHEEL.shape[0]
    fk = (a + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % ncols
    f = (fk - k0)[..., None]
    col = (1.0 - f) * _WHEEL[k0] + f * _WHEEL[k1]
    r = np.minimum(rad, 1.0)[..., None]
    col = 1.0 - r * (1.0 - col)
    # out-of-range magnitudes darken instead of saturating
    over = (rad > 1.0)[..., None]
    col = np.where(over, col * 0.75, col)
    return Frame.from_array(col, clamp=True)


def overlay_mask(frame: Frame, mask: OcclusionMap, tint=(1.0, 0.2, 0.2), strength: float = 0.55) -> Frame:
    """Tint mask-0 (occluded) pixels over an RGB rendering of the frame."""
    rgb = frame.data if frame.channels == 3 else np.repeat(frame.data, 3, axis=2)
    t = np.asarray(tint, dtype=np.float64).reshape(1, 1, 3)
    m = mask.mask[:, :, None]
    out = rgb * m + ((1.0 - strength) * rgb + strength * t) * (1.0 - m)
    return Frame.from_array(out, clamp=True)
