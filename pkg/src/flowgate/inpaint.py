"""Occlusion-gated completion: partial convolution, pull-push fill, compositing.

partial_conv is the validity-renormalized convolution primitive: windows see
only mask-1 pixels, the response is rescaled by window-size/valid-count, and
a window with no valid pixel returns exactly zero. It is shipped as a tested
building block for a learned encoder; at runtime the deterministic pull-push
inpainter plays the generator role, and compose gates warped content against
inpainted content through the binary occlusion map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Frame, OcclusionMap, _resize_plane

__all__ = ["PartialConvLayer", "partial_conv", "pullpush_inpaint", "compose"]


@dataclass(frozen=True)
class PartialConvLayer:
    """k x k x C_in x C_out weights plus per-output-channel bias."""

    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=np.float64)
        if k.ndim != 4 or k.shape[0] != k.shape[1]:
            raise ValueError("kernel must be (k, k, C_in, C_out)")
        if k.shape[0] % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {k.shape[0]}")
        if not np.isfinite(k).all():
            raise ValueError("kernel weights must be finite")
        b = np.asarray(self.bias, dtype=np.float64)
        if b.shape != (k.shape[3],):
            raise ValueError("bias must be (C_out,)")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        object.__setattr__(self, "kernel", k.copy())
        object.__setattr__(self, "bias", b.copy())

    @property
    def size(self) -> int:
        return self.kernel.shape[0]

    @property
    def window(self) -> int:
        """Window size K = k * k * C_in."""
        return self.kernel.shape[0] ** 2 * self.kernel.shape[2]


def partial_conv(x, mask, layer: PartialConvLayer):
    """Mask-renormalized convolution with the mask-dilation update.

    Per output position with at least one valid input pixel in its window,
    out = (sum W * x * m) * (k^2 / valid-count) + bias; fully masked windows
    return 0 with no bias. Borders zero-pad and padding counts as mask-0, so
    it joins the renormalization instead of darkening the response.
    Returns (out, updated mask), where mask'(p) = 1 iff the window saw any
    valid pixel.
    """
    xa = x.data if isinstance(x, Frame) else np.asarray(x, dtype=np.float64)
    if xa.ndim == 2:
        xa = xa[:, :, None]
    m = mask.mask if isinstance(mask, OcclusionMap) else np.asarray(mask, dtype=np.float64)
    if m.shape != xa.shape[:2]:
        raise ValueError(f"mask shape {m.shape} does not match input {xa.shape[:2]}")
    if xa.shape[2] != layer.kernel.shape[2]:
        raise ValueError(f"input channels {xa.shape[2]} != kernel C_in {layer.kernel.shape[2]}")
    k = layer.size
    pad = k // 2
    s = layer.stride
    xm = np.pad(xa * m[:, :, None], ((pad, pad), (pad, pad), (0, 0)))
    mp = np.pad(m, pad)
    xwin = sliding_window_view(xm, (k, k), axis=(0, 1))[::s, ::s]
    mwin = sliding_window_view(mp, (k, k))[::s, ::s]
    msum = mwin.sum(axis=(2, 3))
    raw = np.einsum("ijcab,abco->ijo", xwin, layer.kernel, optimize=True)
    alive = msum > 0
    ratio = np.where(alive, (k * k) / np.where(alive, msum, 1.0), 0.0)
    out = raw * ratio[:, :, None]
    out[alive] += layer.bias
    out[~alive] = 0.0
    return out, alive.astype(np.float64)


def _pool2(values: np.ndarray, weights: np.ndarray):
    """2x2 weighted box pooling; odd edges pad with zero weight."""
    h, w = weights.shape
    ph, pw = -(-h // 2) * 2, -(-w // 2) * 2
    v = np.zeros((ph, pw, values.shape[2]))
    wt = np.zeros((ph, pw))
    v[:h, :w] = values * weights[:, :, None]
    wt[:h, :w] = weights
    vsum = v[0::2, 0::2] + v[0::2, 1::2] + v[1::2, 0::2] + v[1::2, 1::2]
    wsum = wt[0::2, 0::2] + wt[0::2, 1::2] + wt[1::2, 0::2] + wt[1::2, 1::2]
    filled = np.where(wsum[:, :, None] > 0, vsum / np.where(wsum[:, :, None] > 0, wsum[:, :, None], 1.0), 0.0)
    return filled, wsum / 4.0


def pullpush_inpaint(frame: Frame, mask: OcclusionMap) -> Frame:
    """Fill mask-0 pixels by pull-push: downsample weighted averages until
    every coarse pixel has support, then walk back up, replacing only
    still-invalid pixels with upsampled values. Valid pixels pass through
    untouched; output is clamped to [0, 1].
    """
    m = mask.mask
    if m.shape != (frame.height, frame.width):
        raise ValueError("mask and frame shapes must match")
    if m.all():
        return Frame(frame.data)
    if not m.any():
        raise ValueError("mask has no valid pixels to inpaint from")
    values = [frame.data]
    weights = [m]
    while weights[-1].min() <= 0.0 and weights[-1].size > 1:
        v, w = _pool2(values[-1], weights[-1])
        values.append(v)
        weights.append(w)
    coarse = values[-1]
    for lev in range(len(values) - 2, -1, -1):
        up = _resize_plane(coarse, *weights[lev].shape)
        coarse = np.where(weights[lev][:, :, None] > 0, values[lev], up)
    out = np.where(m[:, :, None] > 0, frame.data, np.clip(coarse, 0.0, 1.0))
    return Frame(out)


def compose(warped: Frame, inpainted: Frame, mask: OcclusionMap) -> Frame:
    """Gate: warped content where the mask trusts motion, inpainted elsewhere."""
    if warped.shape != inpainted.shape:
        raise ValueError(f"shape mismatch {warped.shape} vs {inpainted.shape}")
    if mask.mask.shape != (warped.height, warped.width):
        raise ValueError("mask shape does not match frames")
    m = mask.mask[:, :, None]
    return Frame(warped.data * m + inpainted.data * (1.0 - m))
