"""Core containers (frames, flow fields, clips, pyramids) and shared resampling.

All image data is float64 in [0, 1], shape (H, W, C) with C in {1, 3}.
Flow fields are (H, W, 2) with channel 0 = u (horizontal, +right) and
channel 1 = v (vertical, +down), in pixel units, and carry a direction tag:
FORWARD fields live on the source grid and give each pixel's destination,
BACKWARD fields live on the target grid and point at source sample locations.

Pixel centers sit at integer coordinates. Every bilinear resampler in the
package uses the align-corners-false mapping src = (dst + 0.5) * scale - 0.5
with edge clamping, so resampling to identical dimensions is an exact identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "FlowDirection",
    "BorderMode",
    "Frame",
    "FlowField",
    "EnergyMap",
    "OcclusionMap",
    "Clip",
    "Pyramid",
    "image_gradient",
    "resize_bilinear",
    "resize_flow",
    "build_pyramid",
    "to_grayscale",
]

# Rec.601 luma weights used for grayscale conversion before flow estimation.
_LUMA = np.array([0.299, 0.587, 0.114])


class FlowDirection(Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


class BorderMode(Enum):
    CLAMP = "clamp"
    ZERO = "zero"


def _own(a, dtype=np.float64) -> np.ndarray:
    """Private float64 copy with writes disabled (containers are immutable)."""
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Frame:
    """An H x W x C image with finite float samples in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"frame must be (H, W, 1|3), got shape {np.shape(self.data)}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("frame dimensions must be positive")
        if not np.isfinite(data).all():
            raise ValueError("frame samples must be finite")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("frame samples must lie in [0, 1]")
        object.__setattr__(self, "data", _own(data))

    @staticmethod
    def from_array(a, clamp: bool = False) -> "Frame":
        a = np.asarray(a, dtype=np.float64)
        if clamp:
            a = np.clip(a, 0.0, 1.0)
        return Frame(a)

    @staticmethod
    def constant(height: int, width: int, value: float, channels: int = 1) -> "Frame":
        return Frame(np.full((height, width, channels), value, dtype=np.float64))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class FlowField:
    """Per-pixel (u, v) displacements in pixels with a fixed direction tag."""

    vectors: np.ndarray
    direction: FlowDirection

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 2:
            raise ValueError(f"flow must be (H, W, 2), got shape {np.shape(self.vectors)}")
        if not np.isfinite(v).all():
            raise ValueError("flow components must be finite")
        if not isinstance(self.direction, FlowDirection):
            raise TypeError("direction must be a FlowDirection")
        object.__setattr__(self, "vectors", _own(v))

    @staticmethod
    def zero(height: int, width: int, direction: FlowDirection) -> "FlowField":
        return FlowField(np.zeros((height, width, 2)), direction)

    @staticmethod
    def uniform(height: int, width: int, u: float, v: float, direction: FlowDirection) -> "FlowField":
        vec = np.empty((height, width, 2))
        vec[:, :, 0] = u
        vec[:, :, 1] = v
        return FlowField(vec, direction)

    @property
    def u(self) -> np.ndarray:
        return self.vectors[:, :, 0]

    @property
    def v(self) -> np.ndarray:
        return self.vectors[:, :, 1]

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    def require(self, direction: FlowDirection) -> "FlowField":
        if self.direction is not direction:
            raise ValueError(f"expected {direction.value} flow, got {self.direction.value}")
        return self

    def retag(self, direction: FlowDirection) -> "FlowField":
        return FlowField(self.vectors, direction)

    def negated(self, direction: FlowDirection) -> "FlowField":
        return FlowField(-self.vectors, direction)


@dataclass(frozen=True)
class EnergyMap:
    """Accumulated forward-splat density; non-negative, one unit per source pixel."""

    density: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.density, dtype=np.float64)
        if d.ndim != 2:
            raise ValueError("energy map must be 2-D")
        if not np.isfinite(d).all() or d.min() < 0.0:
            raise ValueError("energy values must be finite and >= 0")
        object.__setattr__(self, "density", _own(d))

    @property
    def height(self) -> int:
        return self.density.shape[0]

    @property
    def width(self) -> int:
        return self.density.shape[1]


@dataclass(frozen=True)
class OcclusionMap:
    """Binary confidence gate: 1 = motion-confident, 0 = occluded/disoccluded."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError("occlusion map must be 2-D")
        if not np.isin(m, (0.0, 1.0)).all():
            raise ValueError("occlusion mask values must be exactly 0 or 1")
        object.__setattr__(self, "mask", _own(m))

    @staticmethod
    def ones(height: int, width: int) -> "OcclusionMap":
        return OcclusionMap(np.ones((height, width)))

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]


@dataclass(frozen=True)
class Clip:
    """Ordered frame sequence at unit frame interval, with optional ground truth.

    Ground-truth lists are aligned to steps: entry i describes the transition
    from frame i to frame i+1 (forward flow on the frame-i grid, backward flow
    and occlusion mask on the frame-(i+1) grid). A sliced history clip keeps
    the entry for the step leaving its last frame, which is what oracle
    predictors read.
    """

    frames: tuple
    frame_interval: int = 1
    gt_forward_flows: tuple | None = None
    gt_backward_flows: tuple | None = None
    gt_occlusion_masks: tuple | None = None
    gt_label_maps: tuple | None = None

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("clip needs at least one frame")
        shape = frames[0].shape
        if any(f.shape != shape for f in frames):
            raise ValueError("all clip frames must share one shape")
        object.__setattr__(self, "frames", frames)
        for name in ("gt_forward_flows", "gt_backward_flows", "gt_occlusion_masks", "gt_label_maps"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(val))

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.frames[0].shape

    def history(self, k: int) -> "Clip":
        """First k frames plus the ground truth through the step k-1 -> k."""
        if not 1 <= k <= len(self.frames):
            raise ValueError(f"history length {k} out of range for {len(self.frames)} frames")

        def cut(xs):
            return None if xs is None else xs[:k]

        return Clip(
            frames=self.frames[:k],
            frame_interval=self.frame_interval,
            gt_forward_flows=cut(self.gt_forward_flows),
            gt_backward_flows=cut(self.gt_backward_flows),
            gt_occlusion_masks=cut(self.gt_occlusion_masks),
            gt_label_maps=cut(self.gt_label_maps),
        )


@dataclass(frozen=True)
class Pyramid:
    """Coarse-to-fine stack; level 0 is full resolution, each level halves."""

    levels: tuple

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise ValueError("pyramid needs at least one level")
        object.__setattr__(self, "levels", levels)

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, i):
        return self.levels[i]


def image_gradient(frame: Frame) -> tuple[np.ndarray, np.ndarray]:
    """Forward-difference gradients of a frame.

    gx(i, j) = x(i, j+1) - x(i, j) with the last column zero;
    gy(i, j) = x(i+1, j) - x(i, j) with the last row zero.
    Returns raw (H, W, C) arrays since gradients are signed.
    """
    x = frame.data
    gx = np.zeros_like(x)
    gy = np.zeros_like(x)
    gx[:, :-1, :] = x[:, 1:, :] - x[:, :-1, :]
    gy[:-1, :, :] = x[1:, :, :] - x[:-1, :, :]
    return gx, gy


def _sample_bilinear_clamped(plane: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear gather from (H, W, C) at float coords, clamping reads to the edge.

    Weights come from the unclamped coordinates, so sampling exactly at
    integer grid points reproduces stored values bit-for-bit.
    """
    h, w = plane.shape[:2]
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy = (ys - y0)[..., None]
    fx = (xs - x0)[..., None]
    y0 = y0.astype(np.intp)
    x0 = x0.astype(np.intp)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    g00 = plane[y0c, x0c]
    g01 = plane[y0c, x1c]
    g10 = plane[y1c, x0c]
    g11 = plane[y1c, x1c]
    top = g00 * (1.0 - fx) + g01 * fx
    bot = g10 * (1.0 - fx) + g11 * fx
    return top * (1.0 - fy) + bot * fy


def _resize_plane(data: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W, C) array under the package-wide convention."""
    h, w = data.shape[:2]
    if new_h == h and new_w == w:
        return data.copy()
    sy = h / new_h
    sx = w / new_w
    ys = (np.arange(new_h, dtype=np.float64) + 0.5) * sy - 0.5
    xs = (np.arange(new_w, dtype=np.float64) + 0.5) * sx - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return _sample_bilinear_clamped(data, yy, xx)


def resize_bilinear(frame: Frame, new_h: int, new_w: int) -> Frame:
    """Bilinearly resize a frame with edge clamping.

    Resizing to identical dimensions returns a bit-identical frame. Output
    samples are convex combinations of inputs, so they stay within the input
    min/max bounds.
    """
    if new_h < 1 or new_w < 1:
        raise ValueError(f"target dimensions must be >= 1, got {new_h}x{new_w}")
    return Frame(_resize_plane(frame.data, new_h, new_w))


def resize_flow(flow: FlowField, new_h: int, new_w: int, vector_scale: float = 1.0) -> FlowField:
    """Resize a flow field spatially and scale its vectors by vector_scale."""
    if new_h < 1 or new_w < 1:
        raise ValueError(f"target dimensions must be >= 1, got {new_h}x{new_w}")
    resized = _resize_plane(flow.vectors, new_h, new_w)
    if vector_scale != 1.0:
        resized = resized * vector_scale
    return FlowField(resized, flow.direction)


def build_pyramid(item, min_side: int = 16) -> Pyramid:
    """Repeated 0.5x downsampling until the next level's short side would drop
    below min_side. Level dims follow ceil(prev / 2); flow magnitudes halve
    with each level.
    """
    if min_side < 4:
        raise ValueError(f"min_side must be >= 4, got {min_side}")
    levels = [item]
    while True:
        cur = levels[-1]
        h, w = (cur.height, cur.width)
        nh = -(-h // 2)
        nw = -(-w // 2)
        if min(nh, nw) < min_side or (nh, nw) == (h, w):
            break
        if isinstance(cur, Frame):
            levels.append(resize_bilinear(cur, nh, nw))
        else:
            levels.append(resize_flow(cur, nh, nw, vector_scale=0.5))
    return Pyramid(tuple(levels))


def to_grayscale(frame: Frame) -> Frame:
    """Rec.601 luma conversion; single-channel frames pass through unchanged."""
    if frame.channels == 1:
        return frame
    return Frame(frame.data @ _LUMA.reshape(3, 1))
