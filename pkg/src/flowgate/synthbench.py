"""Synthetic moving-sprite clips with exact ground-truth flow and occlusion.

A scene is a textured sprite translating linearly over a textured background.
Frames composite back-to-front with bilinear sub-pixel placement. Ground
truth is exact by construction: forward flow equals the velocity on the
sprite's surface and zero on the background, the backward flow mirrors that
from the target frame's surfaces, and the occlusion mask comes from a
brute-force scalar visibility oracle (unit density splat along the true
motion, thresholded), deliberately independent of the vectorized splat in
the warp module.

Randomness uses an in-repo xorshift64* generator (shift triplet 12/25/27,
multiplier 0x2545F4914F6CDD1D) so suites reproduce bit-for-bit across
languages; test vectors are frozen in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import Clip, FlowDirection, FlowField, Frame, OcclusionMap
from .warp import _sample_bilinear_zero

__all__ = [
    "Xorshift64Star",
    "SceneSpec",
    "LabeledClip",
    "MaskClass",
    "generate_clip",
    "generate_suite",
    "iou",
    "visibility_oracle",
]

_M64 = (1 << 64) - 1


class Xorshift64Star:
    """Marsaglia xorshift64* stream; next_float() is uniform on [0, 1)."""

    def __init__(self, seed: int):
        self.state = seed & _M64
        if self.state == 0:
            self.state = 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _M64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & _M64

    def next_float(self) -> float:
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_float()

    def randint(self, lo: int, hi: int) -> int:
        """Inclusive integer range."""
        return lo + int(self.next_float() * (hi - lo + 1))


class MaskClass(Enum):
    OCCLUDED = "occluded"
    VALID = "valid"


@dataclass(frozen=True)
class SceneSpec:
    """One moving-sprite scene. background/sprite default to procedural
    seed-derived noise textures; velocity is (u, v) pixels per frame and the
    start position is the sprite's sub-pixel top-left (x, y)."""

    seed: int
    canvas_size: tuple = (128, 128)
    sprite_size: tuple = (32, 32)
    start: tuple = (16.0, 16.0)
    velocity: tuple = (2.0, 0.0)
    num_frames: int = 3
    channels: int = 1
    background: Frame | None = None
    sprite_texture: Frame | None = None
    sprite_alpha: np.ndarray | None = None

    def __post_init__(self):
        if self.num_frames < 2:
            raise ValueError("a scene needs at least 2 frames")
        if not all(math.isfinite(c) for c in self.velocity):
            raise ValueError("velocity must be finite")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "canvas_size": list(self.canvas_size),
            "sprite_size": list(self.sprite_size),
            "start": list(self.start),
            "velocity": list(self.velocity),
            "num_frames": self.num_frames,
            "channels": self.channels,
            "procedural": self.background is None and self.sprite_texture is None,
        }


@dataclass(frozen=True)
class LabeledClip(Clip):
    """Clip plus per-frame surface ids (True = foreground sprite)."""

    surface_ids: tuple = ()

    @property
    def occluded_fraction(self) -> float:
        """Mask-0 fraction of the first step's ground-truth occlusion map."""
        m = self.gt_occlusion_masks[0].mask
        return float(1.0 - m.mean())


def _noise_texture(rng: Xorshift64Star, h: int, w: int, channels: int,
                   sigma: float, lo: float, hi: float) -> np.ndarray:
    raw = np.array([rng.next_float() for _ in range(h * w * channels)]).reshape(h, w, channels)
    sm = gaussian_filter(raw, sigma=(sigma, sigma, 0.0), mode="reflect")
    mn, mx = sm.min(), sm.max()
    if mx - mn < 1e-12:
        return np.full((h, w, channels), 0.5 * (lo + hi))
    return (sm - mn) / (mx - mn) * (hi - lo) + lo


def _place_sprite(premult: np.ndarray, alpha: np.ndarray, pos_x: float, pos_y: float,
                  h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    ii, jj = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    ys = ii - pos_y
    xs = jj - pos_x
    placed = _sample_bilinear_zero(premult, ys, xs)
    placed_a = _sample_bilinear_zero(alpha[:, :, None], ys, xs)[:, :, 0]
    return placed, placed_a


def visibility_oracle(vectors: np.ndarray, lo: float = 0.0, hi: float = 2.0,
                      eps: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Scalar reference splat: returns (energy, mask) from an (H, W, 2) flow.

    Pure-Python accumulation, row-major over source pixels; kept independent
    of the vectorized warp-module implementation on purpose.
    """
    h, w = vectors.shape[:2]
    energy = [[0.0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            x = j + float(vectors[i, j, 0])
            y = i + float(vectors[i, j, 1])
            x0 = math.floor(x)
            y0 = math.floor(y)
            fx = x - x0
            fy = y - y0
            for yy, xx, wt in (
                (y0, x0, (1 - fy) * (1 - fx)),
                (y0, x0 + 1, (1 - fy) * fx),
                (y0 + 1, x0, fy * (1 - fx)),
                (y0 + 1, x0 + 1, fy * fx),
            ):
                if 0 <= yy < h and 0 <= xx < w:
                    energy[yy][xx] += wt
    e = np.array(energy)
    mask = ((e > lo + eps) & (e < hi - eps)).astype(np.float64)
    return e, mask


def _check_fit(pos_x: float, pos_y: float, sh: int, sw: int, h: int, w: int) -> bool:
    return pos_x >= 1.0 and pos_y >= 1.0 and pos_x + sw <= w - 1 and pos_y + sh <= h - 1


def generate_clip(spec: SceneSpec) -> LabeledClip:
    """Render a scene and attach exact ground truth. Same spec, same bytes."""
    h, w = spec.canvas_size
    sh, sw = spec.sprite_size
    rng = Xorshift64Star(spec.seed)
    if spec.background is not None:
        bg = spec.background.data
    else:
        bg = _noise_texture(rng, h, w, spec.channels, sigma=3.0, lo=0.15, hi=0.5)
    if spec.sprite_texture is not None:
        tex = spec.sprite_texture.data
        alpha = spec.sprite_alpha if spec.sprite_alpha is not None else np.ones(tex.shape[:2])
    else:
        tex = _noise_texture(rng, sh, sw, spec.channels, sigma=2.0, lo=0.6, hi=0.95)
        alpha = np.ones((sh, sw))
    premult = tex * alpha[:, :, None]

    frames = []
    surfaces = []
    u, v = spec.velocity
    x0, y0 = spec.start
    for k in range(spec.num_frames):
        px = x0 + k * u
        py = y0 + k * v
        if not _check_fit(px, py, tex.shape[0], tex.shape[1], h, w):
            raise ValueError(f"sprite leaves the canvas at frame {k} (pos {px:.1f},{py:.1f})")
        placed, placed_a = _place_sprite(premult, alpha, px, py, h, w)
        img = placed + (1.0 - placed_a[:, :, None]) * bg
        frames.append(Frame.from_array(img, clamp=True))
        surfaces.append(placed_a >= 0.5)

    fwd, bwd, occ = [], [], []
    for k in range(spec.num_frames - 1):
        fvec = np.zeros((h, w, 2))
        fvec[surfaces[k], 0] = u
        fvec[surfaces[k], 1] = v
        bvec = np.zeros((h, w, 2))
        bvec[surfaces[k + 1], 0] = -u
        bvec[surfaces[k + 1], 1] = -v
        fwd.append(FlowField(fvec, FlowDirection.FORWARD))
        bwd.append(FlowField(bvec, FlowDirection.BACKWARD))
        _, mask = visibility_oracle(fvec)
        occ.append(OcclusionMap(mask))

    return LabeledClip(
        frames=tuple(frames),
        gt_forward_flows=tuple(fwd),
        gt_backward_flows=tuple(bwd),
        gt_occlusion_masks=tuple(occ),
        surface_ids=tuple(surfaces),
    )


def iou(a: OcclusionMap, b: OcclusionMap, positive_class: MaskClass = MaskClass.OCCLUDED) -> float:
    """Intersection over union of the chosen class; 1.0 when both sets are empty."""
    if a.mask.shape != b.mask.shape:
        raise ValueError(f"shape mismatch {a.mask.shape} vs {b.mask.shape}")
    if positive_class is MaskClass.OCCLUDED:
        sa, sb = a.mask == 0.0, b.mask == 0.0
    else:
        sa, sb = a.mask == 1.0, b.mask == 1.0
    union = (sa | sb).sum()
    if union == 0:
        return 1.0
    return float((sa & sb).sum() / union)


def generate_suite(
    n: int,
    seed: int,
    canvas_size: tuple = (128, 128),
    sprite_range: tuple = (16, 64),
    max_speed: float = 5.0,
    min_speed: float = 0.0,
    integer_velocities: bool = True,
    num_frames: int = 3,
    channels: int = 1,
) -> list[SceneSpec]:
    """Deterministic list of scene specs drawn from the declared ranges."""
    rng = Xorshift64Star(seed)
    specs = []
    h, w = canvas_size
    while len(specs) < n:
        scene_seed = rng.next_u64()
        sh = rng.randint(sprite_range[0], sprite_range[1])
        sw = rng.randint(sprite_range[0], sprite_range[1])
        if integer_velocities:
            u = float(rng.randint(-int(max_speed), int(max_speed)))
            v = float(rng.randint(-int(max_speed), int(max_speed)))
        else:
            u = rng.uniform(-max_speed, max_speed)
            v = rng.uniform(-max_speed, max_speed)
        if max(abs(u), abs(v)) < min_speed:
            continue
        span_x = (num_frames - 1) * u
        span_y = (num_frames - 1) * v
        lo_x = 1.0 - min(0.0, span_x)
        hi_x = (w - 1) - sw - max(0.0, span_x)
        lo_y = 1.0 - min(0.0, span_y)
        hi_y = (h - 1) - sh - max(0.0, span_y)
        if hi_x < lo_x or hi_y < lo_y:
            continue
        x0 = rng.uniform(lo_x, hi_x)
        y0 = rng.uniform(lo_y, hi_y)
        if integer_velocities:
            x0, y0 = float(int(x0)), float(int(y0))
        specs.append(
            SceneSpec(
                seed=scene_seed,
                canvas_size=canvas_size,
                sprite_size=(sh, sw),
                start=(x0, y0),
                velocity=(u, v),
                num_frames=num_frames,
                channels=channels,
            )
        )
    return specs
