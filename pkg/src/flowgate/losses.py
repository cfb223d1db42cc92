"""Loss terms for flow fitting and occlusion-gated inpainting.

Every term is evaluable on plain inputs; the three terms the variational
solver descends on (Charbonnier photometric, edge-weighted smoothness,
isotropic total variation) also expose analytic gradients that match central
finite differences.

Normalization: published forms are bare sums; here MEAN_OVER_VALID divides
each term by its own valid-entry count so magnitudes are resolution- and
mask-size-independent, and a SUM mode exists for algebraic identities in
tests. Masking is literal: frames are multiplied by the mask before any
SSIM windowing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.ndimage import correlate1d

from .core import FlowField, Frame, OcclusionMap, image_gradient

__all__ = [
    "Normalization",
    "LossConfig",
    "FeatureStack",
    "LabelMap",
    "LossTerm",
    "ssim",
    "masked_pixel_loss",
    "smoothness_loss",
    "total_variation",
    "perceptual_loss",
    "style_loss",
    "masked_cross_entropy",
    "flow_objective",
    "pixel_reconstruction_loss",
    "inpaint_objective",
    "photometric_charbonnier",
    "smoothness_charbonnier",
    "tv_charbonnier",
    "loss_gradient",
]

_LOG_CLAMP = 1e-12


class Normalization(Enum):
    MEAN_OVER_VALID = "mean_over_valid"
    SUM = "sum"


class LossTerm(Enum):
    CHARBONNIER_PHOTO = "charbonnier_photo"
    SMOOTHNESS = "smoothness"
    TV = "tv"


@dataclass(frozen=True)
class LossConfig:
    """Hyperparameters; the lambda/beta/alpha defaults are the published ones."""

    alpha: float = 0.9
    beta: float = 10.0
    lambda_smt: float = 0.1
    lambda_prc: float = 0.05
    lambda_sty: float = 120.0
    lambda_var: float = 0.1
    lambda_seg: float = 5.0
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    normalization: Normalization = Normalization.MEAN_OVER_VALID

    def __post_init__(self):
        for name in ("alpha", "beta", "lambda_smt", "lambda_prc", "lambda_sty", "lambda_var", "lambda_seg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class FeatureStack:
    """Caller-supplied feature maps, one (H_n, W_n, D_n) array per level."""

    levels: tuple

    def __post_init__(self):
        levels = tuple(np.asarray(l, dtype=np.float64) for l in self.levels)
        if not levels:
            raise ValueError("feature stack must be non-empty")
        for l in levels:
            if l.ndim != 3:
                raise ValueError("feature maps must be (H, W, D)")
            if not np.isfinite(l).all():
                raise ValueError("feature values must be finite")
        object.__setattr__(self, "levels", levels)

    def __len__(self):
        return len(self.levels)


@dataclass(frozen=True)
class LabelMap:
    """Integer class labels with optional per-class probability planes."""

    labels: np.ndarray
    num_classes: int
    probabilities: np.ndarray | None = None

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or not np.issubdtype(labels.dtype, np.integer):
            raise ValueError("labels must be a 2-D integer array")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ValueError("labels must lie within the declared class count")
        object.__setattr__(self, "labels", labels.copy())
        if self.probabilities is not None:
            p = np.asarray(self.probabilities, dtype=np.float64)
            if p.shape != labels.shape + (self.num_classes,):
                raise ValueError("probabilities must be (H, W, num_classes)")
            object.__setattr__(self, "probabilities", p.copy())


def _image_array(x) -> np.ndarray:
    if isinstance(x, Frame):
        return x.data
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    return a


def _flow_array(f) -> np.ndarray:
    if isinstance(f, FlowField):
        return f.vectors
    return np.asarray(f, dtype=np.float64)


def _mask_array(mask, h: int, w: int) -> np.ndarray:
    m = mask.mask if isinstance(mask, OcclusionMap) else np.asarray(mask, dtype=np.float64)
    if m.shape != (h, w):
        raise ValueError(f"mask shape {m.shape} does not match ({h}, {w})")
    return m


def _gaussian_taps(size: int, sigma: float) -> np.ndarray:
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def _windowed(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable windowed sums, cropped to valid window centers."""
    r = len(taps) // 2
    out = correlate1d(x, taps, axis=0, mode="constant", cval=0.0)
    out = correlate1d(out, taps, axis=1, mode="constant", cval=0.0)
    return out[r:-r or None, r:-r or None]


def ssim(x, y, window_size: int = 11, sigma: float = 1.5):
    """Structural similarity with a Gaussian window, L = 1.

    Returns (mean over valid window centers, per-pixel map averaged over
    channels). The map is a raw array since SSIM values can go negative.
    """
    xa = _image_array(x)
    ya = _image_array(y)
    if xa.shape != ya.shape:
        raise ValueError(f"shape mismatch {xa.shape} vs {ya.shape}")
    h, w = xa.shape[:2]
    if h < window_size or w < window_size:
        raise ValueError(f"inputs smaller than the {window_size}x{window_size} window")
    taps = _gaussian_taps(window_size, sigma)
    c1 = 0.01 ** 2
    c2 = 0.03 ** 2
    mu_x = _windowed(xa, taps)
    mu_y = _windowed(ya, taps)
    xx = _windowed(xa * xa, taps) - mu_x * mu_x
    yy = _windowed(ya * ya, taps) - mu_y * mu_y
    xy = _windowed(xa * ya, taps) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    smap = (num / den).mean(axis=2)
    return float(smap.mean()), smap


def masked_pixel_loss(
    pred,
    target,
    mask,
    alpha: float = 0.9,
    norm: Normalization = Normalization.MEAN_OVER_VALID,
    window_size: int = 11,
    sigma: float = 1.5,
) -> float:
    """alpha * (1 - SSIM(pred*m, target*m)) / 2 + (1 - alpha) * masked L1.

    The L1 part is summed over masked entries and, under MEAN_OVER_VALID,
    divided by their count (0 on empty support). Masking happens before the
    SSIM windowing, per the published form.
    """
    pa = _image_array(pred)
    ta = _image_array(target)
    if pa.shape != ta.shape:
        raise ValueError(f"shape mismatch {pa.shape} vs {ta.shape}")
    m = _mask_array(mask, *pa.shape[:2])
    m3 = m[:, :, None]
    l1_sum = float(np.abs((pa - ta) * m3).sum())
    if norm is Normalization.MEAN_OVER_VALID:
        count = m.sum() * pa.shape[2]
        l1 = l1_sum / count if count > 0 else 0.0
    else:
        l1 = l1_sum
    total = (1.0 - alpha) * l1
    if alpha != 0.0:
        s, _ = ssim(pa * m3, ta * m3, window_size=window_size, sigma=sigma)
        total += alpha * (1.0 - s) / 2.0
    return total


def _forward_diffs(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dx = np.zeros_like(a)
    dy = np.zeros_like(a)
    dx[:, :-1] = a[:, 1:] - a[:, :-1]
    dy[:-1, :] = a[1:, :] - a[:-1, :]
    return dx, dy


def _edge_weights(image) -> tuple[np.ndarray, np.ndarray]:
    """exp(-channel-mean |forward image gradient|) per direction."""
    gx, gy = image_gradient(image if isinstance(image, Frame) else Frame.from_array(image))
    return np.exp(-np.abs(gx).mean(axis=2)), np.exp(-np.abs(gy).mean(axis=2))


def smoothness_loss(flow, image, norm: Normalization = Normalization.MEAN_OVER_VALID) -> float:
    """Edge-aware first-order flow smoothness.

    Per position and direction, (|du| + |dv|) of the forward differences is
    weighted by exp(-mean_c |d image|); summed over both directions and
    normalized over the H*W grid positions (trailing diffs are zero).
    """
    f = _flow_array(flow)
    img = _image_array(image)
    if f.shape[:2] != img.shape[:2]:
        raise ValueError(f"shape mismatch {f.shape[:2]} vs {img.shape[:2]}")
    wx, wy = _edge_weights(img)
    dux, duy = _forward_diffs(f[:, :, 0])
    dvx, dvy = _forward_diffs(f[:, :, 1])
    total = (wx * (np.abs(dux) + np.abs(dvx)) + wy * (np.abs(duy) + np.abs(dvy))).sum()
    if norm is Normalization.MEAN_OVER_VALID:
        total /= f.shape[0] * f.shape[1]
    return float(total)


def total_variation(x, norm: Normalization = Normalization.MEAN_OVER_VALID) -> float:
    """Isotropic TV: sqrt(sum_c dx^2 + sum_c dy^2) per position, channels inside
    the squared norms, trailing diffs zero, normalized over grid positions.
    """
    a = _image_array(x)
    dx = np.zeros_like(a)
    dy = np.zeros_like(a)
    dx[:, :-1, :] = a[:, 1:, :] - a[:, :-1, :]
    dy[:-1, :, :] = a[1:, :, :] - a[:-1, :, :]
    mag = np.sqrt((dx * dx).sum(axis=2) + (dy * dy).sum(axis=2))
    total = float(mag.sum())
    if norm is Normalization.MEAN_OVER_VALID:
        total /= a.shape[0] * a.shape[1]
    return total


def _resize_nearest_mask(m: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    h, w = m.shape
    ys = np.clip(((np.arange(new_h) + 0.5) * (h / new_h)).astype(int), 0, h - 1)
    xs = np.clip(((np.arange(new_w) + 0.5) * (w / new_w)).astype(int), 0, w - 1)
    return m[np.ix_(ys, xs)]


def _masked_l1_term(delta: np.ndarray, m: np.ndarray, norm: Normalization) -> float:
    s = float((np.abs(delta) * m[:, :, None]).sum())
    if norm is Normalization.SUM:
        return s
    count = m.sum() * delta.shape[2]
    return s / count if count > 0 else 0.0


def perceptual_loss(
    fp: FeatureStack,
    ft: FeatureStack,
    mask,
    beta: float = 10.0,
    norm: Normalization = Normalization.MEAN_OVER_VALID,
) -> float:
    """Level-averaged masked L1 over feature differences, with the complement
    (occluded) term weighted by beta. The mask is nearest-resized per level.
    """
    if len(fp) != len(ft):
        raise ValueError("feature stacks must have the same number of levels")
    m_full = mask.mask if isinstance(mask, OcclusionMap) else np.asarray(mask, dtype=np.float64)
    total = 0.0
    for a, b in zip(fp.levels, ft.levels):
        if a.shape != b.shape:
            raise ValueError(f"level shape mismatch {a.shape} vs {b.shape}")
        m = _resize_nearest_mask(m_full, a.shape[0], a.shape[1])
        delta = a - b
        total += _masked_l1_term(delta, m, norm) + beta * _masked_l1_term(delta, 1.0 - m, norm)
    return total / len(fp)


def _gram_term(delta: np.ndarray, sel: np.ndarray, norm: Normalization) -> float:
    pts = delta[sel]
    if pts.shape[0] == 0:
        return 0.0
    g = pts.T @ pts
    s = float(np.abs(g).sum())
    if norm is Normalization.SUM:
        return s
    d = delta.shape[2]
    return s / (d * d * pts.shape[0])


def style_loss(
    fp: FeatureStack,
    ft: FeatureStack,
    mask,
    beta: float = 10.0,
    norm: Normalization = Normalization.MEAN_OVER_VALID,
) -> float:
    """Gram-matrix loss of feature differences, computed separately from
    mask-selected and complement positions, beta-weighted and level-averaged.
    Normalization is by D^2 times the position count.
    """
    if len(fp) != len(ft):
        raise ValueError("feature stacks must have the same number of levels")
    m_full = mask.mask if isinstance(mask, OcclusionMap) else np.asarray(mask, dtype=np.float64)
    total = 0.0
    for a, b in zip(fp.levels, ft.levels):
        if a.shape != b.shape:
            raise ValueError(f"level shape mismatch {a.shape} vs {b.shape}")
        m = _resize_nearest_mask(m_full, a.shape[0], a.shape[1])
        delta = a - b
        total += _gram_term(delta, m > 0.5, norm) + beta * _gram_term(delta, m <= 0.5, norm)
    return total / len(fp)


def masked_cross_entropy(
    pred: LabelMap,
    target: LabelMap,
    mask,
    beta: float = 10.0,
    norm: Normalization = Normalization.MEAN_OVER_VALID,
) -> float:
    """Masked-term CE plus beta times the complement-term CE.

    pred must carry probability planes summing to 1 per pixel; logs clamp
    at 1e-12.
    """
    if pred.probabilities is None:
        raise ValueError("pred LabelMap must carry probability planes")
    p = pred.probabilities
    if not np.allclose(p.sum(axis=2), 1.0, atol=1e-5):
        raise ValueError("probability planes must sum to 1 per pixel")
    if p.min() < 0:
        raise ValueError("probabilities must be non-negative")
    if target.labels.shape != p.shape[:2]:
        raise ValueError("target labels must match prediction shape")
    h, w = target.labels.shape
    m = _mask_array(mask, h, w)
    picked = np.take_along_axis(p, target.labels[:, :, None], axis=2)[:, :, 0]
    ce = -np.log(np.maximum(picked, _LOG_CLAMP))

    def term(sel: np.ndarray) -> float:
        s = float((ce * sel).sum())
        if norm is Normalization.SUM:
            return s
        count = sel.sum()
        return s / count if count > 0 else 0.0

    return term(m) + beta * term(1.0 - m)


def flow_objective(pred_frame, target_frame, mask, flow, target_img, cfg: LossConfig | None = None) -> float:
    """Flow-fitting objective: masked pixel loss + lambda_smt * smoothness."""
    cfg = cfg or LossConfig()
    pix = masked_pixel_loss(
        pred_frame, target_frame, mask,
        alpha=cfg.alpha, norm=cfg.normalization,
        window_size=cfg.ssim_window, sigma=cfg.ssim_sigma,
    )
    smt = smoothness_loss(flow, target_img, norm=cfg.normalization)
    return pix + cfg.lambda_smt * smt


def pixel_reconstruction_loss(pred, target, mask, cfg: LossConfig | None = None) -> float:
    """Masked pixel loss on the confident region plus beta times the occluded one."""
    cfg = cfg or LossConfig()
    m = _mask_array(mask, *_image_array(pred).shape[:2])
    kw = dict(alpha=cfg.alpha, norm=cfg.normalization, window_size=cfg.ssim_window, sigma=cfg.ssim_sigma)
    return masked_pixel_loss(pred, target, m, **kw) + cfg.beta * masked_pixel_loss(pred, target, 1.0 - m, **kw)


def inpaint_objective(terms: dict, cfg: LossConfig | None = None) -> float:
    """Weighted sum of the inpainting terms {pix, prc, sty, var, seg}."""
    cfg = cfg or LossConfig()
    return (
        terms["pix"]
        + cfg.lambda_prc * terms["prc"]
        + cfg.lambda_sty * terms["sty"]
        + cfg.lambda_var * terms["var"]
        + cfg.lambda_seg * terms["seg"]
    )


# ---------------------------------------------------------------------------
# Differentiable term evaluators and their analytic gradients. These back the
# variational solver; absolute values are Charbonnier-smoothed,
# phi(d) = sqrt(d^2 + eps^2), and every term is mean-normalized.
# ---------------------------------------------------------------------------


def _warp_with_jacobian(plane: np.ndarray, flow: np.ndarray):
    """Clamped bilinear warp plus d(warped)/dx and d(warped)/dy.

    The derivative uses the same clipped gathers as the value, so it is the
    exact derivative of the clamped warp almost everywhere.
    """
    h, w = plane.shape[:2]
    ii, jj = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    ys = ii + flow[:, :, 1]
    xs = jj + flow[:, :, 0]
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
    warped = (g00 * (1 - fx) + g01 * fx) * (1 - fy) + (g10 * (1 - fx) + g11 * fx) * fy
    ddx = (g01 - g00) * (1 - fy) + (g11 - g10) * fy
    ddy = (g10 - g00) * (1 - fx) + (g11 - g01) * fx
    return warped, ddx, ddy


def photometric_charbonnier(src, flow, target, eps: float = 1e-3) -> float:
    """Mean Charbonnier penalty of warp(src, flow) - target."""
    s = _image_array(src)
    t = _image_array(target)
    f = _flow_array(flow)
    warped, _, _ = _warp_with_jacobian(s, f)
    r = warped - t
    return float(np.sqrt(r * r + eps * eps).mean())


def _photometric_gradient(src, flow, target, eps: float) -> np.ndarray:
    s = _image_array(src)
    t = _image_array(target)
    f = _flow_array(flow)
    warped, ddx, ddy = _warp_with_jacobian(s, f)
    r = warped - t
    w = r / np.sqrt(r * r + eps * eps) / r.size
    grad = np.empty_like(f)
    grad[:, :, 0] = (w * ddx).sum(axis=2)
    grad[:, :, 1] = (w * ddy).sum(axis=2)
    return grad


def _smt_value(f: np.ndarray, wx: np.ndarray, wy: np.ndarray, eps: float) -> float:
    n = f.shape[0] * f.shape[1]
    total = 0.0
    for c in range(2):
        a = f[:, :, c]
        dx = a[:, 1:] - a[:, :-1]
        dy = a[1:, :] - a[:-1, :]
        total += (wx[:, :-1] * np.sqrt(dx * dx + eps * eps)).sum()
        total += (wy[:-1, :] * np.sqrt(dy * dy + eps * eps)).sum()
    return float(total / n)


def _smt_grad(f: np.ndarray, wx: np.ndarray, wy: np.ndarray, eps: float) -> np.ndarray:
    n = f.shape[0] * f.shape[1]
    grad = np.zeros_like(f)
    for c in range(2):
        a = f[:, :, c]
        dx = a[:, 1:] - a[:, :-1]
        dy = a[1:, :] - a[:-1, :]
        px = wx[:, :-1] * dx / np.sqrt(dx * dx + eps * eps)
        py = wy[:-1, :] * dy / np.sqrt(dy * dy + eps * eps)
        g = grad[:, :, c]
        g[:, :-1] -= px
        g[:, 1:] += px
        g[:-1, :] -= py
        g[1:, :] += py
    grad /= n
    return grad


def smoothness_charbonnier(flow, image, eps: float = 1e-3) -> float:
    """Charbonnier-smoothed edge-aware smoothness, summed over real forward
    differences only and mean-normalized over grid positions."""
    wx, wy = _edge_weights(image)
    return _smt_value(_flow_array(flow), wx, wy, eps)


def _smoothness_gradient(flow, image, eps: float) -> np.ndarray:
    wx, wy = _edge_weights(image)
    return _smt_grad(_flow_array(flow), wx, wy, eps)


def tv_charbonnier(x, eps: float = 1e-3) -> float:
    """Charbonnier-smoothed isotropic TV, mean-normalized over grid positions."""
    a = _image_array(x)
    dx = np.zeros_like(a)
    dy = np.zeros_like(a)
    dx[:, :-1, :] = a[:, 1:, :] - a[:, :-1, :]
    dy[:-1, :, :] = a[1:, :, :] - a[:-1, :, :]
    mag = np.sqrt((dx * dx).sum(axis=2) + (dy * dy).sum(axis=2) + eps * eps)
    return float(mag.mean())


def _tv_gradient(x, eps: float) -> np.ndarray:
    a = _image_array(x)
    dx = np.zeros_like(a)
    dy = np.zeros_like(a)
    dx[:, :-1, :] = a[:, 1:, :] - a[:, :-1, :]
    dy[:-1, :, :] = a[1:, :, :] - a[:-1, :, :]
    mag = np.sqrt((dx * dx).sum(axis=2) + (dy * dy).sum(axis=2) + eps * eps)[:, :, None]
    px = dx / mag
    py = dy / mag
    grad = -(px + py)
    grad[:, 1:, :] += px[:, :-1, :]
    grad[1:, :, :] += py[:-1, :, :]
    grad /= a.shape[0] * a.shape[1]
    return grad


def loss_gradient(term: LossTerm, eps: float = 1e-3, **inputs) -> np.ndarray:
    """Analytic gradient of a differentiable term.

    CHARBONNIER_PHOTO(src, flow, target) and SMOOTHNESS(flow, image) return
    (H, W, 2) gradients w.r.t. the flow; TV(frame) returns an (H, W, C)
    gradient w.r.t. the frame.
    """
    if term is LossTerm.CHARBONNIER_PHOTO:
        return _photometric_gradient(inputs["src"], inputs["flow"], inputs["target"], eps)
    if term is LossTerm.SMOOTHNESS:
        return _smoothness_gradient(inputs["flow"], inputs["image"], eps)
    if term is LossTerm.TV:
        return _tv_gradient(inputs["frame"], eps)
    raise ValueError(f"unsupported loss term {term!r}")
