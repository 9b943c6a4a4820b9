"""Quantitative evaluation: PSNR, SSIM, temporal profiles, flicker.

PSNR uses peak 1.0 (frames live in [0, 1]) and caps at 99 dB so identical
inputs do not produce infinities in CSV output. SSIM is the standard
single-scale variant: 11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03,
per channel then averaged over valid window positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .align import (
    AffineParams, AlignConfig, alignment_objective, estimate_affine,
    sample_affine, warp_affine,
)
from .errors import AlignmentFailure
from .media import Frame, HoleMask, VideoClip, VisibilityMap

PSNR_CAP_DB = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

# Alignment inside flicker_metric is kept only when it beats the identity
# objective by this factor; unalignable content (noise, flat frames) would
# otherwise be warped by spurious sub-pixel drift and read as smoother
# than it is.
_FLICKER_ALIGN_GAIN = 0.8


def psnr(a: Frame, b: Frame, region: HoleMask | np.ndarray | None = None) -> float:
    """Peak signal-to-noise ratio in dB, optionally restricted to a region."""
    if a.data.shape != b.data.shape:
        raise ValueError("frames must share dimensions")
    diff2 = (a.data - b.data) ** 2
    if region is not None:
        r = region.data if isinstance(region, HoleMask) else np.asarray(region)
        if r.shape != diff2.shape[:2]:
            raise ValueError("region must match the frame resolution")
        sel = r.astype(bool)
        if not sel.any():
            raise ValueError("region is empty")
        mse = float(diff2[sel].mean())
    else:
        mse = float(diff2.mean())
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_kernel1d(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _filter_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation of a 2-D array with kernel k x k."""
    n = k.size
    h, w = img.shape
    tmp = np.zeros((h, w - n + 1))
    for i in range(n):
        tmp += k[i] * img[:, i:i + w - n + 1]
    out = np.zeros((h - n + 1, w - n + 1))
    for i in range(n):
        out += k[i] * tmp[i:i + h - n + 1]
    return out


def ssim(a: Frame, b: Frame) -> float:
    """Single-scale structural similarity between two frames."""
    if a.data.shape != b.data.shape:
        raise ValueError("frames must share dimensions")
    if min(a.height, a.width) < SSIM_WINDOW:
        raise ValueError(f"image too small for an {SSIM_WINDOW}x{SSIM_WINDOW} window")
    k = _gaussian_kernel1d(SSIM_WINDOW, SSIM_SIGMA)
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    vals = []
    for ch in range(3):
        x = a.data[..., ch]
        y = b.data[..., ch]
        mx = _filter_valid(x, k)
        my = _filter_valid(y, k)
        vx = _filter_valid(x * x, k) - mx * mx
        vy = _filter_valid(y * y, k) - my * my
        cxy = _filter_valid(x * y, k) - mx * my
        num = (2 * mx * my + c1) * (2 * cxy + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        vals.append(float((num / den).mean()))
    return float(np.mean(vals))


def temporal_profile(clip: VideoClip, row: int) -> np.ndarray:
    """Stack one fixed pixel row from every frame into an (N, W, 3) image.

    Streaks in the stack reveal temporal flicker; a static clip gives
    identical rows.
    """
    if not 0 <= row < clip.height:
        raise ValueError(f"row {row} out of range for height {clip.height}")
    return np.stack([f.data[row] for f in clip.frames], axis=0)


def flicker_metric(clip: VideoClip, region_masks: Sequence[HoleMask],
                   align_cfg: AlignConfig | None = None) -> float:
    """Mean temporal standard deviation over a region after alignment.

    Every frame is registered to the first frame so camera motion is not
    counted as flicker; an estimated transform is used only when it beats
    the identity-alignment objective by a clear margin, otherwise the
    frame is left unwarped. The metric averages the per-pixel sample
    standard deviation (over the frames where the warped pixel is
    visible) across the union of the warped region masks.
    """
    if len(region_masks) != clip.n:
        raise ValueError("one region mask per frame required")
    cfg = align_cfg if align_cfg is not None else AlignConfig()
    first = clip.frames[0]
    ones = VisibilityMap(np.ones((clip.height, clip.width)), binary=True)

    stack = [first.data]
    vis_stack = [np.ones((clip.height, clip.width))]
    union = region_masks[0].data.astype(bool)
    for t in range(1, clip.n):
        frame = clip.frames[t]
        transform = AffineParams.identity()
        try:
            est = estimate_affine(first, ones, frame, ones, cfg)
            if (alignment_objective(first, ones, frame, ones, est)
                    < _FLICKER_ALIGN_GAIN
                    * alignment_objective(first, ones, frame, ones, transform)):
                transform = est
        except AlignmentFailure:
            pass
        warped, wvis = warp_affine(frame, ones, transform)
        wregion, inb = sample_affine(
            region_masks[t].data.astype(np.float64), transform
        )
        union |= (wregion * inb >= 0.5)
        stack.append(warped.data)
        vis_stack.append(wvis.data)

    if not union.any():
        raise ValueError("region union is empty")
    data = np.stack(stack, axis=0)[:, union]       # (N, P, 3)
    vis = np.stack(vis_stack, axis=0)[:, union]    # (N, P)
    # Center on the first frame so a static clip scores exactly zero
    # (variance is shift invariant).
    data = data - data[:1]
    w = vis[..., None]
    n = w.sum(axis=0)
    mean = (data * w).sum(axis=0) / np.maximum(n, 1.0)
    var = ((data - mean) ** 2 * w).sum(axis=0) / np.maximum(n - 1.0, 1.0)
    var = np.where(n >= 2, var, 0.0)
    return float(np.sqrt(var).mean())
