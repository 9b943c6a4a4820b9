"""Synthesize (holed clip, ground-truth clip) pairs from still images.

A background sequence comes from one source image: a random crop followed
by a compounding random walk of small affine steps, so consecutive frames
are exactly affine-related within the shared viewport. A hole sequence
comes from one object mask, shrunk, dropped at a random position, and
walked with random translations/rotations. Compositing zeroes the hole
pixels of the input frames so nothing can leak from the ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .align import AffineParams, compose_affine, sample_affine
from .errors import InputDataError, NumericFailure
from .media import Frame, HoleMask, VideoClip

_VIEWPORT_ATTEMPTS = 100


@dataclass(frozen=True)
class SynthParams:
    """Clip size and per-step transform ranges for the random walk."""

    n_frames: int = 5
    out_size: int = 256
    rotation_deg: float = 2.0
    shear_deg: float = 2.0
    scale_pct: float = 2.0
    translation_px: float = 5.0
    mask_scale_max: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.out_size < 8:
            raise ValueError("out_size must be >= 8")
        if not 0 < self.mask_scale_max <= 1:
            raise ValueError("mask_scale_max must be in (0, 1]")
        for name in ("rotation_deg", "shear_deg", "scale_pct", "translation_px"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def _random_step(p: SynthParams, rng: np.random.Generator) -> AffineParams:
    """One i.i.d. walk step: rotation * shear * scale plus translation."""
    rot = math.radians(rng.uniform(-p.rotation_deg, p.rotation_deg))
    shear = math.tan(math.radians(rng.uniform(-p.shear_deg, p.shear_deg)))
    scale = 1.0 + rng.uniform(-p.scale_pct, p.scale_pct) / 100.0
    tx, ty = rng.uniform(-p.translation_px, p.translation_px, 2)
    c, s = math.cos(rot), math.sin(rot)
    m = np.array([[c, -s], [s, c]]) @ np.array([[1.0, shear], [0.0, 1.0]]) * scale
    half = (p.out_size - 1) / 2.0
    return AffineParams(m[0, 0], m[0, 1], m[1, 0], m[1, 1], tx / half, ty / half)


def _crop_to_source(r0: int, c0: int, size: int, src_h: int, src_w: int) -> AffineParams:
    """Normalized crop coordinates to normalized source coordinates."""
    ax = (size - 1) / (src_w - 1)
    ay = (size - 1) / (src_h - 1)
    bx = (2 * c0 + size - 1) / (src_w - 1) - 1.0
    by = (2 * r0 + size - 1) / (src_h - 1) - 1.0
    return AffineParams(ax, 0.0, 0.0, ay, bx, by)


def _viewport_inside(total: AffineParams) -> bool:
    corners = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    mapped = total.apply(corners)
    return bool((np.abs(mapped) <= 1.0).all())


def synth_background(source: Frame, p: SynthParams,
                     rng: np.random.Generator) -> list[Frame]:
    """Build an affinely consistent frame sequence from one still image.

    Frame 1 is a random out_size crop; frame k+1 samples the source
    through the composition of k walk steps applied to the crop viewport.
    The crop origin is resampled (up to 100 times) until every frame's
    viewport stays inside the source.
    """
    size = p.out_size
    if source.height < size or source.width < size:
        raise InputDataError(
            f"source image {source.height}x{source.width} smaller than "
            f"out_size {size}"
        )
    steps = [_random_step(p, rng) for _ in range(p.n_frames - 1)]
    walks = [AffineParams.identity()]
    for step in steps:
        walks.append(compose_affine(step, walks[-1]))

    for _ in range(_VIEWPORT_ATTEMPTS):
        r0 = int(rng.integers(0, source.height - size + 1))
        c0 = int(rng.integers(0, source.width - size + 1))
        crop = _crop_to_source(r0, c0, size, source.height, source.width)
        totals = [compose_affine(crop, walk) for walk in walks]
        if all(_viewport_inside(t) for t in totals):
            break
    else:
        raise NumericFailure(
            "no crop keeps all transformed viewports inside the source "
            f"after {_VIEWPORT_ATTEMPTS} attempts"
        )

    frames = [Frame(source.data[r0:r0 + size, c0:c0 + size])]
    for total in totals[1:]:
        data, _ = sample_affine(source.data, total, out_hw=(size, size))
        frames.append(Frame(data))
    return frames


def _rasterize_mask(obj: np.ndarray, scale: float, angle: float,
                    center: np.ndarray, size: int) -> HoleMask:
    """Place the object mask at (center, angle, scale) on a size^2 canvas.

    Sampling positions outside the object raster read as 0; the warped
    values are binarized at 0.5.
    """
    bh, bw = obj.shape
    oc = np.array([(bw - 1) / 2.0, (bh - 1) / 2.0])
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, s], [-s, c]]) / scale  # output px -> object px

    half = (size - 1) / 2.0
    mh = rot * half
    t = oc - rot @ center
    # Express in normalized-in/normalized-out form for sample_affine.
    hx = (bw - 1) / 2.0 if bw > 1 else 1.0
    hy = (bh - 1) / 2.0 if bh > 1 else 1.0
    a = AffineParams(
        mh[0, 0] / hx, mh[0, 1] / hx, mh[1, 0] / hy, mh[1, 1] / hy,
        (mh[0, 0] + mh[0, 1] + t[0]) / hx - 1.0,
        (mh[1, 0] + mh[1, 1] + t[1]) / hy - 1.0,
    )
    vals, inb = sample_affine(obj.astype(np.float64), a, out_hw=(size, size))
    return HoleMask(((vals * inb) >= 0.5).astype(np.uint8))


def synth_mask_sequence(object_mask: HoleMask, p: SynthParams,
                        rng: np.random.Generator) -> list[HoleMask]:
    """Animate one object mask into a hole sequence.

    The object is tightly cropped, shrunk so its bounding box fits within
    mask_scale_max * out_size, dropped at a random position, then walked
    with per-frame random translations and rotations. The center is
    clamped so the mask always stays inside the frame; each frame is
    rasterized from the original object and binarized at 0.5.
    """
    if object_mask.is_empty():
        raise InputDataError("object mask is empty")
    ys, xs = np.nonzero(object_mask.data)
    obj = object_mask.data[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
    bh, bw = obj.shape

    size = p.out_size
    cap = p.mask_scale_max * size
    scale = cap / max(bh, bw) * rng.uniform(0.5, 1.0)
    scale = max(scale, 3.0 / min(bh, bw))  # keep at least a few pixels

    radius = scale * math.hypot(bh, bw) / 2.0
    lo = min(radius, (size - 1) / 2.0)
    hi = max(size - 1 - radius, (size - 1) / 2.0)
    center = np.array([rng.uniform(lo, hi), rng.uniform(lo, hi)])
    angle = 0.0

    masks = []
    for k in range(p.n_frames):
        if k > 0:
            center = center + rng.uniform(-p.translation_px, p.translation_px, 2)
            angle += math.radians(rng.uniform(-p.rotation_deg, p.rotation_deg))
            center = np.clip(center, lo, hi)
        masks.append(_rasterize_mask(obj, scale, angle, center, size))
    return masks


def composite_holes(bg: list[Frame], masks: list[HoleMask]) -> tuple[VideoClip, VideoClip]:
    """Zero the hole pixels of the background to form the input clip.

    Returns (input, truth): the input carries the masks with hole pixels
    set to 0; the truth is the untouched background with all-zero masks.
    """
    if len(bg) != len(masks):
        raise ValueError("background/mask sequence length mismatch")
    if not bg:
        raise ValueError("empty sequence")
    holed = []
    empties = []
    for f, m in zip(bg, masks):
        if (m.height, m.width) != (f.height, f.width):
            raise ValueError("mask size must match the frame size")
        holed.append(Frame(f.data * (1.0 - m.data[..., None])))
        empties.append(HoleMask(np.zeros_like(m.data)))
    return (
        VideoClip(tuple(holed), tuple(masks)),
        VideoClip(tuple(bg), tuple(empties)),
    )
