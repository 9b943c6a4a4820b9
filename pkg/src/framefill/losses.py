"""Training objective components as verifiable pure functions.

Every term reduces to a per-pixel (or per-element) mean rather than a raw
sum, so the relative weights keep their meaning across resolutions. No
training loop lives here; the functions exist so the objective is
checkable against hand and brute-force computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NumericFailure
from .features import EncoderSpec, FeatureMap, encode
from .media import Frame, HoleMask


@dataclass(frozen=True)
class LossWeights:
    """Relative weights of the seven loss terms."""

    align: float = 2.0
    hole_visible: float = 10.0
    hole_invisible: float = 20.0
    non_hole: float = 6.0
    perceptual: float = 0.01
    style: float = 24.0
    tv: float = 0.1

    def __post_init__(self) -> None:
        for name in ("align", "hole_visible", "hole_invisible", "non_hole",
                     "perceptual", "style", "tv"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be >= 0")


@dataclass(frozen=True)
class LossComponents:
    """The seven scalar loss values entering the weighted total."""

    align: float = 0.0
    hole_visible: float = 0.0
    hole_invisible: float = 0.0
    non_hole: float = 0.0
    perceptual: float = 0.0
    style: float = 0.0
    tv: float = 0.0


@dataclass(frozen=True)
class FeatureBackbone:
    """Ordered feature-stage extractors for perceptual/style losses.

    Stages must be deterministic and strictly decrease resolution.
    """

    stages: tuple[Callable[[Frame], FeatureMap], ...]

    def __post_init__(self) -> None:
        stages = tuple(self.stages)
        if len(stages) < 1:
            raise ValueError("backbone needs at least one stage")
        object.__setattr__(self, "stages", stages)

    @property
    def depth(self) -> int:
        return len(self.stages)


def identity_backbone() -> FeatureBackbone:
    """Single stage returning the frame itself as a 3-channel feature map."""
    return FeatureBackbone((lambda fr: FeatureMap(fr.data, stride=1),))


def default_backbone(seed: int = 0, channels: int = 32) -> FeatureBackbone:
    """Seeded-conv encoder evaluated at strides 2, 4, and 8."""
    def stage(stride: int) -> Callable[[Frame], FeatureMap]:
        spec = EncoderSpec(kind="seeded-conv", stride=stride,
                           channels=channels, seed=seed,
                           layers=int(math.log2(stride)) + 1)

        def run(fr: Frame) -> FeatureMap:
            empty = HoleMask(np.zeros((fr.height, fr.width), dtype=np.uint8))
            return encode(fr, empty, spec)

        return run

    return FeatureBackbone(tuple(stage(s) for s in (2, 4, 8)))


def region_losses(pred: Frame, truth: Frame, hole: HoleMask,
                  c_mask_fullres: np.ndarray,
                  paper_literal: bool = False) -> tuple[float, float, float]:
    """Reconstruction error split by region.

    Per pixel the residual is the channel-summed absolute difference; each
    term is the mean of that field gated by its region weight over all
    pixels. Regions: hole-and-recoverable M*(1-C), hole-and-never-visible
    M*C, and non-hole (1-M), with C the full-resolution never-visible
    mask. `paper_literal` swaps the two hole gates to match the printed
    form of the source equations (whose labels disagree with the stated
    meaning of C); the default follows the semantics.
    """
    if pred.data.shape != truth.data.shape:
        raise ValueError("pred/truth shape mismatch")
    c = np.asarray(c_mask_fullres, dtype=np.float64)
    if c.shape != (pred.height, pred.width) or (hole.height, hole.width) != (pred.height, pred.width):
        raise ValueError("mask shapes must match the frames")
    if c.min() < 0 or c.max() > 1:
        raise ValueError("c_mask values must lie in [0, 1]")
    absdiff = np.abs(pred.data - truth.data).sum(axis=2)
    m = hole.data.astype(np.float64)
    vis_gate, invis_gate = (c, 1.0 - c) if paper_literal else (1.0 - c, c)
    l_vis = float((m * vis_gate * absdiff).mean())
    l_invis = float((m * invis_gate * absdiff).mean())
    l_nonhole = float(((1.0 - m) * absdiff).mean())
    return l_vis, l_invis, l_nonhole


def gram_matrix(f: FeatureMap) -> np.ndarray:
    """Channel covariance G = F^T F / (C*h*w), F the (h*w) x C unrolling."""
    c = f.channels
    flat = f.data.reshape(-1, c)
    return flat.T @ flat / (c * f.h * f.w)


def perceptual_style_loss(pred_comp: Frame, truth: Frame,
                          backbone: FeatureBackbone) -> tuple[float, float]:
    """Stage-averaged feature L1 and gram-matrix L1 distances."""
    l_perc = 0.0
    l_style = 0.0
    for stage in backbone.stages:
        fp = stage(pred_comp)
        ft = stage(truth)
        l_perc += float(np.abs(fp.data - ft.data).mean())
        l_style += float(np.abs(gram_matrix(fp) - gram_matrix(ft)).mean())
    p = backbone.depth
    return l_perc / p, l_style / p


def tv_loss(frame: Frame) -> float:
    """Anisotropic total variation: mean |dx| plus mean |dy| of forward
    differences (boundary rows/columns excluded by construction)."""
    d = frame.data
    dh = np.abs(d[:, 1:] - d[:, :-1])
    dv = np.abs(d[1:] - d[:-1])
    return float(dh.mean() + dv.mean())


def total_loss(components: LossComponents, w: LossWeights = LossWeights()) -> float:
    """Weighted sum of the seven components."""
    vals = (components.align, components.hole_visible,
            components.hole_invisible, components.non_hole,
            components.perceptual, components.style, components.tv)
    if not all(math.isfinite(v) for v in vals):
        raise NumericFailure("loss components must be finite")
    return (w.align * components.align
            + w.hole_visible * components.hole_visible
            + w.hole_invisible * components.hole_invisible
            + w.non_hole * components.non_hole
            + w.perceptual * components.perceptual
            + w.style * components.style
            + w.tv * components.tv)
