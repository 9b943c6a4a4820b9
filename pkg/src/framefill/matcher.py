"""Context matching: decide, per feature cell, how much each aligned
reference contributes when filling the target.

Each reference gets a global similarity score against the target over
their jointly visible cells. Cell weights come from a softmax over that
score, restricted to references actually visible at the cell (masked
mode); references invisible at a cell get weight exactly zero, and cells
visible in no reference are flagged in an output mask so a later stage can
synthesize them. A `normal` mode normalizes over all references instead,
kept only for ablation comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import FeatureMap
from .media import VisibilityMap, save_gray

SOFTMAX_MODES = ("masked", "normal")


def _ordered_sum(stack: np.ndarray) -> np.ndarray:
    """Sum along axis 0 in sorted-value order.

    Makes the result independent of how the references are listed, so
    permuting the reference list leaves every aggregate bit-identical.
    """
    return np.sort(stack, axis=0).sum(axis=0)


@dataclass(frozen=True)
class MatchInput:
    """Normalized target/reference features with feature-resolution visibility.

    `joint_visibility` is the product of target and warped-reference
    visibility (drives the similarity scores); `ref_visibility` is the
    warped-reference visibility alone (drives the per-cell weights).
    """

    target_features: FeatureMap
    ref_features: tuple[FeatureMap, ...]
    joint_visibility: tuple[VisibilityMap, ...]
    ref_visibility: tuple[VisibilityMap, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ref_features", tuple(self.ref_features))
        object.__setattr__(self, "joint_visibility", tuple(self.joint_visibility))
        object.__setattr__(self, "ref_visibility", tuple(self.ref_visibility))
        r = len(self.ref_features)
        if len(self.joint_visibility) != r or len(self.ref_visibility) != r:
            raise ValueError("per-reference lists must have equal length")
        hw = (self.target_features.h, self.target_features.w)
        for f in self.ref_features:
            if (f.h, f.w) != hw or f.channels != self.target_features.channels:
                raise ValueError("reference features must match target shape")
        for v in (*self.joint_visibility, *self.ref_visibility):
            if (v.height, v.width) != hw:
                raise ValueError("visibility maps must match feature resolution")

    @property
    def n_refs(self) -> int:
        return len(self.ref_features)


@dataclass(frozen=True)
class MatchResult:
    """Per-reference weights and their aggregate.

    In masked mode the weights at each cell sum to exactly 1 where at
    least one reference is visible and 0 otherwise, and `c_mask` is the
    complement indicator of that sum.
    """

    theta: tuple[float, ...]
    usable: tuple[bool, ...]
    c_match: tuple[np.ndarray, ...]
    c_out: FeatureMap
    c_mask: np.ndarray


def global_similarity(f_t: FeatureMap, f_r: FeatureMap,
                      v: VisibilityMap) -> tuple[float, bool]:
    """Visibility-averaged cosine similarity between two normalized maps.

    Returns (theta, usable); a reference with no jointly visible cells
    scores 0 and is flagged unusable.
    """
    if (f_t.h, f_t.w) != (f_r.h, f_r.w) or f_t.channels != f_r.channels:
        raise ValueError("feature map shapes must match")
    if (v.height, v.width) != (f_t.h, f_t.w):
        raise ValueError("visibility map must match feature resolution")
    vsum = v.data.sum()
    if vsum <= 0:
        return 0.0, False
    dots = (f_t.data * f_r.data).sum(axis=2)
    return float((v.data * dots).sum() / vsum), True


def saliency(theta: float, v_ref: VisibilityMap) -> np.ndarray:
    """Per-cell copy saliency: the global score gated by visibility."""
    return theta * v_ref.data


def masked_softmax(s: Sequence[np.ndarray], v_ref: Sequence[np.ndarray],
                   mode: str = "masked") -> list[np.ndarray]:
    """Per-cell softmax of saliency maps across references.

    Masked mode normalizes only over references visible at the cell;
    invisible references get exactly 0, and a cell visible in no reference
    gets all zeros. Normal mode (ablation) normalizes over all references,
    including the exp(0) contributions of invisible ones.
    """
    if mode not in SOFTMAX_MODES:
        raise ValueError(f"unknown softmax mode {mode!r}")
    if len(s) != len(v_ref):
        raise ValueError("saliency/visibility list length mismatch")
    if not s:
        return []
    sal = np.stack(s, axis=0)
    vis = np.stack([np.asarray(v) for v in v_ref], axis=0)
    if mode == "masked":
        # Per-cell max over visible references keeps exp() well scaled and
        # makes the weights shift invariant.
        shifted = np.where(vis > 0, sal, -np.inf)
        peak = shifted.max(axis=0, keepdims=True)
        ex = np.where(vis > 0, np.exp(sal - np.where(np.isfinite(peak), peak, 0.0)), 0.0)
    else:
        peak = sal.max(axis=0, keepdims=True)
        ex = np.exp(sal - peak)
    total = _ordered_sum(ex)[None]
    weights = np.divide(ex, total, out=np.zeros_like(ex), where=total > 0)
    return list(weights)


def aggregate(f_refs: Sequence[FeatureMap], c_match: Sequence[np.ndarray],
              v_ref: Sequence[np.ndarray]) -> tuple[FeatureMap, np.ndarray]:
    """Weighted sum of reference features plus the never-visible mask.

    c_out(x,y) = sum_r f_r(x,y) * w_r(x,y); c_mask = 1 - sum_r w_r.
    """
    if not f_refs:
        raise ValueError("aggregate needs at least one reference")
    if not (len(f_refs) == len(c_match) == len(v_ref)):
        raise ValueError("per-reference lists must have equal length")
    hw = (f_refs[0].h, f_refs[0].w)
    for f, w in zip(f_refs, c_match):
        if (f.h, f.w) != hw or np.shape(w) != hw:
            raise ValueError("shape mismatch across references")
    terms = np.stack([f.data * np.asarray(w)[..., None]
                      for f, w in zip(f_refs, c_match)], axis=0)
    wsum = _ordered_sum(np.stack([np.asarray(w) for w in c_match], axis=0))
    return FeatureMap(_ordered_sum(terms), stride=f_refs[0].stride), 1.0 - wsum


def match_context(inp: MatchInput, mode: str = "masked") -> MatchResult:
    """Run the full matching chain: similarity, saliency, softmax, aggregate.

    In masked mode a reference with no jointly visible cells is excluded
    from the softmax entirely rather than merely down-weighted.
    """
    if mode not in SOFTMAX_MODES:
        raise ValueError(f"unknown softmax mode {mode!r}")
    hw = (inp.target_features.h, inp.target_features.w)
    thetas = []
    usable = []
    for f_r, jv in zip(inp.ref_features, inp.joint_visibility):
        th, ok = global_similarity(inp.target_features, f_r, jv)
        thetas.append(th)
        usable.append(ok)

    if inp.n_refs == 0:
        empty = FeatureMap(
            np.zeros((*hw, inp.target_features.channels)),
            stride=inp.target_features.stride,
        )
        return MatchResult((), (), (), empty, np.ones(hw))

    if mode == "masked":
        # Unusable references are dropped before the softmax.
        gate = [np.asarray(v.data) if ok else np.zeros(hw)
                for v, ok in zip(inp.ref_visibility, usable)]
    else:
        gate = [np.asarray(v.data) for v in inp.ref_visibility]

    sal = [saliency(th, v) for th, v in zip(thetas, inp.ref_visibility)]
    weights = masked_softmax(sal, gate, mode=mode)
    c_out, c_mask = aggregate(inp.ref_features, weights, gate)
    if mode == "masked":
        # The weights at a cell sum to 1 exactly when some gated reference
        # is visible and to 0 otherwise, so the never-visible mask is the
        # exact complement indicator (binary, free of rounding residue).
        any_visible = np.any([g > 0 for g in gate], axis=0)
        c_mask = 1.0 - any_visible.astype(np.float64)
    return MatchResult(
        tuple(thetas), tuple(usable), tuple(weights), c_out, c_mask
    )


def dump_weight_map(values: np.ndarray, path: Path) -> None:
    """Export a weight or mask map as a grayscale image (scaled x255)."""
    save_gray(values, path)
