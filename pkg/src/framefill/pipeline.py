"""Per-frame copy-and-paste completion with temporal coherence.

Frames are completed in temporal order: references are affinely aligned to
the target, encoded, matched, and their content pasted into the hole;
never-visible pixels get diffusion fill. When reference update is on, a
completed frame replaces its original in the working clip (with its mask
zeroed), so later targets copy from already-completed content — this is
what propagates information through the clip. A bidirectional run repeats
the process in reverse order on a fresh copy of the input and blends the
two passes frame by frame.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .align import (
    AffineParams, AlignConfig, alignment_objective, estimate_affine,
    warp_affine,
)
from .errors import AlignmentFailure
from .features import EncoderSpec, encode, normalize_features
from .matcher import SOFTMAX_MODES, MatchInput, match_context
from .media import (
    Frame, HoleMask, VideoClip, VisibilityMap, downsample_visibility,
    mask_to_visibility,
)
from .paste import PasteInput, composite_paste, diffusion_fill, upsample_weights


@dataclass(frozen=True)
class InpaintConfig:
    """Reference selection, alignment, encoder, and blending settings."""

    max_refs: int = 10
    ref_stride: int | None = None  # None = spread references automatically
    encoder: EncoderSpec = EncoderSpec()
    align: AlignConfig = AlignConfig()
    bidirectional: bool = True
    reference_update: bool = True
    softmax_mode: str = "masked"

    def __post_init__(self) -> None:
        if self.max_refs < 1:
            raise ValueError("max_refs must be >= 1")
        if self.ref_stride is not None and self.ref_stride < 1:
            raise ValueError("ref_stride must be >= 1")
        if self.softmax_mode not in SOFTMAX_MODES:
            raise ValueError(f"unknown softmax mode {self.softmax_mode!r}")


@dataclass
class RefReport:
    ref_index: int
    theta: float
    align_objective: float


@dataclass
class FrameReport:
    frame: int
    refs: list[RefReport] = field(default_factory=list)
    invisible_fraction: float = 0.0
    ms_align: float = 0.0
    ms_match: float = 0.0
    ms_paste: float = 0.0
    # Full-resolution never-visible mask, for debug image export.
    c_mask: np.ndarray | None = field(default=None, repr=False)


@dataclass
class PipelineReport:
    """Per-frame diagnostics for the forward (and optional reverse) pass.

    Timing columns are wall-clock and therefore not deterministic; all
    other columns are.
    """

    forward: list[FrameReport] = field(default_factory=list)
    reverse: list[FrameReport] = field(default_factory=list)

    CSV_HEADER = ("frame,ref_index,theta,align_objective,"
                  "invisible_fraction,ms_align,ms_match,ms_paste")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_HEADER.split(","))
        for entry in (*self.forward, *self.reverse):
            rows = entry.refs or [RefReport(-1, 0.0, 0.0)]
            for r in rows:
                writer.writerow([
                    entry.frame, r.ref_index,
                    f"{r.theta:.6f}", f"{r.align_objective:.6f}",
                    f"{entry.invisible_fraction:.6f}",
                    f"{entry.ms_align:.3f}", f"{entry.ms_match:.3f}",
                    f"{entry.ms_paste:.3f}",
                ])
        return buf.getvalue()

    def save_csv(self, path: Path) -> None:
        Path(path).write_text(self.to_csv())


def select_references(n: int, t: int, cfg: InpaintConfig = InpaintConfig()) -> list[int]:
    """Deterministically pick reference frame indices for target t.

    All other frames are used when they fit within max_refs; otherwise the
    non-target indices are split into max_refs even chunks and the last
    index of each chunk is taken, which bounds the gap between consecutive
    picks by ceil((n-1)/max_refs) (plus one when the target splits the
    range).
    """
    if not 0 <= t < n:
        raise ValueError(f"target index {t} out of range for {n} frames")
    others = [i for i in range(n) if i != t]
    if cfg.ref_stride is not None:
        picked = [i for i in others if i % cfg.ref_stride == 0]
        return picked[:cfg.max_refs]
    m = len(others)
    if m <= cfg.max_refs:
        return others
    count = cfg.max_refs
    positions = [-(-(k + 1) * m // count) - 1 for k in range(count)]
    return [others[p] for p in positions]


def blend_passes(forward: Frame, reverse: Frame, t: int, n: int) -> Frame:
    """Convex blend of the two passes: forward * t/n + reverse * (1 - t/n).

    Uses 1-based t so t = n returns the forward frame bit-exactly; the
    reverse weight is computed as 1 - t/n so the weights sum to 1 exactly.
    """
    if not 1 <= t <= n:
        raise ValueError(f"frame index {t} out of range [1, {n}]")
    if forward.data.shape != reverse.data.shape:
        raise ValueError("pass outputs must share dimensions")
    wf = t / n
    return Frame(forward.data * wf + reverse.data * (1.0 - wf))


def _complete_frame(frames: list[Frame], masks: list[HoleMask], t: int,
                    cfg: InpaintConfig,
                    init_cache: dict[int, AffineParams] | None = None,
                    ) -> tuple[Frame, FrameReport]:
    """Complete one target frame against the current working clip."""
    target = frames[t]
    hole = masks[t]
    report = FrameReport(frame=t)
    if hole.is_empty():
        report.c_mask = np.zeros_like(hole.data, dtype=np.float64)
        return target, report

    v_t = mask_to_visibility(hole)
    hole_px = int(hole.data.sum())

    t0 = time.perf_counter()
    warped_refs: list[Frame] = []
    warped_vis: list[VisibilityMap] = []
    for r in select_references(len(frames), t, cfg):
        init = None
        if cfg.align.init == "previous" and init_cache is not None:
            init = init_cache.get(r)
        v_r = mask_to_visibility(masks[r])
        try:
            a = estimate_affine(target, v_t, frames[r], v_r, cfg.align, init=init)
            obj = alignment_objective(target, v_t, frames[r], v_r, a,
                                      cfg.align.charbonnier_eps)
        except AlignmentFailure:
            # Unusable reference: drop it and rely on the others.
            continue
        if init_cache is not None:
            init_cache[r] = a
        wf, wv = warp_affine(frames[r], v_r, a, binarize=True)
        warped_refs.append(wf)
        warped_vis.append(wv)
        report.refs.append(RefReport(r, 0.0, obj))
    report.ms_align = (time.perf_counter() - t0) * 1e3

    if not warped_refs:
        # No reference survived: synthesize the whole hole.
        t2 = time.perf_counter()
        out = diffusion_fill(target, hole.data)
        report.ms_paste = (time.perf_counter() - t2) * 1e3
        report.invisible_fraction = 1.0
        report.c_mask = hole.data.astype(np.float64)
        return out, report

    t1 = time.perf_counter()
    stride = cfg.encoder.stride
    f_t = normalize_features(encode(target, hole, cfg.encoder))
    ref_feats = []
    joint_vis = []
    ref_vis_lo = []
    for wf, wv in zip(warped_refs, warped_vis):
        wmask = HoleMask((wv.data < 0.5).astype(np.uint8))
        ref_feats.append(normalize_features(encode(wf, wmask, cfg.encoder)))
        joint = VisibilityMap(v_t.data * wv.data, binary=True)
        joint_vis.append(downsample_visibility(joint, stride))
        ref_vis_lo.append(downsample_visibility(wv, stride))
    result = match_context(
        MatchInput(f_t, tuple(ref_feats), tuple(joint_vis), tuple(ref_vis_lo)),
        mode=cfg.softmax_mode,
    )
    for rep, theta in zip(report.refs, result.theta):
        rep.theta = theta
    report.ms_match = (time.perf_counter() - t1) * 1e3

    t2 = time.perf_counter()
    weights, _ = upsample_weights(
        result.c_match, warped_vis, stride,
        mask_invisible=(cfg.softmax_mode == "masked"),
    )
    pasted, c_mask_full = composite_paste(
        PasteInput(target, hole, tuple(warped_refs), tuple(warped_vis),
                   result.c_match, stride),
        weights,
    )
    fill = (c_mask_full > 0) & hole.data.astype(bool)
    out = diffusion_fill(pasted, fill) if fill.any() else pasted
    report.ms_paste = (time.perf_counter() - t2) * 1e3
    report.invisible_fraction = float(fill.sum() / hole_px) if hole_px else 0.0
    report.c_mask = c_mask_full
    return out, report


def inpaint_frame(clip: VideoClip, t: int, cfg: InpaintConfig = InpaintConfig()
                  ) -> tuple[Frame, FrameReport]:
    """Complete a single frame of the clip against its other frames.

    Non-hole pixels of the output equal the input exactly; the hole is
    filled from aligned references and diffusion.
    """
    if not 0 <= t < clip.n:
        raise ValueError(f"frame index {t} out of range")
    return _complete_frame(list(clip.frames), list(clip.masks), t, cfg)


def _run_pass(clip: VideoClip, cfg: InpaintConfig, reverse: bool
              ) -> tuple[list[Frame], list[FrameReport]]:
    frames = list(clip.frames)
    masks = list(clip.masks)
    completed: list[Frame | None] = [None] * clip.n
    reports = []
    init_cache: dict[int, AffineParams] = {}
    order = range(clip.n - 1, -1, -1) if reverse else range(clip.n)
    empty = HoleMask(np.zeros((clip.height, clip.width), dtype=np.uint8))
    for t in order:
        out, rep = _complete_frame(frames, masks, t, cfg, init_cache)
        completed[t] = out
        reports.append(rep)
        if cfg.reference_update:
            frames[t] = out
            masks[t] = empty
    return completed, reports  # type: ignore[return-value]


def inpaint_video(clip: VideoClip, cfg: InpaintConfig = InpaintConfig(),
                  threads: int = 1) -> tuple[VideoClip, PipelineReport]:
    """Complete every frame of the clip.

    Runs a forward pass (first to last) and, when bidirectional is on, an
    independent reverse pass starting again from the original input; the
    two are blended per frame with blend_passes. The output clip carries
    all-zero masks.

    The forward and reverse passes are independent and run concurrently
    when threads >= 2; results do not depend on the thread count.
    """
    report = PipelineReport()
    if cfg.bidirectional and clip.n > 1:
        if threads >= 2:
            with ThreadPoolExecutor(max_workers=2) as pool:
                fut_f = pool.submit(_run_pass, clip, cfg, False)
                fut_r = pool.submit(_run_pass, clip, cfg, True)
                fwd_frames, report.forward = fut_f.result()
                rev_frames, report.reverse = fut_r.result()
        else:
            fwd_frames, report.forward = _run_pass(clip, cfg, False)
            rev_frames, report.reverse = _run_pass(clip, cfg, True)
        n = clip.n
        out_frames = [
            blend_passes(fwd_frames[i], rev_frames[i], i + 1, n)
            for i in range(n)
        ]
    else:
        out_frames, report.forward = _run_pass(clip, cfg, False)

    empty = HoleMask(np.zeros((clip.height, clip.width), dtype=np.uint8))
    out = VideoClip(tuple(out_frames), tuple(empty for _ in out_frames))
    return out, report
