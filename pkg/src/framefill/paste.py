"""Compositing copy weights into the target and synthesizing the rest.

Copy weights computed at feature resolution are upsampled, re-masked by
full-resolution visibility, and renormalized so the pasted content is a
convex combination of aligned references. Pixels visible in no reference
are filled by solving the discrete Laplace equation over the region with
Gauss-Seidel sweeps (plain diffusion stands in for a learned synthesis
stage; the PasteInput contract is the seam where one could slot in).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .media import Frame, HoleMask, VisibilityMap

# Diffusion convergence: max absolute residual of the discrete Laplace
# equation, or the sweep cap, whichever comes first.
DIFFUSION_TOL = 1e-4
DIFFUSION_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class PasteInput:
    """Everything needed to composite one target frame at image resolution."""

    target: Frame
    hole: HoleMask
    warped_refs: tuple[Frame, ...]
    warped_vis: tuple[VisibilityMap, ...]
    c_match_lowres: tuple[np.ndarray, ...]
    stride: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "warped_refs", tuple(self.warped_refs))
        object.__setattr__(self, "warped_vis", tuple(self.warped_vis))
        object.__setattr__(self, "c_match_lowres", tuple(self.c_match_lowres))
        hw = (self.target.height, self.target.width)
        if (self.hole.height, self.hole.width) != hw:
            raise ValueError("hole mask must match the target resolution")
        if not (len(self.warped_refs) == len(self.warped_vis)
                == len(self.c_match_lowres)):
            raise ValueError("per-reference lists must have equal length")
        for f in self.warped_refs:
            if (f.height, f.width) != hw:
                raise ValueError("warped references must match the target resolution")
        for v in self.warped_vis:
            if (v.height, v.width) != hw:
                raise ValueError("warped visibility must match the target resolution")


def _upsample_bilinear(lowres: np.ndarray, stride: int, out_hw: tuple[int, int]) -> np.ndarray:
    """Half-pixel-center bilinear upsampling of a 2-D map by `stride`."""
    h, w = lowres.shape
    oh, ow = out_hw
    ys = np.clip((np.arange(oh) + 0.5) / stride - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(ow) + 0.5) / stride - 0.5, 0.0, w - 1.0)
    y0 = np.minimum(ys.astype(np.intp), h - 2 if h > 1 else 0)
    x0 = np.minimum(xs.astype(np.intp), w - 2 if w > 1 else 0)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    top = lowres[np.ix_(y0, x0)] * (1 - fx) + lowres[np.ix_(y0, x1)] * fx
    bot = lowres[np.ix_(y1, x0)] * (1 - fx) + lowres[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def upsample_weights(c_match: Sequence[np.ndarray],
                     warped_vis: Sequence[VisibilityMap], stride: int,
                     mask_invisible: bool = True) -> tuple[list[np.ndarray], np.ndarray]:
    """Lift feature-resolution copy weights to image resolution.

    Weights are bilinearly upsampled, zeroed where the corresponding
    full-resolution warped visibility is 0, and renormalized per pixel so
    the visible weights sum to 1 (all zero where nothing is visible; if
    upsampling starved every visible reference of weight at a pixel, the
    visible ones share it equally). Also returns the full-resolution
    never-visible mask 1 - sum(weights).

    With mask_invisible=False the raw upsampled weights pass straight
    through; that path exists for the normal-softmax ablation, where
    invisible references keep the share the softmax gave them.
    """
    if len(c_match) != len(warped_vis):
        raise ValueError("weights/visibility list length mismatch")
    if not c_match:
        raise ValueError("upsample_weights needs at least one reference")
    out_hw = (warped_vis[0].height, warped_vis[0].width)
    lh, lw = np.shape(c_match[0])
    if (-(-out_hw[0] // stride), -(-out_hw[1] // stride)) != (lh, lw):
        raise ValueError(
            f"inconsistent stride: low-res {lh}x{lw} does not cover "
            f"{out_hw[0]}x{out_hw[1]} at stride {stride}"
        )

    ups = [_upsample_bilinear(np.asarray(w, dtype=np.float64), stride, out_hw)
           for w in c_match]
    if not mask_invisible:
        total = np.sum(ups, axis=0)
        return ups, np.clip(1.0 - total, 0.0, 1.0)

    vis = [v.data for v in warped_vis]
    gated = [u * v for u, v in zip(ups, vis)]
    total = np.sum(gated, axis=0)
    n_visible = np.sum(vis, axis=0)
    starved = (total <= 0) & (n_visible > 0)
    weights = []
    for g, v in zip(gated, vis):
        w = np.divide(g, total, out=np.zeros_like(g), where=total > 0)
        w = np.where(starved, v / np.maximum(n_visible, 1.0), w)
        weights.append(w)
    c_mask = (n_visible == 0).astype(np.float64)
    return weights, c_mask


def composite_paste(inp: PasteInput,
                    weights_fullres: Sequence[np.ndarray]) -> tuple[Frame, np.ndarray]:
    """Paste weighted reference content into the hole.

    Pixels outside the hole are copied from the target bit-exactly. Hole
    pixels with weight mass get the weighted sum of warped references;
    hole pixels with none are left at 0 and reported in the returned
    full-resolution never-visible mask.
    """
    if len(weights_fullres) != len(inp.warped_refs):
        raise ValueError("one weight map per reference required")
    out = inp.target.data.copy()
    hole = inp.hole.data.astype(bool)
    if not hole.any():
        return Frame(out), np.zeros_like(inp.hole.data, dtype=np.float64)

    h, w = out.shape[:2]
    acc = np.zeros((h, w, 3))
    wsum = np.zeros((h, w))
    for ref, wt in zip(inp.warped_refs, weights_fullres):
        if np.shape(wt) != (h, w):
            raise ValueError("weight map resolution must match the target")
        acc += ref.data * np.asarray(wt)[..., None]
        wsum += wt
    never = hole & (wsum <= 1e-12)
    filled = hole & ~never
    out[filled] = np.clip(acc[filled], 0.0, 1.0)
    out[never] = 0.0
    return Frame(out), never.astype(np.float64)


def _region_neighbors(yy: np.ndarray, xx: np.ndarray, h: int, w: int):
    """4-neighbor index arrays for region pixels, with an in-raster mask."""
    offs = np.array([[-1, 0], [1, 0], [0, -1], [0, 1]])
    ny = yy[:, None] + offs[None, :, 0]
    nx = xx[:, None] + offs[None, :, 1]
    valid = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
    return np.clip(ny, 0, h - 1), np.clip(nx, 0, w - 1), valid


def diffusion_fill(frame: Frame, fill_region: np.ndarray) -> Frame:
    """Fill a region by solving the discrete Laplace equation over it.

    Every filled pixel converges to the mean of its in-raster 4-neighbors
    (Dirichlet boundary from the surrounding known pixels), iterated with
    red-black Gauss-Seidel sweeps until the max residual drops below 1e-4
    or 10,000 sweeps elapse. Updates are convex combinations seeded from
    the boundary mean, so filled values never leave the [min, max] range
    of the boundary values at any sweep. Pixels outside the region are
    untouched; a frame that is entirely fill region becomes 0.5 gray.
    """
    region = np.asarray(fill_region).astype(bool)
    if region.shape != (frame.height, frame.width):
        raise ValueError("fill region must match the frame resolution")
    if not region.any():
        return frame
    if region.all():
        return Frame(np.full_like(frame.data, 0.5))

    arr = frame.data.copy()
    h, w = region.shape
    yy, xx = np.nonzero(region)
    ny, nx, valid = _region_neighbors(yy, xx, h, w)
    known_nb = valid & ~region[ny, nx]
    boundary_vals = arr[ny[known_nb], nx[known_nb]]
    arr[region] = boundary_vals.mean(axis=0)

    counts = valid.sum(axis=1)[:, None].astype(np.float64)
    validf = valid[..., None].astype(np.float64)
    parity = ((yy + xx) % 2) == 0
    groups = (np.nonzero(parity)[0], np.nonzero(~parity)[0])

    for _ in range(DIFFUSION_MAX_SWEEPS):
        for g in groups:
            if g.size == 0:
                continue
            nb = arr[ny[g], nx[g]]
            arr[yy[g], xx[g]] = (nb * validf[g]).sum(axis=1) / counts[g]
        nb = arr[ny, nx]
        resid = (nb * validf).sum(axis=1) / counts - arr[yy, xx]
        if np.abs(resid).max() < DIFFUSION_TOL:
            break
    return Frame(arr)
