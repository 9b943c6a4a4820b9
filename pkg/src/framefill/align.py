"""Masked affine registration of reference frames to a target frame.

A transform maps target coordinates, normalized to [-1, 1] per axis, into
reference coordinates. Normalized coordinates decouple the six parameters
from image resolution, so one parameter vector is shared across all pyramid
levels. Registration minimizes the visibility-masked L1 distance between
target and warped reference, smoothed with a Charbonnier kernel
sqrt(d^2 + eps^2), by Gauss-Newton steps with step acceptance: a step is
kept only if the true objective decreases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import AlignmentFailure, NumericFailure
from .media import Frame, VisibilityMap

# Below this |det| a transform is treated as degenerate.
MIN_ABS_DET = 1e-4

# Warped visibility is binarized at this threshold when a binary map is
# requested: a pixel stays visible only if fully surrounded by visible
# source pixels.
BINARY_VIS_THRESHOLD = 0.999

# Smallest coarsest-level side length the pyramid may reach.
_MIN_PYRAMID_SIDE = 8

_TraceCallback = Callable[[int, int, float], None]


@dataclass(frozen=True)
class AffineParams:
    """Six-parameter transform from target to reference coordinates.

    Applies p_ref = [[a11, a12], [a21, a22]] @ p_tgt + [tx, ty] with both
    endpoints in normalized [-1, 1] coordinates (x along width, y along
    height). Non-degeneracy (|det| >= 1e-4) is enforced at construction.
    """

    a11: float = 1.0
    a12: float = 0.0
    a21: float = 0.0
    a22: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self) -> None:
        vals = (self.a11, self.a12, self.a21, self.a22, self.tx, self.ty)
        if not all(math.isfinite(v) for v in vals):
            raise NumericFailure("affine parameters must be finite")
        if abs(self.det) < MIN_ABS_DET:
            raise NumericFailure(
                f"degenerate affine transform, |det| = {abs(self.det):.3e}"
            )

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    @classmethod
    def identity(cls) -> "AffineParams":
        return cls()

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "AffineParams":
        a11, a12, a21, a22, tx, ty = (float(x) for x in v)
        return cls(a11, a12, a21, a22, tx, ty)

    def as_vector(self) -> np.ndarray:
        return np.array(
            [self.a11, self.a12, self.a21, self.a22, self.tx, self.ty]
        )

    @property
    def linear(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    def apply(self, xy: np.ndarray) -> np.ndarray:
        """Map points of shape (..., 2) in normalized coordinates."""
        xy = np.asarray(xy, dtype=np.float64)
        return xy @ self.linear.T + self.translation

    def is_near_identity(self, tol: float = 1e-4) -> bool:
        return bool(
            np.abs(self.as_vector() - np.array([1, 0, 0, 1, 0, 0])).max() < tol
        )


@dataclass(frozen=True)
class AlignConfig:
    """Settings for the coarse-to-fine registration solver."""

    pyramid_levels: int = 4
    max_iters_per_level: int = 100
    tol: float = 1e-5
    charbonnier_eps: float = 1e-3
    init: str = "previous"  # "previous" | "identity"

    def __post_init__(self) -> None:
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.max_iters_per_level < 1:
            raise ValueError("max_iters_per_level must be >= 1")
        if self.tol <= 0 or self.charbonnier_eps <= 0:
            raise ValueError("tol and charbonnier_eps must be positive")
        if self.init not in ("previous", "identity"):
            raise ValueError(f"unknown init policy {self.init!r}")


def compose_affine(a: AffineParams, b: AffineParams) -> AffineParams:
    """Composition applying b first: result(p) = a(b(p))."""
    m = a.linear @ b.linear
    t = a.linear @ b.translation + a.translation
    return AffineParams(m[0, 0], m[0, 1], m[1, 0], m[1, 1], t[0], t[1])


def invert_affine(a: AffineParams) -> AffineParams:
    """Inverse transform; compose_affine(a, invert_affine(a)) is identity."""
    det = a.det
    if abs(det) < MIN_ABS_DET:
        raise NumericFailure(f"cannot invert degenerate transform, |det| = {abs(det):.3e}")
    inv = np.array([[a.a22, -a.a12], [-a.a21, a.a11]]) / det
    t = -inv @ a.translation
    return AffineParams(inv[0, 0], inv[0, 1], inv[1, 0], inv[1, 1], t[0], t[1])


def _axis_coords(n: int) -> np.ndarray:
    """Normalized coordinates of the n pixel centers along one axis."""
    if n == 1:
        return np.zeros(1)
    return 2.0 * np.arange(n) / (n - 1) - 1.0


def _norm_grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    x = _axis_coords(w)
    y = _axis_coords(h)
    return np.meshgrid(x, y)


def _to_pixels(xn: np.ndarray, yn: np.ndarray, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    return (xn + 1.0) * (w - 1) / 2.0, (yn + 1.0) * (h - 1) / 2.0


def _sample_bilinear(data: np.ndarray, px: np.ndarray, py: np.ndarray,
                     with_grad: bool = False):
    """Bilinear sample a channels-last array at pixel coordinates.

    Sampling is edge-clamped so values stay convex combinations of the
    input. Returns (values, inbounds) or, with gradients, additionally the
    exact derivatives of the interpolant w.r.t. px and py.
    """
    h, w = data.shape[:2]
    inb = (px >= 0) & (px <= w - 1) & (py >= 0) & (py <= h - 1)

    pxc = np.clip(px, 0.0, w - 1.0)
    pyc = np.clip(py, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(pxc), w - 2 if w > 1 else 0).astype(np.intp)
    y0 = np.minimum(np.floor(pyc), h - 2 if h > 1 else 0).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (pxc - x0)[..., None]
    fy = (pyc - y0)[..., None]

    v00 = data[y0, x0]
    v01 = data[y0, x1]
    v10 = data[y1, x0]
    v11 = data[y1, x1]

    top = v00 + (v01 - v00) * fx
    bot = v10 + (v11 - v10) * fx
    out = top + (bot - top) * fy

    if not with_grad:
        return out, inb

    # Exact derivative of the piecewise-bilinear interpolant; zero where
    # clamping froze the sample position.
    ddx = (v01 - v00) * (1.0 - fy) + (v11 - v10) * fy
    ddy = bot - top
    live_x = ((px > 0) & (px < w - 1))[..., None]
    live_y = ((py > 0) & (py < h - 1))[..., None]
    return out, inb, ddx * live_x, ddy * live_y


def sample_affine(data: np.ndarray, a: AffineParams,
                  out_hw: tuple[int, int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Warp a channels-last array by an affine transform.

    Each output pixel takes the bilinear sample of `data` at its mapped
    position. Returns (values, inbounds) where inbounds marks samples that
    fell inside the source raster.
    """
    squeeze = data.ndim == 2
    if squeeze:
        data = data[..., None]
    h, w = data.shape[:2]
    oh, ow = out_hw if out_hw is not None else (h, w)
    xn, yn = _norm_grid(oh, ow)
    pts = a.apply(np.stack([xn, yn], axis=-1))
    px, py = _to_pixels(pts[..., 0], pts[..., 1], h, w)
    # Snap near-integer sample positions so grid-aligned warps (identity,
    # whole-pixel translations) reproduce pixels exactly.
    rx, ry = np.rint(px), np.rint(py)
    px = np.where(np.abs(px - rx) < 1e-9, rx, px)
    py = np.where(np.abs(py - ry) < 1e-9, ry, py)
    out, inb = _sample_bilinear(data, px, py)
    if squeeze:
        out = out[..., 0]
    return out, inb


def warp_affine(img: Frame, v: VisibilityMap, a: AffineParams,
                binarize: bool | None = None) -> tuple[Frame, VisibilityMap]:
    """Warp a frame and its visibility map by an affine transform.

    Out-of-bounds samples get visibility 0; pixel values are edge-clamped
    samples so the output range never exceeds the input range. When a
    binary map is requested (default: inherited from `v`), warped
    visibility is binarized at 0.999 so partially-hole samples count as
    hole.
    """
    if (v.height, v.width) != (img.height, img.width):
        raise ValueError("visibility map resolution must match the image")
    stacked = np.concatenate([img.data, v.data[..., None]], axis=2)
    out, inb = sample_affine(stacked, a)
    warped_img = out[..., :3]
    warped_v = out[..., 3] * inb
    if binarize is None:
        binarize = v.binary
    if binarize:
        warped_v = (warped_v >= BINARY_VIS_THRESHOLD).astype(np.float64)
    return Frame(warped_img), VisibilityMap(warped_v, binary=binarize)


def _downsample2(data: np.ndarray) -> np.ndarray:
    """2x2 average pooling with edge padding for odd sizes."""
    h, w = data.shape[:2]
    if h % 2 or w % 2:
        pad = [(0, h % 2), (0, w % 2)] + [(0, 0)] * (data.ndim - 2)
        data = np.pad(data, pad, mode="edge")
        h, w = data.shape[:2]
    trail = data.shape[2:]
    return data.reshape(h // 2, 2, w // 2, 2, *trail).mean(axis=(1, 3))


def _build_pyramid(arr: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [arr]
    for _ in range(levels - 1):
        pyr.append(_downsample2(pyr[-1]))
    return pyr


def _effective_levels(h: int, w: int, levels: int) -> int:
    max_levels = 1
    side = min(h, w)
    while side // 2 >= _MIN_PYRAMID_SIDE:
        side //= 2
        max_levels += 1
    return max(1, min(levels, max_levels))


def _objective_terms(tgt: np.ndarray, v_t: np.ndarray, refv: np.ndarray,
                     a: AffineParams, eps: float, with_grad: bool):
    """Evaluate the masked Charbonnier objective, optionally with terms
    needed for its analytic gradient and Gauss-Newton normal equations.

    `refv` stacks the reference channels with its visibility as the last
    channel so one sampling pass serves both.
    """
    h, w = tgt.shape[:2]
    xn, yn = _norm_grid(h, w)
    pts = a.apply(np.stack([xn, yn], axis=-1))
    px, py = _to_pixels(pts[..., 0], pts[..., 1], h, w)

    if with_grad:
        out, inb, ddx, ddy = _sample_bilinear(refv, px, py, with_grad=True)
    else:
        out, inb = _sample_bilinear(refv, px, py)

    warped = out[..., :-1]
    wv = out[..., -1] * inb
    weight = v_t * wv
    denom = weight.sum()

    resid = tgt - warped
    rho = np.sqrt(resid * resid + eps * eps)
    numer = (weight * rho.sum(axis=-1)).sum()
    if denom <= 0:
        obj = np.inf
    else:
        obj = numer / denom
    if not with_grad:
        return obj, denom

    return obj, denom, {
        "xn": xn, "yn": yn, "inb": inb,
        "warped": warped, "wv": wv, "weight": weight,
        "resid": resid, "rho": rho, "numer": numer,
        "ddx": ddx, "ddy": ddy,
        "sx": (w - 1) / 2.0, "sy": (h - 1) / 2.0,
    }


def _param_basis(xn: np.ndarray, yn: np.ndarray, sx: float, sy: float):
    """d(pixel position)/d(params) rows for the six parameters.

    Parameter order (a11, a12, a21, a22, tx, ty); the x sample position
    depends on the first pair and tx, the y position on the second pair
    and ty, scaled by the normalized-to-pixel factors.
    """
    zeros = np.zeros_like(xn)
    ones = np.ones_like(xn)
    dpx = np.stack([xn * sx, yn * sx, zeros, zeros, ones * sx, zeros], axis=-1)
    dpy = np.stack([zeros, zeros, xn * sy, yn * sy, zeros, ones * sy], axis=-1)
    return dpx, dpy


def alignment_objective(target: Frame, v_t: VisibilityMap, ref: Frame,
                        v_r: VisibilityMap, a: AffineParams,
                        eps: float = 1e-3) -> float:
    """Masked mean Charbonnier L1 distance between target and warped reference.

    Sum over jointly visible pixels of visibility-weighted, channel-summed
    sqrt(d^2 + eps^2), normalized by the total joint visibility weight.
    """
    refv = np.concatenate([ref.data, v_r.data[..., None]], axis=2)
    obj, denom = _objective_terms(target.data, v_t.data, refv, a, eps, False)
    if denom <= 0:
        raise AlignmentFailure("no joint visibility between target and warped reference")
    return float(obj)


def alignment_gradient(target: Frame, v_t: VisibilityMap, ref: Frame,
                       v_r: VisibilityMap, a: AffineParams,
                       eps: float = 1e-3) -> tuple[float, np.ndarray]:
    """Objective value and its analytic gradient w.r.t. the six parameters.

    Differentiates through the bilinear sampling of both the reference
    values and its visibility map (the normalizing weight also depends on
    the parameters). Matches central finite differences on smooth inputs.
    """
    refv = np.concatenate([ref.data, v_r.data[..., None]], axis=2)
    obj, denom, t = _objective_terms(target.data, v_t.data, refv, a, eps, True)
    if denom <= 0:
        raise AlignmentFailure("no joint visibility between target and warped reference")

    dpx, dpy = _param_basis(t["xn"], t["yn"], t["sx"], t["sy"])

    # d(warped channel)/d(params) and d(warped visibility)/d(params)
    dref_dx = t["ddx"][..., :-1]
    dref_dy = t["ddy"][..., :-1]
    dv_dx = t["ddx"][..., -1] * t["inb"]
    dv_dy = t["ddy"][..., -1] * t["inb"]

    psi = t["resid"] / t["rho"]  # d rho / d resid
    # numerator: sum_p [ v_t * d(wv) * sum_c rho  +  weight * sum_c psi * (-dwarped) ]
    vt = np.asarray(v_t.data)
    rho_sum = t["rho"].sum(axis=-1)
    coeff_v = vt * rho_sum
    dnum = (
        np.einsum("hw,hwk->k", coeff_v * dv_dx, dpx)
        + np.einsum("hw,hwk->k", coeff_v * dv_dy, dpy)
        - np.einsum("hw,hwk->k", t["weight"] * (psi * dref_dx).sum(-1), dpx)
        - np.einsum("hw,hwk->k", t["weight"] * (psi * dref_dy).sum(-1), dpy)
    )
    dden = (
        np.einsum("hw,hwk->k", vt * dv_dx, dpx)
        + np.einsum("hw,hwk->k", vt * dv_dy, dpy)
    )
    grad = (dnum * denom - t["numer"] * dden) / (denom * denom)
    return float(obj), grad


# Coarsest-level initialization search: translation offsets in normalized
# units (+-0.25 covers +-32 px at 256 squared) and rotation offsets in
# degrees. Gauss-Newton then refines from the best seed.
_SEARCH_SHIFTS = np.linspace(-0.25, 0.25, 9)
_SEARCH_ROTATIONS_DEG = (-12.0, -8.0, -4.0, 4.0, 8.0, 12.0)


def _coarse_search(tgt: np.ndarray, vt: np.ndarray, refv: np.ndarray,
                   p: AffineParams, eps: float) -> AffineParams:
    """Pick the best objective over a small transform grid around `p`.

    The Charbonnier objective has local minima once the motion exceeds a
    few coarse pixels; seeding Gauss-Newton from a cheap grid search makes
    recovery robust across the supported motion range.
    """
    def score(cand: AffineParams) -> float:
        obj, _ = _objective_terms(tgt, vt, refv, cand, eps, False)
        return obj

    best, best_obj = p, score(p)
    for dtx in _SEARCH_SHIFTS:
        for dty in _SEARCH_SHIFTS:
            if dtx == 0.0 and dty == 0.0:
                continue
            cand = AffineParams(p.a11, p.a12, p.a21, p.a22,
                                p.tx + dtx, p.ty + dty)
            obj = score(cand)
            if obj < best_obj:
                best, best_obj = cand, obj
    base = best
    for deg in _SEARCH_ROTATIONS_DEG:
        c = math.cos(math.radians(deg))
        s = math.sin(math.radians(deg))
        cand = compose_affine(base, AffineParams(c, -s, s, c, 0.0, 0.0))
        obj = score(cand)
        if obj < best_obj:
            best, best_obj = cand, obj
    return best


def _gauss_newton_step(t: dict) -> np.ndarray:
    """Solve the Charbonnier-weighted normal equations for a step."""
    dpx, dpy = _param_basis(t["xn"], t["yn"], t["sx"], t["sy"])
    # Jacobian of each warped channel w.r.t. params, shape (H, W, C, 6)
    jac = (
        t["ddx"][..., :-1, None] * dpx[..., None, :]
        + t["ddy"][..., :-1, None] * dpy[..., None, :]
    )
    kappa = t["weight"][..., None] / t["rho"]  # IRLS weights, (H, W, C)
    hess = np.einsum("hwck,hwc,hwcl->kl", jac, kappa, jac)
    rhs = np.einsum("hwck,hwc->k", jac, kappa * t["resid"])
    hess += np.eye(6) * (1e-12 * max(np.trace(hess), 1.0))
    try:
        return np.linalg.solve(hess, rhs)
    except np.linalg.LinAlgError:
        return np.zeros(6)


def estimate_affine(target: Frame, v_t: VisibilityMap, ref: Frame,
                    v_r: VisibilityMap, cfg: AlignConfig = AlignConfig(),
                    init: AffineParams | None = None,
                    callback: _TraceCallback | None = None) -> AffineParams:
    """Register a reference frame to the target under missing data.

    Minimizes the visibility-masked Charbonnier L1 objective coarse to
    fine. Each Gauss-Newton step is accepted only if the true objective
    decreases (halving the step up to 8 times otherwise), so the per-level
    objective is monotone over accepted steps. The returned parameters
    never score worse than the initialization at full resolution.

    Args:
        target: frame to align to.
        v_t: target visibility (1 - hole mask).
        ref: reference frame to be warped onto the target.
        v_r: reference visibility.
        cfg: solver settings.
        init: starting transform (defaults to identity).
        callback: optional trace hook called as callback(level, iteration,
            objective) after each accepted step; level 0 is the coarsest.

    Raises:
        AlignmentFailure: fewer than 1% of pixels jointly visible at the
            coarsest level, or the objective is not finite.
    """
    if (target.height, target.width) != (ref.height, ref.width):
        raise ValueError("target and reference must share dimensions")
    eps = cfg.charbonnier_eps
    levels = _effective_levels(target.height, target.width, cfg.pyramid_levels)

    refv_full = np.concatenate([ref.data, v_r.data[..., None]], axis=2)
    tgt_pyr = _build_pyramid(target.data, levels)
    vt_pyr = _build_pyramid(np.asarray(v_t.data), levels)
    refv_pyr = _build_pyramid(refv_full, levels)

    p = init if init is not None else AffineParams.identity()
    p0 = p

    # Joint-visibility precondition, checked at the coarsest level under
    # the initial transform.
    coarse_obj, coarse_denom = _objective_terms(
        tgt_pyr[-1], vt_pyr[-1], refv_pyr[-1], p, eps, False
    )
    npix = tgt_pyr[-1].shape[0] * tgt_pyr[-1].shape[1]
    if coarse_denom < 0.01 * npix:
        raise AlignmentFailure(
            f"insufficient joint visibility at coarsest level "
            f"({coarse_denom / npix:.2%} < 1%)"
        )

    p = _coarse_search(tgt_pyr[-1], vt_pyr[-1], refv_pyr[-1], p, eps)

    for level in range(levels - 1, -1, -1):
        tgt = tgt_pyr[level]
        vt = vt_pyr[level]
        refv = refv_pyr[level]
        obj, denom = _objective_terms(tgt, vt, refv, p, eps, False)
        if not np.isfinite(obj):
            raise AlignmentFailure("non-finite alignment objective")
        for it in range(cfg.max_iters_per_level):
            res = _objective_terms(tgt, vt, refv, p, eps, True)
            delta = _gauss_newton_step(res[2])
            if not np.all(np.isfinite(delta)):
                break
            step = 1.0
            accepted = None
            for _ in range(8):
                try:
                    cand = AffineParams.from_vector(p.as_vector() + step * delta)
                except NumericFailure:
                    step *= 0.5
                    continue
                cand_obj, _ = _objective_terms(tgt, vt, refv, cand, eps, False)
                if np.isfinite(cand_obj) and cand_obj < obj:
                    accepted = (cand, cand_obj)
                    break
                step *= 0.5
            if accepted is None:
                break
            rel = (obj - accepted[1]) / max(obj, 1e-30)
            p, obj = accepted
            if callback is not None:
                callback(levels - 1 - level, it, float(obj))
            if rel < cfg.tol:
                break

    # Postcondition guard: never return something worse than the init at
    # full resolution.
    final_obj, final_denom = _objective_terms(
        tgt_pyr[0], vt_pyr[0], refv_pyr[0], p, eps, False
    )
    init_obj, init_denom = _objective_terms(
        tgt_pyr[0], vt_pyr[0], refv_pyr[0], p0, eps, False
    )
    if not np.isfinite(final_obj):
        raise AlignmentFailure("non-finite alignment objective at solution")
    if np.isfinite(init_obj) and init_obj < final_obj:
        return p0
    return p
