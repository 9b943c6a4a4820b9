import time

import numpy as np
from scipy.ndimage import gaussian_filter

from framefill.align import (
    AffineParams, AlignConfig, estimate_affine, invert_affine, warp_affine,
    alignment_objective, alignment_gradient,
)
from framefill.media import Frame, HoleMask, VisibilityMap, mask_to_visibility


def texture(rng, size):
    img = np.zeros((size, size, 3))
    for sigma, amp in ((2, 0.5), (8, 1.0), (32, 2.0)):
        img += amp * gaussian_filter(rng.standard_normal((size, size, 3)), (sigma, sigma, 0))
    img -= img.min()
    img /= img.max()
    return Frame(0.05 + 0.9 * img)


def block_holes(rng, size, frac=0.2, block=24):
    m = np.zeros((size, size), dtype=np.uint8)
    while m.mean() < frac:
        r = rng.integers(0, size - block)
        c = rng.integers(0, size - block)
        m[r:r + block, c:c + block] = 1
    return HoleMask(m)


def rand_transform(rng, max_rot_deg, max_trans_px, scale_range, size):
    rot = np.deg2rad(rng.uniform(-max_rot_deg, max_rot_deg))
    s = rng.uniform(*scale_range)
    c, sn = np.cos(rot), np.sin(rot)
    m = s * np.array([[c, -sn], [sn, c]])
    t = rng.uniform(-max_trans_px, max_trans_px, 2) * 2.0 / (size - 1)
    return AffineParams(m[0, 0], m[0, 1], m[1, 0], m[1, 1], t[0], t[1])


def corner_error_px(a, b, size):
    corners = np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]], dtype=float)
    pa = a.apply(corners)
    pb = b.apply(corners)
    return np.linalg.norm(pa - pb, axis=1).max() * (size - 1) / 2.0


def main():
    rng = np.random.default_rng(0)
    size = 256
    n = 25
    errs = []
    times = []
    for i in range(n):
        img = texture(rng, size)
        true = rand_transform(rng, 10.0, 20.0, (0.9, 1.1), size)
        full_vis = VisibilityMap(np.ones((size, size)))
        ref, ref_vis = warp_affine(img, full_vis, true)
        hole_t = block_holes(rng, size)
        hole_r = block_holes(rng, size)
        v_t = mask_to_visibility(hole_t)
        v_r = VisibilityMap(ref_vis.data * (1 - hole_r.data), binary=True)
        t0 = time.perf_counter()
        est = estimate_affine(img, v_t, ref, v_r, AlignConfig())
        dt = time.perf_counter() - t0
        err = corner_error_px(est, invert_affine(true), size)
        errs.append(err)
        times.append(dt)
        print(f"pair {i}: corner err {err:.3f} px, {dt:.2f} s")
    errs = np.array(errs)
    print(f"median {np.median(errs):.3f} px, frac<1px {(errs < 1).mean():.2f}, mean time {np.mean(times):.2f}s")

    # gradient check
    rng2 = np.random.default_rng(1)
    sz = 48
    img = texture(rng2, sz)
    ref = texture(rng2, sz)
    v1 = VisibilityMap(np.ones((sz, sz)) * (rng2.uniform(size=(sz, sz)) > 0.2), binary=True)
    v2 = VisibilityMap(np.ones((sz, sz)) * (rng2.uniform(size=(sz, sz)) > 0.2), binary=True)
    a = AffineParams(1.01, 0.02, -0.013, 0.99, 0.013, -0.021)
    obj, g = alignment_gradient(img, v1, ref, v2, a)
    fd = np.zeros(6)
    d = 1e-6
    for k in range(6):
        vp = a.as_vector(); vp[k] += d
        vm = a.as_vector(); vm[k] -= d
        op = alignment_objective(img, v1, ref, v2, AffineParams.from_vector(vp))
        om = alignment_objective(img, v1, ref, v2, AffineParams.from_vector(vm))
        fd[k] = (op - om) / (2 * d)
    rel = np.linalg.norm(g - fd) / np.linalg.norm(fd)
    print("grad rel err:", rel)


if __name__ == "__main__":
    main()
