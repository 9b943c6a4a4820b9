import time

import numpy as np

from framefill.align import AlignConfig
from framefill.datasynth import SynthParams, composite_holes, synth_background
from framefill.media import Frame, HoleMask, VideoClip
from framefill.metrics import flicker_metric, psnr
from framefill.pipeline import InpaintConfig, inpaint_video

import sys
sys.path.insert(0, "tests")
from conftest import texture


def overlapping_masks(n, size, hole=16, step=6, seed=0):
    rng = np.random.default_rng(seed)
    base_r = int(rng.integers(8, size - hole - 8))
    base_c = int(rng.integers(8, size - hole - 8))
    masks = []
    for t in range(n):
        m = np.zeros((size, size), dtype=np.uint8)
        r = int(np.clip(base_r + t * step, 0, size - hole))
        c = int(np.clip(base_c + t * step // 2, 0, size - hole))
        m[r:r + hole, c:c + hole] = 1
        masks.append(HoleMask(m))
    return masks


def make_clip(seed, size=96, n=5):
    rng = np.random.default_rng(seed)
    src = texture(rng, size + 64)
    p = SynthParams(n_frames=n, out_size=size, translation_px=2.0,
                    rotation_deg=0.5, shear_deg=0.3, scale_pct=0.5, seed=seed)
    bg = synth_background(src, p, np.random.default_rng(seed))
    masks = overlapping_masks(n, size, seed=seed)
    return composite_holes(bg, masks)


FAST = AlignConfig(pyramid_levels=3, max_iters_per_level=40)


def criterion4():
    wins = 0
    t0 = time.perf_counter()
    for seed in range(10):
        inp, truth = make_clip(seed)
        # corrupt middle frame: rotate content and mask by 90 degrees
        frames = list(inp.frames)
        masks = list(inp.masks)
        k = 2
        frames[k] = Frame(np.rot90(frames[k].data).copy())
        masks[k] = HoleMask(np.rot90(masks[k].data).copy())
        corrupted = VideoClip(tuple(frames), tuple(masks))

        scores = {}
        for mode in ("masked", "normal"):
            cfg = InpaintConfig(align=FAST, bidirectional=False, softmax_mode=mode)
            out, _ = inpaint_video(corrupted, cfg)
            vals = [psnr(out.frames[t], truth.frames[t], inp.masks[t])
                    for t in range(5) if t != k and inp.masks[t].data.any()]
            scores[mode] = float(np.mean(vals))
        win = scores["masked"] >= scores["normal"]
        wins += win
        print(f"seed {seed}: masked {scores['masked']:.2f} dB vs normal {scores['normal']:.2f} dB -> {'OK' if win else 'LOSS'}")
    print(f"criterion4 wins {wins}/10, {time.perf_counter()-t0:.1f}s")


def make_sticky_clip(seed, size=96, n=5, hole=20, step=2):
    """Holes overlap so heavily their core is never visible in any frame."""
    rng = np.random.default_rng(seed)
    src = texture(rng, size + 64)
    p = SynthParams(n_frames=n, out_size=size, translation_px=1.0,
                    rotation_deg=0.3, shear_deg=0.2, scale_pct=0.3, seed=seed)
    bg = synth_background(src, p, np.random.default_rng(seed))
    masks = overlapping_masks(n, size, hole=hole, step=step, seed=seed)
    return composite_holes(bg, masks)


def criterion5():
    wins = 0
    t0 = time.perf_counter()
    for seed in range(10):
        inp, truth = make_sticky_clip(seed + 100)
        scores = {}
        for update in (True, False):
            cfg = InpaintConfig(align=FAST, bidirectional=False,
                                reference_update=update)
            out, _ = inpaint_video(inp, cfg)
            scores[update] = flicker_metric(out, list(inp.masks), FAST)
        win = scores[True] <= scores[False]
        wins += win
        print(f"seed {seed}: update {scores[True]:.5f} vs frozen {scores[False]:.5f} -> {'OK' if win else 'LOSS'}")
    print(f"criterion5 wins {wins}/10, {time.perf_counter()-t0:.1f}s")


if __name__ == "__main__":
    criterion4()
    criterion5()
