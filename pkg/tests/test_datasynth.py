import numpy as np
import pytest

from framefill.align import AlignConfig, estimate_affine, invert_affine
from framefill.datasynth import (
    SynthParams, composite_holes, synth_background, synth_mask_sequence,
)
from framefill.errors import InputDataError
from framefill.media import Frame, HoleMask, VisibilityMap

from conftest import corner_error_px, texture


def disk_mask(size=48, radius=14):
    yy, xx = np.mgrid[:size, :size]
    return HoleMask(
        (((yy - size / 2) ** 2 + (xx - size / 2) ** 2) < radius ** 2).astype(np.uint8)
    )


SMALL = SynthParams(n_frames=4, out_size=64, translation_px=3.0,
                    rotation_deg=1.0, shear_deg=1.0, scale_pct=1.0, seed=0)


class TestSynthBackground:
    def test_single_frame_is_plain_crop(self, rng):
        src = texture(rng, 128)
        p = SynthParams(n_frames=1, out_size=64)
        frames = synth_background(src, p, np.random.default_rng(3))
        assert len(frames) == 1
        found = False
        for r in range(65):
            for c in range(65):
                if np.array_equal(frames[0].data, src.data[r:r + 64, c:c + 64]):
                    found = True
        assert found

    def test_deterministic_given_seed(self, rng):
        src = texture(rng, 128)
        a = synth_background(src, SMALL, np.random.default_rng(7))
        b = synth_background(src, SMALL, np.random.default_rng(7))
        for fa, fb in zip(a, b):
            assert np.array_equal(fa.data, fb.data)

    def test_zero_ranges_identical_crops(self, rng):
        src = texture(rng, 128)
        p = SynthParams(n_frames=4, out_size=64, rotation_deg=0, shear_deg=0,
                        scale_pct=0, translation_px=0)
        frames = synth_background(src, p, np.random.default_rng(5))
        for f in frames[1:]:
            assert np.array_equal(f.data, frames[0].data)

    def test_source_too_small(self, rng):
        with pytest.raises(InputDataError, match="smaller"):
            synth_background(texture(rng, 32), SynthParams(out_size=64),
                             np.random.default_rng(0))

    def test_alignment_recovers_interframe_transform(self, rng):
        # frames are affinely related by construction; registration must
        # find the relation to sub-pixel corner accuracy
        src = texture(rng, 192)
        p = SynthParams(n_frames=3, out_size=128, translation_px=4.0,
                        rotation_deg=1.5, shear_deg=1.0, scale_pct=1.5, seed=2)
        frames = synth_background(src, p, np.random.default_rng(2))
        ones = VisibilityMap(np.ones((128, 128)), binary=True)
        for k in (1, 2):
            est = estimate_affine(frames[0], ones, frames[k], ones, AlignConfig())
            # oracle: frame_k(q) = frame_0(T_k(q)) with T_k the generator's
            # walk, so mapping target (frame 0) coords into frame k takes
            # the inverse of T_k; rebuild the walk with the same seed
            gen = np.random.default_rng(2)
            from framefill.datasynth import _random_step
            steps = [_random_step(p, gen) for _ in range(p.n_frames - 1)]
            from framefill.align import compose_affine, AffineParams
            walk = AffineParams.identity()
            for s in steps[:k]:
                walk = compose_affine(s, walk)
            assert corner_error_px(est, invert_affine(walk), 128) < 1.0


class TestSynthMaskSequence:
    def test_deterministic(self):
        a = synth_mask_sequence(disk_mask(), SMALL, np.random.default_rng(1))
        b = synth_mask_sequence(disk_mask(), SMALL, np.random.default_rng(1))
        for ma, mb in zip(a, b):
            assert np.array_equal(ma.data, mb.data)

    def test_zero_motion_static(self):
        p = SynthParams(n_frames=4, out_size=64, rotation_deg=0, shear_deg=0,
                        scale_pct=0, translation_px=0)
        masks = synth_mask_sequence(disk_mask(), p, np.random.default_rng(1))
        for m in masks[1:]:
            assert np.array_equal(m.data, masks[0].data)

    def test_nonempty_over_many_seeds(self):
        for seed in range(100):
            masks = synth_mask_sequence(
                disk_mask(), SMALL, np.random.default_rng(seed)
            )
            assert all(m.data.sum() > 0 for m in masks), f"seed {seed}"

    def test_bounding_box_capped(self):
        p = SynthParams(n_frames=3, out_size=64, mask_scale_max=0.5)
        for seed in range(20):
            masks = synth_mask_sequence(disk_mask(), p, np.random.default_rng(seed))
            for m in masks:
                ys, xs = np.nonzero(m.data)
                assert ys.max() - ys.min() + 1 <= 0.5 * 64 + 2
                assert xs.max() - xs.min() + 1 <= 0.5 * 64 + 2

    def test_empty_object_rejected(self):
        with pytest.raises(InputDataError, match="empty"):
            synth_mask_sequence(HoleMask(np.zeros((16, 16))), SMALL,
                                np.random.default_rng(0))


class TestCompositeHoles:
    def test_empty_masks_input_equals_truth(self, rng):
        bg = [texture(rng, 32) for _ in range(3)]
        masks = [HoleMask(np.zeros((32, 32))) for _ in range(3)]
        inp, truth = composite_holes(bg, masks)
        for a, b in zip(inp.frames, truth.frames):
            assert np.array_equal(a.data, b.data)

    def test_full_mask_zeroes_frames(self, rng):
        bg = [texture(rng, 32)]
        masks = [HoleMask(np.ones((32, 32)))]
        inp, _ = composite_holes(bg, masks)
        assert not inp.frames[0].data.any()

    def test_outside_hole_matches_truth_exactly(self, rng):
        bg = [texture(rng, 32) for _ in range(2)]
        masks = [
            HoleMask((rng.uniform(size=(32, 32)) > 0.6).astype(np.uint8))
            for _ in range(2)
        ]
        inp, truth = composite_holes(bg, masks)
        for f_in, f_tr, m in zip(inp.frames, truth.frames, masks):
            keep = m.data == 0
            hole = m.data == 1
            assert np.array_equal(f_in.data[keep], f_tr.data[keep])
            assert not f_in.data[hole].any()
        assert all(m.data.sum() == 0 for m in truth.masks)

    def test_length_mismatch(self, rng):
        with pytest.raises(ValueError):
            composite_holes([texture(rng, 32)], [])
