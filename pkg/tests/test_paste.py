import numpy as np
import pytest

from framefill.media import Frame, HoleMask, VisibilityMap
from framefill.paste import (
    PasteInput, composite_paste, diffusion_fill, upsample_weights,
)

from conftest import texture


def ones_vis(h, w):
    return VisibilityMap(np.ones((h, w)), binary=True)


class TestUpsampleWeights:
    def test_single_fully_visible_reference_all_ones(self):
        w = [np.full((4, 4), 0.37)]
        vis = [ones_vis(16, 16)]
        out, c_mask = upsample_weights(w, vis, 4)
        assert np.allclose(out[0], 1.0)
        assert not c_mask.any()

    def test_uniform_weights_pass_through(self):
        w = [np.full((4, 4), 0.5), np.full((4, 4), 0.5)]
        vis = [ones_vis(16, 16), ones_vis(16, 16)]
        out, c_mask = upsample_weights(w, vis, 4)
        assert np.allclose(out[0], 0.5) and np.allclose(out[1], 0.5)
        assert not c_mask.any()

    def test_invisible_reference_loses_weight(self):
        w = [np.full((2, 2), 0.3), np.full((2, 2), 0.7)]
        v0 = VisibilityMap(np.zeros((8, 8)), binary=True)
        v1 = ones_vis(8, 8)
        out, c_mask = upsample_weights(w, [v0, v1], 4)
        assert np.allclose(out[0], 0.0)
        assert np.allclose(out[1], 1.0)
        assert not c_mask.any()

    def test_none_visible_gives_mask(self):
        w = [np.full((2, 2), 1.0)]
        v0 = VisibilityMap(np.zeros((8, 8)), binary=True)
        out, c_mask = upsample_weights(w, [v0], 4)
        assert not out[0].any()
        assert (c_mask == 1.0).all()

    def test_starved_pixel_uniform_fallback(self):
        # weights are zero at low res but the pixel is visible at full res
        w = [np.zeros((2, 2)), np.zeros((2, 2))]
        vis = [ones_vis(8, 8), ones_vis(8, 8)]
        out, c_mask = upsample_weights(w, vis, 4)
        assert np.allclose(out[0], 0.5) and np.allclose(out[1], 0.5)
        assert not c_mask.any()

    def test_inconsistent_stride_rejected(self):
        with pytest.raises(ValueError, match="stride"):
            upsample_weights([np.ones((3, 3))], [ones_vis(16, 16)], 4)

    def test_normal_mode_keeps_raw_weights(self):
        w = [np.full((2, 2), 0.25), np.full((2, 2), 0.75)]
        v0 = VisibilityMap(np.zeros((8, 8)), binary=True)
        out, c_mask = upsample_weights(w, [v0, ones_vis(8, 8)], 4,
                                       mask_invisible=False)
        assert np.allclose(out[0], 0.25) and np.allclose(out[1], 0.75)
        assert not c_mask.any()


class TestCompositePaste:
    def _input(self, rng, hole_data, refs, vis, weights_lowres=None, stride=4):
        target = texture(rng, 16)
        hole = HoleMask(hole_data)
        wl = weights_lowres or tuple(np.ones((4, 4)) for _ in refs)
        return PasteInput(target, hole, tuple(refs), tuple(vis), wl, stride)

    def test_no_hole_returns_target_exactly(self, rng):
        inp = self._input(rng, np.zeros((16, 16)), [], [], ())
        out, c_mask = composite_paste(inp, [])
        assert np.array_equal(out.data, inp.target.data)
        assert not c_mask.any()

    def test_weight_one_copy_is_exact(self, rng):
        truth = texture(rng, 16)
        hole_data = np.zeros((16, 16))
        hole_data[4:12, 4:12] = 1
        inp = self._input(rng, hole_data, [truth], [ones_vis(16, 16)])
        out, c_mask = composite_paste(inp, [np.ones((16, 16))])
        hole = hole_data.astype(bool)
        assert np.array_equal(out.data[hole], truth.data[hole])
        assert np.array_equal(out.data[~hole], inp.target.data[~hole])
        assert not c_mask.any()

    def test_convex_combination(self, rng):
        dark = Frame(np.zeros((16, 16, 3)))
        bright = Frame(np.ones((16, 16, 3)))
        hole_data = np.zeros((16, 16))
        hole_data[8, 8] = 1
        inp = self._input(rng, hole_data, [dark, bright],
                          [ones_vis(16, 16), ones_vis(16, 16)])
        out, _ = composite_paste(
            inp, [np.full((16, 16), 0.25), np.full((16, 16), 0.75)]
        )
        assert np.allclose(out.data[8, 8], 0.75, atol=1e-12)

    def test_never_visible_left_at_zero(self, rng):
        hole_data = np.zeros((16, 16))
        hole_data[3:6, 3:6] = 1
        inp = self._input(rng, hole_data, [texture(rng, 16)], [ones_vis(16, 16)])
        out, c_mask = composite_paste(inp, [np.zeros((16, 16))])
        region = hole_data.astype(bool)
        assert not out.data[region].any()
        assert np.array_equal(c_mask, hole_data)

    def test_non_hole_pixels_bit_exact(self, rng):
        hole_data = (rng.uniform(size=(16, 16)) > 0.7).astype(np.uint8)
        ref = texture(rng, 16)
        inp = self._input(rng, hole_data, [ref], [ones_vis(16, 16)])
        out, _ = composite_paste(inp, [np.ones((16, 16))])
        keep = ~hole_data.astype(bool)
        assert np.array_equal(out.data[keep], inp.target.data[keep])


class TestDiffusionFill:
    def test_constant_image_stays_constant(self):
        frame = Frame(np.full((12, 12, 3), 0.6))
        region = np.zeros((12, 12))
        region[4:8, 4:8] = 1
        out = diffusion_fill(frame, region)
        assert np.allclose(out.data, 0.6, atol=1e-9)

    def test_empty_region_identity(self, rng):
        frame = texture(rng, 12)
        out = diffusion_fill(frame, np.zeros((12, 12)))
        assert np.array_equal(out.data, frame.data)

    def test_full_region_mid_gray(self, rng):
        frame = texture(rng, 12)
        out = diffusion_fill(frame, np.ones((12, 12)))
        assert np.allclose(out.data, 0.5)

    def test_line_fill_matches_tridiagonal_solve(self, rng):
        # 1-px interior line: the Laplace system along it is tridiagonal
        # with the up/down neighbors as the right-hand side
        size = 16
        ramp = np.tile(np.arange(size) / (size - 1), (size, 1))
        frame = Frame(np.repeat(ramp[..., None], 3, axis=2))
        row, c0, c1 = 8, 2, 14
        region = np.zeros((size, size))
        region[row, c0:c1] = 1
        out = diffusion_fill(frame, region)

        n = c1 - c0
        a = np.zeros((n, n))
        b = np.zeros(n)
        for i in range(n):
            a[i, i] = 4.0
            if i > 0:
                a[i, i - 1] = -1.0
            if i < n - 1:
                a[i, i + 1] = -1.0
            col = c0 + i
            b[i] = frame.data[row - 1, col, 0] + frame.data[row + 1, col, 0]
        b[0] += frame.data[row, c0 - 1, 0]
        b[-1] += frame.data[row, c1, 0]
        expected = np.linalg.solve(a, b)
        assert np.abs(out.data[row, c0:c1, 0] - expected).max() < 1e-4
        # on a linear ramp the harmonic fill reproduces the ramp
        assert np.abs(out.data[row, c0:c1, 0] - ramp[row, c0:c1]).max() < 1e-4

    def test_outside_region_untouched(self, rng):
        frame = texture(rng, 16)
        region = np.zeros((16, 16))
        region[5:9, 5:9] = 1
        out = diffusion_fill(frame, region)
        keep = region == 0
        assert np.array_equal(out.data[keep], frame.data[keep])

    def test_maximum_principle(self, rng):
        for _ in range(10):
            frame = texture(rng, 16)
            region = np.zeros((16, 16), dtype=bool)
            r = int(rng.integers(1, 10))
            c = int(rng.integers(1, 10))
            region[r:r + int(rng.integers(2, 6)), c:c + int(rng.integers(2, 6))] = True
            out = diffusion_fill(frame, region)
            grown = np.zeros_like(region)
            grown[1:] |= region[:-1]
            grown[:-1] |= region[1:]
            grown[:, 1:] |= region[:, :-1]
            grown[:, :-1] |= region[:, 1:]
            boundary = grown & ~region
            for ch in range(3):
                lo = frame.data[..., ch][boundary].min()
                hi = frame.data[..., ch][boundary].max()
                vals = out.data[..., ch][region]
                assert vals.min() >= lo - 1e-12
                assert vals.max() <= hi + 1e-12

    def test_region_touching_border(self, rng):
        frame = texture(rng, 12)
        region = np.zeros((12, 12))
        region[0:3, 0:3] = 1
        out = diffusion_fill(frame, region)
        assert np.isfinite(out.data).all()
        assert np.array_equal(out.data[region == 0], frame.data[region == 0])
