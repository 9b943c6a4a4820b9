import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from framefill.align import AffineParams
from framefill.media import Frame, HoleMask


def texture(rng: np.random.Generator, size: int) -> Frame:
    """Smooth multi-scale random texture with structure at every pyramid level."""
    img = np.zeros((size, size, 3))
    for sigma, amp in ((2, 0.5), (8, 1.0), (32, 2.0)):
        img += amp * gaussian_filter(
            rng.standard_normal((size, size, 3)), (sigma, sigma, 0)
        )
    img -= img.min()
    img /= img.max()
    return Frame(0.05 + 0.9 * img)


def block_hole_mask(rng: np.random.Generator, size: int, frac: float = 0.2,
                    block: int = 24) -> HoleMask:
    """Random square blocks until at least `frac` of the pixels are hole."""
    m = np.zeros((size, size), dtype=np.uint8)
    while m.mean() < frac:
        r = int(rng.integers(0, size - block))
        c = int(rng.integers(0, size - block))
        m[r:r + block, c:c + block] = 1
    return HoleMask(m)


def rand_affine(rng: np.random.Generator, size: int, max_rot_deg: float,
                max_trans_px: float, scale_range: tuple[float, float]
                ) -> AffineParams:
    rot = np.deg2rad(rng.uniform(-max_rot_deg, max_rot_deg))
    s = rng.uniform(*scale_range)
    c, sn = np.cos(rot), np.sin(rot)
    m = s * np.array([[c, -sn], [sn, c]])
    t = rng.uniform(-max_trans_px, max_trans_px, 2) * 2.0 / (size - 1)
    return AffineParams(m[0, 0], m[0, 1], m[1, 0], m[1, 1], t[0], t[1])


def corner_error_px(a: AffineParams, b: AffineParams, size: int) -> float:
    """Max distance, in pixels, between the images of the 4 frame corners."""
    corners = np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]], dtype=float)
    return float(
        np.linalg.norm(a.apply(corners) - b.apply(corners), axis=1).max()
        * (size - 1) / 2.0
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
