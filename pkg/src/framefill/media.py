"""Image/mask sequence data model, file I/O, and visibility handling.

Frames are stored as float arrays in [0, 1]; hole masks are binary with
1 marking missing pixels. All types are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import InputDataError

# Stored gray value at or above this marks a hole pixel (robust to
# anti-aliased mask exports).
HOLE_GRAY_THRESHOLD = 128

_IMAGE_SUFFIXES = {".png", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg", ".webp"}


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Frame:
    """RGB image, shape (H, W, 3), float values in [0, 1], H and W >= 8."""

    data: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3 or d.shape[2] != 3:
            raise ValueError(f"frame data must be HxWx3, got shape {d.shape}")
        if d.shape[0] < 8 or d.shape[1] < 8:
            raise ValueError(f"frame must be at least 8x8, got {d.shape[:2]}")
        if not np.all(np.isfinite(d)):
            raise ValueError("frame contains non-finite values")
        if d.min() < -1e-9 or d.max() > 1.0 + 1e-9:
            raise ValueError("frame values outside [0, 1]")
        object.__setattr__(self, "data", _freeze(np.clip(d, 0.0, 1.0)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class HoleMask:
    """Binary mask, shape (H, W); 1 marks hole (missing) pixels."""

    data: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.data)
        if d.ndim != 2:
            raise ValueError(f"mask data must be HxW, got shape {d.shape}")
        if not np.isin(d, (0, 1)).all():
            raise ValueError("mask values must be exactly 0 or 1")
        object.__setattr__(self, "data", _freeze(d.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def is_empty(self) -> bool:
        return not self.data.any()


@dataclass(frozen=True)
class VisibilityMap:
    """Per-pixel visibility in [0, 1] at any resolution; 1 = fully visible."""

    data: np.ndarray
    binary: bool = True

    def __post_init__(self) -> None:
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise ValueError(f"visibility data must be HxW, got shape {d.shape}")
        if not np.all(np.isfinite(d)) or d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("visibility values must lie in [0, 1]")
        if self.binary and not np.isin(d, (0.0, 1.0)).all():
            raise ValueError("binary visibility map has non-binary values")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class VideoClip:
    """Ordered frames with paired hole masks of identical dimensions."""

    frames: tuple[Frame, ...]
    masks: tuple[HoleMask, ...]

    def __post_init__(self) -> None:
        frames = tuple(self.frames)
        masks = tuple(self.masks)
        if len(frames) < 1:
            raise ValueError("clip needs at least one frame")
        if len(frames) != len(masks):
            raise ValueError(
                f"frame/mask count mismatch: {len(frames)} vs {len(masks)}"
            )
        h, w = frames[0].height, frames[0].width
        for i, (f, m) in enumerate(zip(frames, masks)):
            if (f.height, f.width) != (h, w):
                raise ValueError(f"frame {i} has size {(f.height, f.width)}, expected {(h, w)}")
            if (m.height, m.width) != (h, w):
                raise ValueError(f"mask {i} has size {(m.height, m.width)}, expected {(h, w)}")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "masks", masks)

    @property
    def n(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width


def _list_images(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise InputDataError(f"not a directory: {directory}")
    files = sorted(
        p for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES
    )
    return files


def load_frame(path: Path) -> Frame:
    """Decode one image file to an RGB frame in [0, 1]."""
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            data = np.asarray(rgb, dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError) as exc:
        raise InputDataError(f"cannot decode image {path}: {exc}") from exc
    return Frame(data)


def load_mask(path: Path) -> HoleMask:
    """Decode one grayscale image; gray >= 128 becomes hole (1)."""
    try:
        with Image.open(path) as img:
            gray = np.asarray(img.convert("L"))
    except (UnidentifiedImageError, OSError) as exc:
        raise InputDataError(f"cannot decode mask {path}: {exc}") from exc
    return HoleMask((gray >= HOLE_GRAY_THRESHOLD).astype(np.uint8))


def load_frames(directory: Path) -> list[Frame]:
    """Load all image files in a directory, lexicographic filename order."""
    files = _list_images(Path(directory))
    if not files:
        raise InputDataError(f"no frames found in {directory}")
    return [load_frame(p) for p in files]


def load_clip(frame_dir: Path, mask_dir: Path) -> VideoClip:
    """Load paired frame and mask directories into a clip.

    Frames and masks pair up under lexicographic filename sort; counts
    and per-pair dimensions must match.
    """
    frame_files = _list_images(Path(frame_dir))
    mask_files = _list_images(Path(mask_dir))
    if not frame_files:
        raise InputDataError(f"no frames found in {frame_dir}")
    if len(frame_files) != len(mask_files):
        raise InputDataError(
            f"frame/mask count mismatch: {len(frame_files)} frames vs "
            f"{len(mask_files)} masks"
        )
    frames = []
    masks = []
    for fp, mp in zip(frame_files, mask_files):
        f = load_frame(fp)
        m = load_mask(mp)
        if (f.height, f.width) != (m.height, m.width):
            raise InputDataError(
                f"dimension mismatch between {fp.name} "
                f"({f.height}x{f.width}) and {mp.name} ({m.height}x{m.width})"
            )
        frames.append(f)
        masks.append(m)
    return VideoClip(tuple(frames), tuple(masks))


def frame_to_bytes(frame: Frame) -> np.ndarray:
    """Quantize a frame to 8-bit per channel (clamp to [0,1], then round)."""
    return np.rint(np.clip(frame.data, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_frame(frame: Frame, path: Path) -> None:
    try:
        Image.fromarray(frame_to_bytes(frame), mode="RGB").save(path)
    except OSError as exc:
        raise InputDataError(f"cannot write image {path}: {exc}") from exc


def save_mask(mask: HoleMask, path: Path) -> None:
    try:
        Image.fromarray(mask.data * np.uint8(255), mode="L").save(path)
    except OSError as exc:
        raise InputDataError(f"cannot write mask {path}: {exc}") from exc


def save_clip(clip: VideoClip, out_dir: Path) -> None:
    """Write clip frames as 8-bit PNG files with zero-padded numeric names."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputDataError(f"cannot create directory {out}: {exc}") from exc
    for i, frame in enumerate(clip.frames):
        save_frame(frame, out / f"{i:05d}.png")


def save_masks(masks: list[HoleMask] | tuple[HoleMask, ...], out_dir: Path) -> None:
    """Write masks as 8-bit grayscale PNG files (0 or 255)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputDataError(f"cannot create directory {out}: {exc}") from exc
    for i, mask in enumerate(masks):
        save_mask(mask, out / f"{i:05d}.png")


def save_gray(values: np.ndarray, path: Path) -> None:
    """Write a [0,1] map as an 8-bit grayscale image (values scaled x255)."""
    arr = np.rint(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * 255.0)
    try:
        Image.fromarray(arr.astype(np.uint8), mode="L").save(path)
    except OSError as exc:
        raise InputDataError(f"cannot write image {path}: {exc}") from exc


def mask_to_visibility(mask: HoleMask) -> VisibilityMap:
    """V = 1 - M elementwise; hole pixels become invisible."""
    return VisibilityMap(1.0 - mask.data.astype(np.float64), binary=True)


def pad_to_multiple(data: np.ndarray, factor: int) -> np.ndarray:
    """Pad the trailing rows/cols by edge replication to a multiple of factor."""
    h, w = data.shape[:2]
    ph = (-h) % factor
    pw = (-w) % factor
    if ph == 0 and pw == 0:
        return data
    pad_width = [(0, ph), (0, pw)] + [(0, 0)] * (data.ndim - 2)
    return np.pad(data, pad_width, mode="edge")


def downsample_visibility(v: VisibilityMap, factor: int) -> VisibilityMap:
    """Conservative block-min downsampling by an integer factor.

    An output cell is visible only if every covered input pixel is
    visible, so feature cells touching a hole are treated as hole.
    Dimensions not divisible by the factor are edge-padded first.
    """
    if factor <= 0:
        raise ValueError("downsampling factor must be a positive integer")
    if factor == 1:
        return v
    d = pad_to_multiple(v.data, factor)
    h, w = d.shape
    blocks = d.reshape(h // factor, factor, w // factor, factor)
    return VisibilityMap(blocks.min(axis=(1, 3)), binary=v.binary)
