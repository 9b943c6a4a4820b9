"""Feature extraction for context matching.

Two encoders: `raw-pool` average-pools the RGB channels so feature values
stay analytically checkable, and `seeded-conv` runs a small fixed-weight
convolutional stack over RGB plus the hole mask to exercise multi-channel
matching. Neither is trained.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .media import Frame, HoleMask, pad_to_multiple

ENCODER_KINDS = ("raw-pool", "seeded-conv")


@dataclass(frozen=True)
class FeatureMap:
    """Real-valued feature grid, shape (h, w, C), with its image stride."""

    data: np.ndarray
    stride: int = 1

    def __post_init__(self) -> None:
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3:
            raise ValueError(f"feature data must be h x w x C, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("feature map contains non-finite values")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        object.__setattr__(self, "data", d)

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class EncoderSpec:
    """Which encoder to run and at what stride/width.

    raw-pool always produces 3 channels; seeded-conv defaults to 32.
    `layers` only applies to seeded-conv and must supply at least
    log2(stride) stride-2 blocks.
    """

    kind: str = "raw-pool"
    stride: int = 4
    channels: int | None = None
    seed: int = 0
    layers: int = 3

    def __post_init__(self) -> None:
        if self.kind not in ENCODER_KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.stride not in (1, 2, 4, 8):
            raise ValueError("stride must be one of 1, 2, 4, 8")
        if self.kind == "raw-pool":
            if self.channels not in (None, 3):
                raise ValueError("raw-pool encoder always has 3 channels")
            object.__setattr__(self, "channels", 3)
        else:
            if self.channels is None:
                object.__setattr__(self, "channels", 32)
            if self.channels < 1:
                raise ValueError("channels must be >= 1")
            if self.layers < self.n_stride2_blocks:
                raise ValueError(
                    f"need at least {self.n_stride2_blocks} layers for stride {self.stride}"
                )

    @property
    def n_stride2_blocks(self) -> int:
        return int(math.log2(self.stride))


@functools.lru_cache(maxsize=32)
def _seeded_weights(spec: EncoderSpec) -> tuple[np.ndarray, ...]:
    """Fixed conv weights drawn deterministically from the spec seed.

    One (3, 3, c_in, c_out) tensor per layer, zero mean with variance
    2 / fan_in. Computed once per spec and reused.
    """
    rng = np.random.default_rng(spec.seed)
    weights = []
    c_in = 4  # RGB + mask
    for _ in range(spec.layers):
        fan_in = 9 * c_in
        w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(3, 3, c_in, spec.channels))
        weights.append(w)
        c_in = spec.channels
    return tuple(weights)


def _conv3x3(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    """3x3 zero-padded convolution; output size ceil(n / stride) per axis."""
    h, wd = x.shape[:2]
    oh = -(-h // stride)
    ow = -(-wd // stride)
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    out = np.zeros((oh, ow, w.shape[3]))
    for di in range(3):
        for dj in range(3):
            window = xp[di:di + (oh - 1) * stride + 1:stride,
                        dj:dj + (ow - 1) * stride + 1:stride]
            out += window @ w[di, dj]
    return out


def encode(frame: Frame, mask: HoleMask, spec: EncoderSpec = EncoderSpec()) -> FeatureMap:
    """Map a (frame, mask) pair to a feature map at the spec's stride.

    Deterministic for a fixed (spec, input). raw-pool ignores the mask
    channel and block-averages RGB; seeded-conv consumes the 4-channel
    concatenation through ReLU conv blocks, the first log2(stride) of
    which downsample by 2.
    """
    if (frame.height, frame.width) != (mask.height, mask.width):
        raise ValueError("frame and mask dimensions must match")
    if spec.kind == "raw-pool":
        d = pad_to_multiple(frame.data, spec.stride)
        h, w = d.shape[:2]
        s = spec.stride
        pooled = d.reshape(h // s, s, w // s, s, 3).mean(axis=(1, 3))
        return FeatureMap(pooled, stride=spec.stride)

    x = np.concatenate([frame.data, mask.data[..., None].astype(np.float64)], axis=2)
    strides = [2] * spec.n_stride2_blocks + [1] * (spec.layers - spec.n_stride2_blocks)
    for w, s in zip(_seeded_weights(spec), strides):
        x = np.maximum(_conv3x3(x, w, s), 0.0)
    return FeatureMap(x, stride=spec.stride)


def normalize_features(f: FeatureMap) -> FeatureMap:
    """Scale each cell's channel vector to unit L2 norm; zeros stay zero."""
    norms = np.linalg.norm(f.data, axis=2, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return FeatureMap(f.data / safe, stride=f.stride)
