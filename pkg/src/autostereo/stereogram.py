"""Depth/disparity geometry and autostereogram synthesis.

Depth convention: ``d = 1`` is the far plane (the background), ``d = 0`` the
near plane.  A pixel at depth ``d`` repeats its left partner at distance

    s(d) = stripe_width * (1 - beta * (1 - d))

so the background repeats with period ``stripe_width`` and the nearest
surface with period ``(1 - beta) * stripe_width``.
"""

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import _accel
from ._accel import njit
from .errors import (
    AlphaOutOfRange,
    DepthOutOfRange,
    DimensionMismatch,
    DisparityOutOfRange,
    GeometryInvalid,
    TextureTooNarrow,
)
from .imgcore import GrayImage, ImageLike, as_array, as_image

DEFAULT_BETA = 0.5


@dataclass(frozen=True)
class StereoGeometry:
    beta: float = DEFAULT_BETA
    stripe_width: int = 8

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise GeometryInvalid(f"beta must lie in (0, 1), got {self.beta}")
        if int(self.stripe_width) != self.stripe_width or self.stripe_width < 2:
            raise GeometryInvalid(f"stripe_width must be an integer >= 2, got {self.stripe_width}")
        object.__setattr__(self, "stripe_width", int(self.stripe_width))

    @classmethod
    def for_width(cls, width: int, beta: float = DEFAULT_BETA) -> "StereoGeometry":
        """Default geometry for an image: stripe = width / 8."""
        return cls(beta=beta, stripe_width=max(2, width // 8))

    @property
    def min_disparity(self) -> float:
        return (1.0 - self.beta) * self.stripe_width

    @property
    def shift_range(self):
        """Inclusive pixel range of realizable (rounded) shifts."""
        return int(np.rint(self.min_disparity)), self.stripe_width

    def check_width(self, width: int):
        if self.stripe_width > width / 2:
            raise GeometryInvalid(
                f"stripe_width {self.stripe_width} exceeds half the image width {width}"
            )


def disparity_of_depth(d, g: StereoGeometry):
    """Pixel disparity for normalized depth ``d`` (scalar or array)."""
    arr = np.asarray(d, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
        raise DepthOutOfRange("depth must lie in [0, 1]")
    s = g.stripe_width * (1.0 - g.beta * (1.0 - arr))
    return float(s) if s.ndim == 0 else s


def depth_of_disparity(s, g: StereoGeometry):
    """Inverse of :func:`disparity_of_depth`."""
    arr = np.asarray(s, dtype=np.float64)
    lo, hi = g.min_disparity, float(g.stripe_width)
    tol = 1e-9 * hi
    if np.any(arr < lo - tol) or np.any(arr > hi + tol) or np.any(np.isnan(arr)):
        raise DisparityOutOfRange(f"disparity must lie in [{lo}, {hi}]")
    d = np.clip(1.0 - (hi - arr) / (g.beta * hi), 0.0, 1.0)
    return float(d) if d.ndim == 0 else d


def shift_map(depth: ImageLike, g: StereoGeometry, rounding: str = "half_even") -> np.ndarray:
    """Integer per-pixel shifts used by :func:`encode`."""
    s = disparity_of_depth(as_array(depth), g)
    if rounding == "half_even":
        s = np.rint(s)
    elif rounding == "floor":
        s = np.floor(s)
    else:
        raise ValueError(f"unknown rounding mode {rounding!r}")
    return s.astype(np.int64)


@dataclass(frozen=True)
class RandomDotTexture:
    """Uniform random-value texture, one independent value per pixel."""

    seed: int = 0

    def render(self, height: int, width: int) -> GrayImage:
        rng = np.random.default_rng(self.seed)
        return GrayImage(rng.random((height, width)))


Texture = Union[GrayImage, RandomDotTexture]


@dataclass(frozen=True)
class EncodeOptions:
    geometry: StereoGeometry = field(default_factory=StereoGeometry)
    texture: Texture = field(default_factory=RandomDotTexture)
    rounding: str = "half_even"


@njit(cache=True)
def _propagate_rows_nb(shift, tex):
    H, W = shift.shape
    th, tw = tex.shape
    out = np.empty((H, W), dtype=np.float64)
    for i in range(H):
        ti = i % th
        for j in range(W):
            s = shift[i, j]
            if j >= s:
                out[i, j] = out[i, j - s]
            else:
                out[i, j] = tex[ti, j % tw]
    return out


def _propagate_rows_np(shift, tex):
    H, W = shift.shape
    th, tw = tex.shape
    rows = np.arange(H)
    trow = rows % th
    out = np.empty((H, W), dtype=np.float64)
    for j in range(W):
        src = j - shift[:, j]
        col = tex[trow, j % tw].copy()
        ok = src >= 0
        col[ok] = out[rows[ok], src[ok]]
        out[:, j] = col
    return out


def propagate_rows(shift: np.ndarray, tex: np.ndarray) -> np.ndarray:
    """Left-to-right constraint propagation: ``out[i, j] = out[i, j - shift[i, j]]``.

    Pixels with ``j < shift[i, j]`` take their value from the (tiled) texture.
    """
    shift = np.ascontiguousarray(shift, dtype=np.int64)
    tex = np.ascontiguousarray(tex, dtype=np.float64)
    if _accel.use_numba():
        return _propagate_rows_nb(shift, tex)
    return _propagate_rows_np(shift, tex)


def encode(depth: ImageLike, opts: EncodeOptions = None) -> GrayImage:
    """Synthesize an autostereogram whose row periods encode ``depth``."""
    opts = opts or EncodeOptions()
    depth = as_image(depth)
    H, W = depth.shape
    g = opts.geometry
    g.check_width(W)
    tex = opts.texture
    if isinstance(tex, RandomDotTexture):
        tex = tex.render(H, g.stripe_width)
    tex = as_array(tex)
    if tex.shape[1] < g.stripe_width:
        raise TextureTooNarrow(
            f"texture width {tex.shape[1]} is narrower than the stripe {g.stripe_width}"
        )
    shifts = shift_map(depth, g, opts.rounding)
    return GrayImage(propagate_rows(shifts, tex))


def encode_random_dot(depth: ImageLike, g: StereoGeometry, seed: int = 0) -> GrayImage:
    return encode(depth, EncodeOptions(geometry=g, texture=RandomDotTexture(seed)))


def constraint_violations(stereo: ImageLike, depth: ImageLike, g: StereoGeometry,
                          rounding: str = "half_even") -> int:
    """Count pixels breaking ``out(i, j) == out(i, j - s(i, j))``.

    Walks every pixel with scalar arithmetic so it stays independent of the
    vectorized shift computation used by :func:`encode`.
    """
    img, dep = as_array(stereo), as_array(depth)
    if img.shape != dep.shape:
        raise DimensionMismatch(f"{img.shape} vs {dep.shape}")
    H, W = img.shape
    bad = 0
    for i in range(H):
        row, drow = img[i], dep[i]
        for j in range(W):
            s = g.stripe_width * (1.0 - g.beta * (1.0 - float(drow[j])))
            s = int(round(s)) if rounding == "half_even" else int(np.floor(s))
            if j >= s and row[j] != row[j - s]:
                bad += 1
    return bad


def watermark_embed(stereogram: ImageLike, carrier: ImageLike, alpha: float) -> GrayImage:
    """Superimpose: ``alpha * stereogram + (1 - alpha) * carrier``."""
    if not (0.0 <= alpha <= 1.0):
        raise AlphaOutOfRange(f"alpha must be in [0, 1], got {alpha}")
    s, c = as_array(stereogram), as_array(carrier)
    if s.shape != c.shape:
        raise DimensionMismatch(f"stereogram {s.shape} vs carrier {c.shape}")
    if alpha == 0.0:
        return as_image(carrier)
    if alpha == 1.0:
        return as_image(stereogram)
    return GrayImage(alpha * s + (1.0 - alpha) * c)
