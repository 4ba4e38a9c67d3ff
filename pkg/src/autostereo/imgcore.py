"""Grayscale image type, file I/O, resampling, quality metrics, degradations.

Every raster in the package is a :class:`GrayImage`: a read-only ``(H, W)``
float64 array with values clamped into ``[0, 1]``.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import fft as sfft
from scipy import ndimage

from .errors import (
    CorruptData,
    DimensionMismatch,
    InvalidSpec,
    TooSmall,
    UnsupportedFormat,
    ZeroDimension,
)

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
PSNR_CAP_DB = 99.0

# ITU-T T.81 Annex K luminance quantization table.
JPEG_LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Immutable single-channel raster with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionMismatch(f"expected a 2-D array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ZeroDimension(f"image has a zero dimension: {arr.shape}")
        arr = np.clip(arr, 0.0, 1.0)  # also copies, so callers can't mutate us
        arr = np.nan_to_num(arr, nan=0.0)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.data
        return self.data.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __repr__(self):
        return f"GrayImage({self.height}x{self.width})"

    @classmethod
    def full(cls, height, width, value):
        return cls(np.full((height, width), float(value)))


ImageLike = Union[GrayImage, np.ndarray]


def as_image(img: ImageLike) -> GrayImage:
    return img if isinstance(img, GrayImage) else GrayImage(img)


def as_array(img: ImageLike) -> np.ndarray:
    return img.data if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)


# --------------------------------------------------------------------------
# file I/O
# --------------------------------------------------------------------------

def load_image(path) -> GrayImage:
    """Read an 8/16-bit grayscale or RGB raster (PNG, PGM, ...).

    RGB is reduced to luminance with the Rec. 601 weights; integer samples
    are divided by the full-scale value of their bit depth.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    try:
        with Image.open(path) as im:
            im.load()
            return GrayImage(_pil_to_unit(im))
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"{path}: not a recognised raster") from exc
    except (OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, UnsupportedFormat):
            raise
        raise CorruptData(f"{path}: {exc}") from exc


def _pil_to_unit(im):
    mode = im.mode
    if mode in ("L", "P", "LA", "PA"):
        if mode in ("P", "PA"):
            im = im.convert("RGB")
            return _rgb_to_gray(np.asarray(im, dtype=np.float64) / 255.0)
        return np.asarray(im.getchannel(0), dtype=np.float64) / 255.0
    if mode in ("RGB", "RGBA"):
        rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
        return _rgb_to_gray(rgb)
    if mode.startswith("I;16"):
        return np.asarray(im, dtype=np.float64) / 65535.0
    if mode == "I":
        arr = np.asarray(im, dtype=np.float64)
        # PNG 16-bit gray sometimes decodes as mode "I"
        scale = 65535.0 if arr.max(initial=0) > 255 else 255.0
        return arr / scale
    if mode == "1":
        return np.asarray(im, dtype=np.float64)
    if mode == "F":
        return np.asarray(im, dtype=np.float64)
    raise UnsupportedFormat(f"unsupported pixel mode {mode!r}")


def _rgb_to_gray(rgb):
    w = np.asarray(LUMA_WEIGHTS)
    return rgb[..., 0] * w[0] + rgb[..., 1] * w[1] + rgb[..., 2] * w[2]


def to_uint8(img: ImageLike) -> np.ndarray:
    return np.round(as_array(img) * 255.0).astype(np.uint8)


def save_image(img: ImageLike, path) -> Path:
    """Write an 8-bit grayscale PNG (or binary PGM for a ``.pgm`` suffix)."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    arr = to_uint8(as_image(img))
    fmt = "PPM" if path.suffix.lower() in (".pgm", ".pnm") else "PNG"
    Image.fromarray(arr, mode="L").save(path, format=fmt)
    return path


# --------------------------------------------------------------------------
# resampling
# --------------------------------------------------------------------------

def resize(img: ImageLike, h: int, w: int, mode: str = "bilinear") -> GrayImage:
    """Resample to exactly ``(h, w)`` using half-pixel-centre sampling."""
    if h < 1 or w < 1:
        raise ZeroDimension(f"target size must be positive, got {h}x{w}")
    src = as_array(img)
    H, W = src.shape
    if (H, W) == (h, w):
        return as_image(img)
    if mode == "nearest":
        ri = np.minimum(((np.arange(h) + 0.5) * H / h).astype(np.int64), H - 1)
        ci = np.minimum(((np.arange(w) + 0.5) * W / w).astype(np.int64), W - 1)
        return GrayImage(src[ri][:, ci])
    if mode != "bilinear":
        raise ValueError(f"unknown resize mode {mode!r}")
    r0, r1, fr = _linear_taps(H, h)
    c0, c1, fc = _linear_taps(W, w)
    top = src[r0] * (1 - fr)[:, None] + src[r1] * fr[:, None]
    out = top[:, c0] * (1 - fc)[None, :] + top[:, c1] * fc[None, :]
    return GrayImage(out)


def _linear_taps(n_src, n_dst):
    pos = (np.arange(n_dst) + 0.5) * n_src / n_dst - 0.5
    pos = np.clip(pos, 0.0, n_src - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_src - 1)
    return lo, hi, pos - lo


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

def _check_same(a, b):
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")


def psnr(a: ImageLike, b: ImageLike) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images, capped at 99."""
    x, y = as_array(a), as_array(b)
    _check_same(x, y)
    mse = float(np.mean((x - y) ** 2))
    if mse < 1e-10:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse))


SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def gaussian_window(size=SSIM_WIN, sigma=SSIM_SIGMA):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, g):
    k = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim_map(a: ImageLike, b: ImageLike) -> np.ndarray:
    x, y = as_array(a), as_array(b)
    _check_same(x, y)
    if x.shape[0] < SSIM_WIN or x.shape[1] < SSIM_WIN:
        raise TooSmall(f"SSIM needs at least {SSIM_WIN}x{SSIM_WIN}, got {x.shape}")
    g = gaussian_window()
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + SSIM_C1) * (2 * sxy + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (sxx + syy + SSIM_C2)
    return num / den


def ssim(a: ImageLike, b: ImageLike) -> float:
    """Mean SSIM over all fully-contained 11x11 Gaussian windows."""
    return float(np.mean(ssim_map(a, b)))


# --------------------------------------------------------------------------
# degradations
# --------------------------------------------------------------------------

DEGRADE_KINDS = ("gaussian_blur", "block_dct_quantize", "exposure_gain", "additive_noise")


@dataclass(frozen=True)
class DegradeSpec:
    kind: str
    sigma: float = 1.0
    quality: int = 20
    gain: float = 1.5

    def __post_init__(self):
        if self.kind not in DEGRADE_KINDS:
            raise InvalidSpec(f"unknown degradation {self.kind!r}")
        if self.kind in ("gaussian_blur", "additive_noise") and not self.sigma > 0:
            raise InvalidSpec(f"sigma must be > 0, got {self.sigma}")
        if self.kind == "block_dct_quantize" and not (1 <= int(self.quality) <= 100):
            raise InvalidSpec(f"quality must be in 1..100, got {self.quality}")
        if self.kind == "exposure_gain" and not self.gain > 0:
            raise InvalidSpec(f"gain must be > 0, got {self.gain}")

    @classmethod
    def blur(cls, sigma):
        return cls("gaussian_blur", sigma=sigma)

    @classmethod
    def jpeg(cls, quality):
        return cls("block_dct_quantize", quality=int(quality))

    @classmethod
    def exposure(cls, gain):
        return cls("exposure_gain", gain=gain)

    @classmethod
    def noise(cls, sigma):
        return cls("additive_noise", sigma=sigma)

    @classmethod
    def parse(cls, text: str) -> "DegradeSpec":
        """Parse ``blur:1.0``, ``jpeg:20``, ``gain:1.5`` or ``noise:0.05``."""
        name, _, val = text.partition(":")
        try:
            if name in ("blur", "gaussian_blur"):
                return cls.blur(float(val or 1.0))
            if name in ("jpeg", "block_dct_quantize"):
                return cls.jpeg(int(val or 20))
            if name in ("gain", "exposure", "exposure_gain"):
                return cls.exposure(float(val or 1.5))
            if name in ("noise", "additive_noise"):
                return cls.noise(float(val or 0.05))
        except ValueError as exc:
            raise InvalidSpec(f"bad degradation {text!r}: {exc}") from exc
        raise InvalidSpec(f"unknown degradation {text!r}")

    def label(self):
        if self.kind == "gaussian_blur":
            return f"blur{self.sigma:g}"
        if self.kind == "block_dct_quantize":
            return f"jpeg{self.quality}"
        if self.kind == "exposure_gain":
            return f"gain{self.gain:g}"
        return f"noise{self.sigma:g}"


def quant_table(quality: int) -> np.ndarray:
    """Luminance quantization steps for a quality in 1..100.

    Uses the libjpeg percentage (5000/q below 50, 200 - 2q from 50 up) but
    keeps the scaled steps real-valued; a zero step (quality 100) means the
    coefficient is not quantized at all.
    """
    q = int(quality)
    scale = 5000.0 / q if q < 50 else 200.0 - 2.0 * q
    return JPEG_LUMA_TABLE * (scale / 100.0)


def block_dct_quantize(x: np.ndarray, quality: int) -> np.ndarray:
    """Quantize 8x8 orthonormal DCT blocks on the 0..255 scale."""
    H, W = x.shape
    ph, pw = (-H) % 8, (-W) % 8
    padded = np.pad(x * 255.0 - 128.0, ((0, ph), (0, pw)), mode="edge")
    bh, bw = padded.shape[0] // 8, padded.shape[1] // 8
    blocks = padded.reshape(bh, 8, bw, 8).transpose(0, 2, 1, 3)
    coef = sfft.dctn(blocks, axes=(2, 3), norm="ortho")
    q = quant_table(quality)
    step = np.where(q > 0, q, 1.0)
    coef = np.where(q > 0, np.round(coef / step) * step, coef)
    rec = sfft.idctn(coef, axes=(2, 3), norm="ortho")
    rec = rec.transpose(0, 2, 1, 3).reshape(padded.shape)[:H, :W]
    return (rec + 128.0) / 255.0


def degrade(img: ImageLike, spec: DegradeSpec, seed: int = 0) -> GrayImage:
    """Apply one photometric degradation; output is clamped to [0, 1]."""
    if not isinstance(spec, DegradeSpec):
        raise InvalidSpec(f"expected DegradeSpec, got {type(spec).__name__}")
    x = as_array(img)
    if spec.kind == "gaussian_blur":
        out = ndimage.gaussian_filter(x, sigma=float(spec.sigma), mode="reflect")
    elif spec.kind == "block_dct_quantize":
        out = block_dct_quantize(x, spec.quality)
    elif spec.kind == "exposure_gain":
        out = x * float(spec.gain)
    else:
        rng = np.random.default_rng(seed)
        out = x + rng.normal(0.0, float(spec.sigma), size=x.shape)
    return GrayImage(np.clip(out, 0.0, 1.0))


def minmax_normalize(x: np.ndarray) -> np.ndarray:
    """Linear rescale to [0, 1]; a constant input maps to 0.5 everywhere."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = float(x.min()), float(x.max())
    if not np.isfinite(lo) or not np.isfinite(hi):
        x = np.nan_to_num(x, nan=0.0, posinf=0.0, neginf=0.0)
        lo, hi = float(x.min()), float(x.max())
    if hi - lo < 1e-12:
        return np.full_like(x, 0.5)
    return (x - lo) / (hi - lo)
