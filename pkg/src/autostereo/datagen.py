"""Procedural depth scenes, textures and self-supervised training pairs.

Nothing here needs external data: depth maps come from analytic shapes and
an embedded digit font, textures from seeded noise.  Every item of a
:class:`DatasetStream` is a pure function of ``(config, seed, index)``.
"""

import csv
import gzip
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import InvalidSpec
from .font import NUM_GLYPHS, glyph
from .imgcore import DegradeSpec, GrayImage, as_array, degrade, load_image, resize
from .stereogram import EncodeOptions, StereoGeometry, encode

SCENE_KINDS = ("ellipsoid", "ramp", "polygon", "glyph", "composite")
TEXTURE_KINDS = ("random_dot", "value_noise", "mixed", "tiles")


def derive_seed(*parts) -> int:
    """Stable 32-bit seed from integer or string parts (independent of hash salting)."""
    words = [zlib.crc32(p.encode("utf-8")) if isinstance(p, str) else int(p) & 0xFFFFFFFF for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


@dataclass(frozen=True)
class Pose:
    scale: float = 1.0
    offset: Tuple[float, float] = (0.0, 0.0)  # (dy, dx) as fractions of the image size
    rotation: float = 0.0  # degrees, counter-clockwise


IDENTITY_POSE = Pose()


@dataclass(frozen=True)
class PoseRange:
    scale: Tuple[float, float] = (1.0, 1.0)
    offset: Tuple[float, float] = (0.0, 0.0)
    rotation: Tuple[float, float] = (0.0, 0.0)

    def sample(self, rng) -> Pose:
        s = rng.uniform(*self.scale) if self.scale[1] > self.scale[0] else self.scale[0]
        dy, dx = (rng.uniform(*self.offset, size=2) if self.offset[1] > self.offset[0]
                  else (self.offset[0], self.offset[0]))
        r = (rng.uniform(*self.rotation) if self.rotation[1] > self.rotation[0]
             else self.rotation[0])
        return Pose(float(s), (float(dy), float(dx)), float(r))


@dataclass(frozen=True)
class SceneSpec:
    """What to draw.  The background is always the far plane (depth 1.0).

    ``category`` selects the digit for glyph scenes; ``None`` draws a random
    one.  ``k`` bounds the number of shapes in a composite.
    """

    kind: str = "glyph"
    size: Tuple[int, int] = (64, 64)
    pose: PoseRange = field(default_factory=PoseRange)
    depth_levels: Tuple[float, float] = (0.0, 1.0)
    category: Optional[int] = None
    k: int = 3

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise InvalidSpec(f"unknown scene kind {self.kind!r}")
        near, far = self.depth_levels
        if not (0.0 <= near <= far <= 1.0):
            raise InvalidSpec(f"depth_levels must satisfy 0 <= near <= far <= 1, got {self.depth_levels}")
        if self.size[0] < 1 or self.size[1] < 1:
            raise InvalidSpec(f"bad size {self.size}")
        if self.category is not None and not 0 <= self.category < NUM_GLYPHS:
            raise InvalidSpec(f"glyph category out of range: {self.category}")
        if self.kind == "composite" and self.k < 1:
            raise InvalidSpec("composite needs k >= 1")
        if self.pose.scale[0] <= 0:
            raise InvalidSpec("pose scale must be positive")


# pose ranges used by the toy benchmark
GLYPH_POSES = PoseRange(scale=(0.55, 0.8), offset=(-0.1, 0.1), rotation=(-10.0, 10.0))
SHAPE_POSES = PoseRange(scale=(0.3, 0.7), offset=(-0.2, 0.2), rotation=(-90.0, 90.0))


def _object_coords(size, pose: Pose):
    """Pixel centres mapped into the object's unit frame ([-0.5, 0.5]^2 at scale 1)."""
    H, W = size
    y = np.arange(H) + 0.5
    x = np.arange(W) + 0.5
    yy, xx = np.meshgrid(y, x, indexing="ij")
    cy = H / 2.0 + pose.offset[0] * H
    cx = W / 2.0 + pose.offset[1] * W
    dy, dx = yy - cy, xx - cx
    t = np.deg2rad(pose.rotation)
    c, s = np.cos(t), np.sin(t)
    # inverse rotation; image y points down so ccw on screen flips the sign
    ux = c * dx - s * dy
    uy = s * dx + c * dy
    return uy / (pose.scale * H), ux / (pose.scale * W)


def _raster_glyph(size, pose, category, level):
    uy, ux = _object_coords(size, pose)
    gy = np.floor((uy + 0.5) * 8).astype(np.int64)
    gx = np.floor((ux + 0.5) * 8).astype(np.int64)
    inside = (gy >= 0) & (gy < 8) & (gx >= 0) & (gx < 8)
    bm = glyph(category)
    ink = np.zeros(size, dtype=bool)
    ink[inside] = bm[gy[inside], gx[inside]]
    out = np.ones(size)
    out[ink] = level
    return out


def _raster_ellipsoid(size, pose, near, far):
    uy, ux = _object_coords(size, pose)
    r2 = (2 * ux) ** 2 + (2 * uy) ** 2
    out = np.ones(size)
    inside = r2 < 1.0
    out[inside] = far - (far - near) * np.sqrt(1.0 - r2[inside])
    return out


def _raster_ramp(size, pose, near, far):
    uy, ux = _object_coords(size, pose)
    W = size[1]
    # at identity pose the centre of column j maps to ux = (j + 0.5)/W - 0.5
    t = (ux * pose.scale * W + W / 2.0 - 0.5) / max(W - 1, 1)
    return near + (far - near) * np.clip(t, 0.0, 1.0)


def _raster_polygon(size, pose, level, rng):
    n = int(rng.integers(3, 8))
    ang = np.sort(rng.uniform(0, 2 * np.pi, size=n))
    rad = rng.uniform(0.3, 0.5, size=n)
    vy, vx = rad * np.sin(ang), rad * np.cos(ang)
    uy, ux = _object_coords(size, pose)
    # convex hull of star-shaped points is overkill; even-odd fill of the star polygon
    inside = np.zeros(size, dtype=bool)
    for a in range(n):
        b = (a + 1) % n
        cond = (vy[a] > uy) != (vy[b] > uy)
        xint = (vx[b] - vx[a]) * (uy - vy[a]) / (vy[b] - vy[a] + 1e-300) + vx[a]
        inside ^= cond & (ux < xint)
    out = np.ones(size)
    out[inside] = level
    return out


def _pick_level(rng, near, far):
    return float(rng.uniform(near, far)) if far > near else near


def gen_scene(spec: SceneSpec, seed: int):
    """Return ``(depth_array, label)`` for a scene."""
    if not isinstance(spec, SceneSpec):
        raise InvalidSpec(f"expected SceneSpec, got {type(spec).__name__}")
    rng = np.random.default_rng(seed)
    near, far = spec.depth_levels
    size = tuple(spec.size)
    pose = spec.pose.sample(rng)
    if spec.kind == "glyph":
        cat = spec.category if spec.category is not None else int(rng.integers(NUM_GLYPHS))
        return _raster_glyph(size, pose, cat, near), cat
    if spec.kind == "ellipsoid":
        return _raster_ellipsoid(size, pose, near, far), None
    if spec.kind == "ramp":
        return _raster_ramp(size, pose, near, far), None
    if spec.kind == "polygon":
        return _raster_polygon(size, pose, _pick_level(rng, near, far), rng), None
    # composite
    count = int(rng.integers(1, spec.k + 1))
    out = np.ones(size)
    for _ in range(count):
        kind = ("ellipsoid", "polygon", "glyph")[int(rng.integers(3))]
        sub = replace(spec, kind=kind, pose=SHAPE_POSES if spec.pose == PoseRange() else spec.pose,
                      category=None)
        piece, _ = gen_scene(sub, int(rng.integers(2 ** 31)))
        out = np.minimum(out, piece)  # nearer surface wins
    return out, None


def gen_depth(spec: SceneSpec, seed: int = 0) -> GrayImage:
    """Hard-edged procedural depth map in [0, 1], background at 1.0."""
    return GrayImage(gen_scene(spec, seed)[0])


# --------------------------------------------------------------------------
# textures and carriers
# --------------------------------------------------------------------------

def value_noise(height, width, cell, rng, octaves=1):
    """Bilinearly interpolated lattice noise, rescaled to [0, 1]."""
    acc = np.zeros((height, width))
    amp = 1.0
    for o in range(octaves):
        c = max(1, int(round(cell / (2 ** o))))
        gh, gw = height // c + 2, width // c + 2
        coarse = rng.random((gh, gw))
        acc += amp * as_array(resize(coarse, gh * c, gw * c, "bilinear"))[:height, :width]
        amp *= 0.5
    lo, hi = acc.min(), acc.max()
    return (acc - lo) / (hi - lo) if hi > lo else np.full_like(acc, 0.5)


@dataclass(frozen=True)
class TextureSpec:
    kind: str = "mixed"
    tiles: Tuple[GrayImage, ...] = ()

    def __post_init__(self):
        if self.kind not in TEXTURE_KINDS:
            raise InvalidSpec(f"unknown texture kind {self.kind!r}")
        if self.kind == "tiles" and not self.tiles:
            raise InvalidSpec("texture kind 'tiles' needs at least one tile")

    def render(self, height, width, seed) -> GrayImage:
        rng = np.random.default_rng(seed)
        kind = self.kind
        if kind == "mixed":
            kind = "random_dot" if rng.random() < 0.5 else "value_noise"
        if kind == "random_dot":
            return GrayImage(rng.random((height, width)))
        if kind == "value_noise":
            return GrayImage(value_noise(height, width, int(rng.integers(1, 4)), rng))
        tile = self.tiles[int(rng.integers(len(self.tiles)))]
        return resize(tile, height, width, "bilinear")


def gen_carrier(size, seed) -> GrayImage:
    """Smooth 'natural-looking' carrier image for watermark experiments."""
    rng = np.random.default_rng(seed)
    H, W = size
    base = value_noise(H, W, int(rng.integers(8, 24)), rng, octaves=4)
    yy, xx = np.mgrid[0:H, 0:W] / max(H, W)
    t = rng.uniform(0, 2 * np.pi)
    grad = np.cos(t) * xx + np.sin(t) * yy
    img = 0.6 * base + 0.4 * (grad - grad.min()) / (np.ptp(grad) + 1e-12)
    for _ in range(int(rng.integers(1, 4))):
        cy, cx = rng.uniform(0, H), rng.uniform(0, W)
        ry, rx = rng.uniform(0.1, 0.3) * H, rng.uniform(0.1, 0.3) * W
        mask = ((np.arange(H)[:, None] - cy) / ry) ** 2 + ((np.arange(W)[None, :] - cx) / rx) ** 2 < 1
        img[mask] = 0.5 * img[mask] + 0.5 * rng.random()
    return GrayImage(ndimage.gaussian_filter(img, 0.7))


# --------------------------------------------------------------------------
# training pairs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AugConfig:
    """Augmentation knobs.  Photometric terms only ever touch the stereogram."""

    crop_pad: int = 0
    flip: bool = False
    rotation: float = 0.0
    blur_prob: float = 0.0
    blur_sigma: Tuple[float, float] = (0.3, 1.2)
    jpeg_prob: float = 0.0
    jpeg_quality: Tuple[int, int] = (20, 90)
    gain_prob: float = 0.0
    gain: Tuple[float, float] = (0.7, 1.5)

    @classmethod
    def disabled(cls):
        return cls()

    @classmethod
    def training(cls):
        return cls(crop_pad=8, rotation=5.0, blur_prob=0.3, jpeg_prob=0.3, gain_prob=0.2)

    @property
    def enabled(self):
        return self != AugConfig()


@dataclass(frozen=True)
class SamplePair:
    stereogram: GrayImage
    depth: GrayImage
    label: Optional[int]
    geometry: StereoGeometry
    seed: int
    flipped: bool = False
    clean_stereogram: Optional[GrayImage] = None  # before photometric augmentation
    applied: Tuple[str, ...] = ()


def make_sample(spec: SceneSpec, g: StereoGeometry, aug: AugConfig = None, seed: int = 0,
                texture: TextureSpec = None) -> SamplePair:
    """Render one (stereogram, depth) pair.

    Crop and flip act identically on both images; blur, block quantization
    and exposure act on the stereogram only.  Rotation is applied to the
    scene before encoding so horizontal disparity is preserved.
    """
    aug = aug or AugConfig()
    texture = texture or TextureSpec("random_dot")
    rng = np.random.default_rng(derive_seed(seed, 1))
    H, W = spec.size
    pad = int(aug.crop_pad)
    big = replace(spec, size=(H + pad, W + pad)) if pad else spec
    depth, label = gen_scene(big, derive_seed(seed, 2))
    applied = []
    if aug.rotation > 0:
        angle = float(rng.uniform(-aug.rotation, aug.rotation))
        depth = ndimage.rotate(depth, angle, reshape=False, order=0, mode="constant", cval=1.0)
        applied.append(f"rotate{angle:.2f}")
    tex = texture.render(depth.shape[0], g.stripe_width, derive_seed(seed, 3))
    stereo = as_array(encode(depth, EncodeOptions(geometry=g, texture=tex)))
    if pad:
        oy, ox = int(rng.integers(pad + 1)), int(rng.integers(pad + 1))
        stereo = stereo[oy:oy + H, ox:ox + W]
        depth = depth[oy:oy + H, ox:ox + W]
        applied.append(f"crop{oy},{ox}")
    flipped = bool(aug.flip and rng.random() < 0.5)
    if flipped:
        stereo, depth = stereo[:, ::-1], depth[:, ::-1]
        applied.append("flip")
    clean = GrayImage(stereo)
    out = clean
    if aug.blur_prob and rng.random() < aug.blur_prob:
        sigma = float(rng.uniform(*aug.blur_sigma))
        out = degrade(out, DegradeSpec.blur(sigma))
        applied.append(f"blur{sigma:.2f}")
    if aug.jpeg_prob and rng.random() < aug.jpeg_prob:
        q = int(rng.integers(aug.jpeg_quality[0], aug.jpeg_quality[1] + 1))
        out = degrade(out, DegradeSpec.jpeg(q))
        applied.append(f"jpeg{q}")
    if aug.gain_prob and rng.random() < aug.gain_prob:
        gain = float(rng.uniform(*aug.gain))
        out = degrade(out, DegradeSpec.exposure(gain))
        applied.append(f"gain{gain:.2f}")
    return SamplePair(out, GrayImage(depth), label, g, seed, flipped, clean, tuple(applied))


@dataclass(frozen=True)
class DatasetConfig:
    scene: SceneSpec = field(default_factory=lambda: SceneSpec("glyph", pose=GLYPH_POSES))
    geometry: Optional[StereoGeometry] = None  # None: stripe = width / 8, beta = 0.5
    aug: AugConfig = field(default_factory=AugConfig)
    texture: TextureSpec = field(default_factory=TextureSpec)
    test_fraction: float = 0.1

    def resolved_geometry(self) -> StereoGeometry:
        return self.geometry or StereoGeometry.for_width(self.scene.size[1])


def is_test_index(seed: int, k: int, fraction: float = 0.1) -> bool:
    bucket = derive_seed(seed, k, 0x5EED) % 1000
    return bucket < int(round(fraction * 1000))


class DatasetStream(Sequence):
    """Replayable indexed stream of :class:`SamplePair`.

    ``stream[k]`` depends only on ``(config, seed, k)``; the 90/10 train/test
    partition is decided by a hash of ``(seed, k)``.
    """

    def __init__(self, n: int, config: DatasetConfig = None, seed: int = 0):
        if n < 1:
            raise InvalidSpec("dataset needs n >= 1")
        self.n = int(n)
        self.config = config or DatasetConfig()
        self.seed = int(seed)

    def __len__(self):
        return self.n

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[i] for i in range(*k.indices(self.n))]
        if k < 0:
            k += self.n
        if not 0 <= k < self.n:
            raise IndexError(k)
        c = self.config
        return make_sample(c.scene, c.resolved_geometry(), c.aug, derive_seed(self.seed, k), c.texture)

    def is_test(self, k):
        return is_test_index(self.seed, k, self.config.test_fraction)

    def train_indices(self):
        return [k for k in range(self.n) if not self.is_test(k)]

    def test_indices(self):
        return [k for k in range(self.n) if self.is_test(k)]

    def items(self, indices, workers: int = 0):
        """Materialize items in index order, optionally on worker threads."""
        if workers and workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                return list(pool.map(self.__getitem__, indices))
        return [self[k] for k in indices]


def dataset_stream(n: int, config: DatasetConfig = None, seed: int = 0) -> DatasetStream:
    return DatasetStream(n, config, seed)


def split_take(config: DatasetConfig, seed: int, split: str, count: int, clean: bool = False):
    """First ``count`` indices of a split, walking the stream in order.

    ``clean`` drops augmentation (evaluation sets are always rendered clean).
    """
    if split not in ("train", "test"):
        raise ValueError(split)
    if clean:
        config = replace(config, aug=AugConfig())
    want_test = split == "test"
    idx, k = [], 0
    while len(idx) < count:
        if is_test_index(seed, k, config.test_fraction) == want_test:
            idx.append(k)
        k += 1
    return DatasetStream(k, config, seed), idx


def stack_pairs(pairs, dtype=np.float32):
    """Batch arrays ``(x, y, labels)`` shaped (N,1,H,W), (N,1,H,W), (N,)."""
    x = np.stack([p.stereogram.data for p in pairs])[:, None].astype(dtype)
    y = np.stack([p.depth.data for p in pairs])[:, None].astype(dtype)
    labels = np.array([-1 if p.label is None else p.label for p in pairs], dtype=np.int64)
    return x, y, labels


# --------------------------------------------------------------------------
# external corpora
# --------------------------------------------------------------------------

def load_manifest(directory, manifest: str = "manifest.csv"):
    """Read ``path,label`` rows; returns a list of (GrayImage, label or None)."""
    directory = Path(directory)
    rows = []
    with open(directory / manifest, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().lower() == "path":
                continue
            label = int(rec[1]) if len(rec) > 1 and rec[1].strip() != "" else None
            rows.append((load_image(directory / rec[0].strip()), label))
    return rows


def read_idx(path) -> np.ndarray:
    """Read an MNIST-style IDX file (optionally gzipped)."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0:
        raise InvalidSpec(f"{path}: not an IDX file")
    dtypes = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}
    code, ndim = raw[2], raw[3]
    if code not in dtypes:
        raise InvalidSpec(f"{path}: unknown IDX type 0x{code:02x}")
    dims = struct.unpack(">" + "I" * ndim, raw[4:4 + 4 * ndim])
    data = np.frombuffer(raw, dtype=dtypes[code], offset=4 + 4 * ndim)
    return data.reshape(dims)


def idx_depth_pairs(images_path, labels_path=None, size=(64, 64), invert=True):
    """MNIST digits as depth maps: ink is near, paper is the far plane."""
    imgs = read_idx(images_path).astype(np.float64)
    imgs /= imgs.max() if imgs.max() > 0 else 1.0
    labels = read_idx(labels_path) if labels_path else [None] * len(imgs)
    out = []
    for im, lab in zip(imgs, labels):
        d = 1.0 - im if invert else im
        out.append((resize(d, size[0], size[1], "bilinear"), None if lab is None else int(lab)))
    return out


def external_sample(depth: GrayImage, g: StereoGeometry, seed: int, label=None,
                    texture: TextureSpec = None) -> SamplePair:
    texture = texture or TextureSpec("random_dot")
    d = as_array(depth)
    tex = texture.render(d.shape[0], g.stripe_width, derive_seed(seed, 3))
    st = encode(d, EncodeOptions(geometry=g, texture=tex))
    return SamplePair(st, GrayImage(d), label, g, seed, False, st, ())
