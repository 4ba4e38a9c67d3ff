"""Decoder and classifier networks for the ablation matrix.

``unet_tiny``: stem, 3 stride-2 encoder stages, 3 upsampling decoder stages
with skip connections (always on), 1x1 output conv without activation.
A categories head replaces the decoder stages with one fully connected
layer over the flattened coarsest feature map; retrieval features are that
map globally average-pooled.

``resnet_lite``: stem, 4 residual blocks (3 of them stride 2), then either a
3-stage upsampling head (two convs per stage) or the same fully connected
categories head.  ``feature_fusion`` adds 1x1 lateral connections from the
encoder into the head at matching resolutions.
"""

import hashlib
import json
import re
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from ..autograd import nn, ops
from ..autograd.tensor import DEFAULT_DTYPE
from ..errors import ConfigInvalid

BACKBONES = ("unet_tiny", "resnet_lite")
NORMS = ("none", "batch", "instance")


@dataclass(frozen=True)
class ModelConfig:
    backbone: str = "unet_tiny"
    input_size: int = 64
    use_disparity_conv: bool = True
    norm: str = "batch"
    feature_fusion: bool = False
    m: Optional[int] = None
    head: str = "pixel_regression"
    num_classes: int = 10
    base_channels: int = 16

    def __post_init__(self):
        head = self.head
        mt = re.fullmatch(r"categories\((\d+)\)", head)
        if mt:
            object.__setattr__(self, "head", "categories")
            object.__setattr__(self, "num_classes", int(mt.group(1)))
        if self.backbone not in BACKBONES:
            raise ConfigInvalid(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")
        if self.norm not in NORMS:
            raise ConfigInvalid(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.head not in ("pixel_regression", "categories"):
            raise ConfigInvalid(f"unknown head {head!r}")
        if self.input_size < 8 or self.input_size % 8:
            raise ConfigInvalid(f"input_size must be a positive multiple of 8, got {self.input_size}")
        if self.m is None:
            object.__setattr__(self, "m", self.input_size // 4)
        if not 1 <= self.m <= self.input_size:
            raise ConfigInvalid(f"m must lie in [1, input_size], got {self.m}")
        if self.head == "categories" and self.num_classes < 2:
            raise ConfigInvalid("a categories head needs at least 2 classes")
        if self.base_channels < 1:
            raise ConfigInvalid("base_channels must be positive")

    @property
    def name(self):
        prefix = "Stereo-" if self.use_disparity_conv else ""
        arch = {"unet_tiny": "UNet", "resnet_lite": "ResNet"}[self.backbone]
        norm = {"none": "", "batch": " (BN)", "instance": " (IN)"}[self.norm]
        ff = " + FF" if self.feature_fusion and self.backbone == "resnet_lite" else ""
        head = " [cls]" if self.head == "categories" else ""
        return f"{prefix}{arch}{norm}{ff}{head}"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def fingerprint(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]


def _flatten(t):
    return ops.reshape(t, (t.shape[0], -1))


class ConvBlock(nn.Module):
    def __init__(self, c_in, c_out, norm, stride=1, rng=None, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 3, stride=stride, rng=rng, dtype=dtype)
        self.norm = nn.make_norm(norm, c_out, dtype)

    def forward(self, x):
        return ops.relu(self.norm(self.conv(x)))


class Stem(nn.Module):
    """Input end: disparity conv (or a plain conv on the image) followed by ReLU."""

    def __init__(self, cfg: ModelConfig, c_out, rng, dtype=DEFAULT_DTYPE):
        super().__init__()
        if cfg.use_disparity_conv:
            self.conv = nn.DisparityConv(cfg.m, c_out, 3, rng=rng, dtype=dtype)
        else:
            self.conv = nn.Conv2d(1, c_out, 3, rng=rng, dtype=dtype)

    def forward(self, x):
        return ops.relu(self.conv(x))


class UNetTiny(nn.Module):
    def __init__(self, cfg: ModelConfig, rng, dtype=DEFAULT_DTYPE):
        super().__init__()
        b = cfg.base_channels
        self.cfg = cfg
        self.stem = Stem(cfg, b, rng, dtype)
        self.enc0 = ConvBlock(b, b, cfg.norm, rng=rng, dtype=dtype)
        self.down1 = ConvBlock(b, 2 * b, cfg.norm, stride=2, rng=rng, dtype=dtype)
        self.down2 = ConvBlock(2 * b, 4 * b, cfg.norm, stride=2, rng=rng, dtype=dtype)
        self.down3 = ConvBlock(4 * b, 8 * b, cfg.norm, stride=2, rng=rng, dtype=dtype)
        if cfg.head == "pixel_regression":
            self.up3 = ConvBlock(8 * b + 4 * b, 4 * b, cfg.norm, rng=rng, dtype=dtype)
            self.up2 = ConvBlock(4 * b + 2 * b, 2 * b, cfg.norm, rng=rng, dtype=dtype)
            self.up1 = ConvBlock(2 * b + b, b, cfg.norm, rng=rng, dtype=dtype)
            self.out = nn.Conv2d(b, 1, 1, rng=rng, dtype=dtype)
        else:
            self.fc = nn.Linear(8 * b * (cfg.input_size // 8) ** 2, cfg.num_classes, rng=rng, dtype=dtype)

    def encode(self, x):
        e0 = self.enc0(self.stem(x))
        e1 = self.down1(e0)
        e2 = self.down2(e1)
        e3 = self.down3(e2)
        return e0, e1, e2, e3

    def features(self, x):
        return ops.global_avg_pool(self.encode(x)[-1])

    def forward(self, x):
        e0, e1, e2, e3 = self.encode(x)
        if self.cfg.head == "categories":
            return self.fc(_flatten(e3))
        d = self.up3(ops.concat([ops.upsample_nearest(e3, 2), e2]))
        d = self.up2(ops.concat([ops.upsample_nearest(d, 2), e1]))
        d = self.up1(ops.concat([ops.upsample_nearest(d, 2), e0]))
        return self.out(d)


class ResidualBlock(nn.Module):
    def __init__(self, c_in, c_out, norm, stride, rng, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride=stride, rng=rng, dtype=dtype)
        self.norm1 = nn.make_norm(norm, c_out, dtype)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, rng=rng, dtype=dtype)
        self.norm2 = nn.make_norm(norm, c_out, dtype)
        if stride != 1 or c_in != c_out:
            self.proj = nn.Conv2d(c_in, c_out, 1, stride=stride, padding=0, rng=rng, dtype=dtype)
            self.proj_norm = nn.make_norm(norm, c_out, dtype)
        else:
            self.proj = None

    def forward(self, x):
        h = ops.relu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        sc = x if self.proj is None else self.proj_norm(self.proj(x))
        return ops.relu(h + sc)


class HeadStage(nn.Module):
    def __init__(self, c_in, c_out, norm, rng, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.a = ConvBlock(c_in, c_out, norm, rng=rng, dtype=dtype)
        self.b = ConvBlock(c_out, c_out, norm, rng=rng, dtype=dtype)

    def forward(self, x, lateral=None):
        h = self.a(ops.upsample_nearest(x, 2))
        if lateral is not None:
            h = h + lateral
        return self.b(h)


class ResNetLite(nn.Module):
    def __init__(self, cfg: ModelConfig, rng, dtype=DEFAULT_DTYPE):
        super().__init__()
        b = cfg.base_channels
        self.cfg = cfg
        self.stem = Stem(cfg, b, rng, dtype)
        self.block1 = ResidualBlock(b, b, cfg.norm, 2, rng, dtype)
        self.block2 = ResidualBlock(b, 2 * b, cfg.norm, 2, rng, dtype)
        self.block3 = ResidualBlock(2 * b, 4 * b, cfg.norm, 2, rng, dtype)
        self.block4 = ResidualBlock(4 * b, 4 * b, cfg.norm, 1, rng, dtype)
        if cfg.head == "pixel_regression":
            self.stage1 = HeadStage(4 * b, 2 * b, cfg.norm, rng, dtype)
            self.stage2 = HeadStage(2 * b, b, cfg.norm, rng, dtype)
            self.stage3 = HeadStage(b, b, cfg.norm, rng, dtype)
            if cfg.feature_fusion:
                self.lat1 = nn.Conv2d(2 * b, 2 * b, 1, padding=0, rng=rng, dtype=dtype)
                self.lat2 = nn.Conv2d(b, b, 1, padding=0, rng=rng, dtype=dtype)
                self.lat3 = nn.Conv2d(b, b, 1, padding=0, rng=rng, dtype=dtype)
            self.out = nn.Conv2d(b, 1, 1, rng=rng, dtype=dtype)
        else:
            self.fc = nn.Linear(4 * b * (cfg.input_size // 8) ** 2, cfg.num_classes, rng=rng, dtype=dtype)

    def encode(self, x):
        s = self.stem(x)
        f1 = self.block1(s)
        f2 = self.block2(f1)
        f3 = self.block4(self.block3(f2))
        return s, f1, f2, f3

    def features(self, x):
        return ops.global_avg_pool(self.encode(x)[-1])

    def forward(self, x):
        s, f1, f2, f3 = self.encode(x)
        if self.cfg.head == "categories":
            return self.fc(_flatten(f3))
        ff = self.cfg.feature_fusion
        h = self.stage1(f3, self.lat1(f2) if ff else None)
        h = self.stage2(h, self.lat2(f1) if ff else None)
        h = self.stage3(h, self.lat3(s) if ff else None)
        return self.out(h)


def build_model(cfg: ModelConfig, seed: int = 0, dtype=DEFAULT_DTYPE):
    """Instantiate the network described by ``cfg`` with seeded He init."""
    if not isinstance(cfg, ModelConfig):
        raise ConfigInvalid(f"expected ModelConfig, got {type(cfg).__name__}")
    rng = np.random.default_rng(seed)
    cls = UNetTiny if cfg.backbone == "unet_tiny" else ResNetLite
    return cls(cfg, rng, dtype)


def variant(cfg: ModelConfig, **changes) -> ModelConfig:
    return replace(cfg, **changes)
