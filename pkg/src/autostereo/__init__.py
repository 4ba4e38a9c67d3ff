"""Autostereogram encoding, classic and neural decoding, on numpy."""

__version__ = "0.1.0"

from . import classic, datagen, imgcore, stereogram  # noqa: E402
from .errors import AutostereoError  # noqa: E402
from .imgcore import GrayImage, load_image, psnr, save_image, ssim  # noqa: E402
from .stereogram import EncodeOptions, StereoGeometry, encode, encode_random_dot  # noqa: E402

__all__ = [
    "__version__", "AutostereoError", "GrayImage", "load_image", "save_image", "psnr", "ssim",
    "StereoGeometry", "EncodeOptions", "encode", "encode_random_dot",
    "classic", "datagen", "imgcore", "stereogram",
]
