"""The frozen toy benchmark and a checkpoint cache for its training runs.

Scenes are 64x64 glyphs (ten categories) drawn at depth 0.25 on the far plane,
encoded with the default geometry (beta 0.5, stripe 8) over a mix of
random-dot and value-noise textures.  Each data seed yields 2000 training
pairs with augmentation and 200 clean test pairs.

Training runs are keyed by a hash of everything that determines their result
and cached under ``$AUTOSTEREO_CACHE`` (default ``~/.cache/autostereo/toy``),
so acceptance checks and the CLI can reuse one expensive run.
"""

import hashlib
import json
import logging
import os
from dataclasses import replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .. import __version__
from ..datagen import (GLYPH_POSES, AugConfig, DatasetConfig, SceneSpec, TextureSpec, split_take,
                       stack_pairs)
from .models import ModelConfig, build_model
from .training import (TrainConfig, carriers_for, load_model, save_model, train_classifier,
                       train_decoder, train_watermark)

log = logging.getLogger(__name__)

SEEDS = (1, 2, 3)
N_TRAIN, N_TEST = 2000, 200
GLYPH_LEVELS = (0.25, 1.0)
BATCH_SIZE = 8
DECODER_STEPS = 6000
CLASSIFIER_STEPS = 3000
WATERMARK_STEPS = 2000
N_CARRIERS = 400


def dataset_config() -> DatasetConfig:
    return DatasetConfig(scene=SceneSpec("glyph", pose=GLYPH_POSES, depth_levels=GLYPH_LEVELS),
                         aug=AugConfig.training(), texture=TextureSpec("mixed"))


@lru_cache(maxsize=8)
def _arrays(seed, split, count):
    stream, idx = split_take(dataset_config(), seed, split, count, clean=(split == "test"))
    return stack_pairs(stream.items(idx))


def train_arrays(seed):
    """``(x, y, labels)`` for the augmented training split of ``seed``."""
    return _arrays(int(seed), "train", N_TRAIN)


def test_arrays(seed, count=N_TEST):
    """``(x, y, labels)`` for the clean test split of ``seed``."""
    return _arrays(int(seed), "test", int(count))


@lru_cache(maxsize=4)
def carriers(seed, n=N_CARRIERS):
    return carriers_for(n, (64, 64), seed)


def decoder_config(disparity_conv=True, backbone="unet_tiny", norm="batch") -> ModelConfig:
    return ModelConfig(backbone=backbone, use_disparity_conv=disparity_conv, norm=norm)


def classifier_config(disparity_conv=True, backbone="unet_tiny") -> ModelConfig:
    return replace(decoder_config(disparity_conv, backbone), head="categories(10)")


def train_config(seed, steps, loss="l2") -> TrainConfig:
    return TrainConfig(batch_size=BATCH_SIZE, steps=steps, lr_drop_step=steps // 2, seed=seed, loss=loss)


def cache_dir() -> Path:
    root = os.environ.get("AUTOSTEREO_CACHE")
    return Path(root) if root else Path.home() / ".cache" / "autostereo" / "toy"


def run_key(task, model_cfg: ModelConfig, tc: TrainConfig, data_seed, parent=None) -> str:
    blob = json.dumps({"task": task, "model": model_cfg.to_dict(), "train": tc.to_dict(),
                       "data": {"seed": data_seed, "n": N_TRAIN, "levels": GLYPH_LEVELS,
                                "carriers": N_CARRIERS if task == "watermark" else None},
                       "parent": parent, "version": __version__}, sort_keys=True, default=list)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _cached(task, model_cfg, tc, data_seed, fit, parent=None, progress=None):
    key = run_key(task, model_cfg, tc, data_seed, parent)
    tag = f"{task}-{key}"
    path = cache_dir() / f"{tag}.ckpt"
    if path.exists():
        log.info("reusing %s", path)
        return load_model(path)[0]
    model = fit(tag, progress)
    save_model(path, model, {"task": task, "run_key": key, "data_seed": data_seed})
    return model


def decoder(seed, disparity_conv=True, steps=DECODER_STEPS, progress=None, **model_kw):
    """Trained decoder for one data seed (trained on first use, then cached)."""
    cfg = decoder_config(disparity_conv, **model_kw)
    tc = train_config(seed, steps)

    def fit(tag, prog):
        model = build_model(cfg, seed)
        x, y, _ = train_arrays(seed)
        return train_decoder(model, (x, y), tc, cache_dir(), tag, prog).model

    return _cached("decoder", cfg, tc, seed, fit, progress=progress)


def classifier(seed, disparity_conv=True, steps=CLASSIFIER_STEPS, progress=None):
    cfg = classifier_config(disparity_conv)
    tc = train_config(seed, steps, loss="ce")

    def fit(tag, prog):
        model = build_model(cfg, seed)
        return train_classifier(model, train_arrays(seed), tc, cache_dir(), tag, prog).model

    return _cached("classifier", cfg, tc, seed, fit, progress=progress)


def watermark_decoder(seed, steps=WATERMARK_STEPS, progress=None):
    """The disparity-conv decoder of ``seed`` fine-tuned on carrier-blended inputs."""
    base = decoder(seed, True, progress=progress)
    cfg = base.cfg
    tc = train_config(seed, steps)
    parent = run_key("decoder", cfg, train_config(seed, DECODER_STEPS), seed)

    def fit(tag, prog):
        model = build_model(cfg, seed)
        model.load_state_dict(base.state_dict())
        x, y, _ = train_arrays(seed)
        return train_watermark(model, (x, y), tc, cache_dir(), tag, prog, carriers(seed)).model

    return _cached("watermark", cfg, tc, seed, fit, parent, progress)


def test_carriers(seed, n=N_TEST):
    # disjoint from the training carriers by construction of the seed
    return carriers_for(n, (64, 64), 10_000 + seed)


def chance_psnr(y, seed=0, trials=3):
    """Mean PSNR of predictions carrying no information about the target.

    Scored the same way as a decoder: a uniform-noise prediction and the
    dataset-mean depth map, each min-max renormalized, against every target.
    """
    from .evaluate import score
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(trials):
        vals.append(score(rng.random(y.shape).astype(y.dtype), y)[0])
    mean_map = np.broadcast_to(y.mean(axis=0, keepdims=True), y.shape)
    vals.append(score(np.ascontiguousarray(mean_map), y)[0])
    return float(min(vals)), float(max(vals))
