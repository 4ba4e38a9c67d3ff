"""Training loops: depth regression, glyph classification, watermark fine-tuning."""

import copy
import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np

from .. import datagen
from ..autograd import Adam, Tensor, checkpoint, ops
from ..errors import ConfigInvalid, DivergedLoss
from ..stereogram import watermark_embed
from .models import ModelConfig, build_model

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    betas: Tuple[float, float] = (0.9, 0.999)
    batch_size: int = 16
    steps: int = 6000
    lr_drop_step: Optional[int] = 3000
    seed: int = 0
    loss: str = "l2"
    checkpoint_every: int = 0  # 0: only the final checkpoint
    alpha_range: Tuple[float, float] = (0.1, 0.9)  # watermark fine-tuning only

    def __post_init__(self):
        if self.loss not in ("l2", "ce"):
            raise ConfigInvalid(f"loss must be 'l2' or 'ce', got {self.loss!r}")
        if self.steps < 0 or self.batch_size < 1 or not self.lr > 0:
            raise ConfigInvalid("steps >= 0, batch_size >= 1 and lr > 0 are required")
        if self.lr_drop_step is not None and self.lr_drop_step < 0:
            raise ConfigInvalid("lr_drop_step must be non-negative")
        lo, hi = self.alpha_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ConfigInvalid(f"alpha_range must lie inside [0, 1], got {self.alpha_range}")

    def lr_at(self, step):
        """Learning rate for (0-based) ``step``."""
        if self.lr_drop_step is not None and step >= self.lr_drop_step:
            return self.lr / 10.0
        return self.lr

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    model: object
    losses: List[Tuple[int, float, float]] = field(default_factory=list)
    checkpoint: Optional[Path] = None
    seconds: float = 0.0

    def smoothed(self, window=50):
        v = np.array([l for _, l, _ in self.losses])
        if len(v) == 0:
            return v
        w = min(window, len(v))
        return np.convolve(v, np.ones(w) / w, mode="valid")


def write_loss_csv(path, losses):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "loss", "lr"])
        for s, l, lr in losses:
            wr.writerow([s, repr(float(l)), repr(float(lr))])


def save_model(path, model, meta=None):
    info = {"model": model.cfg.to_dict(), "dtype": str(model.parameters()[0].dtype)}
    info.update(meta or {})
    return checkpoint.save(path, model.state_dict(), info)


def load_model(path, dtype=None):
    """Rebuild a model from a checkpoint written by :func:`save_model`."""
    arrays, meta = checkpoint.load(path)
    if "model" not in meta:
        raise ConfigInvalid(f"{path}: checkpoint has no model config")
    cfg = ModelConfig.from_dict(meta["model"])
    model = build_model(cfg, 0, np.dtype(dtype or meta.get("dtype", "float32")))
    model.load_state_dict(arrays)
    model.eval()
    return model, meta


# --------------------------------------------------------------------------
# data plumbing
# --------------------------------------------------------------------------

def as_arrays(data, with_labels=False):
    """Accept a DatasetStream (its train split is used) or an ``(x, y[, labels])`` tuple."""
    if isinstance(data, datagen.DatasetStream):
        x, y, labels = datagen.stack_pairs(data.items(data.train_indices()))
    else:
        x, y = np.asarray(data[0]), np.asarray(data[1])
        labels = np.asarray(data[2]) if len(data) > 2 else None
    if x.ndim == 3:
        x, y = x[:, None], y[:, None] if y.ndim == 3 else y
    return (x, y, labels) if with_labels else (x, y)


class BatchSampler:
    """Epoch-wise shuffled mini-batches; the last partial batch of an epoch is dropped."""

    def __init__(self, n, batch_size, seed):
        if n < 1:
            raise ConfigInvalid("empty training set")
        self.n, self.bs = n, min(batch_size, n)
        self.rng = np.random.default_rng(seed)
        self._perm, self._pos = None, n

    def next(self):
        if self._pos + self.bs > self.n:
            self._perm, self._pos = self.rng.permutation(self.n), 0
        idx = self._perm[self._pos:self._pos + self.bs]
        self._pos += self.bs
        return np.sort(idx)


# --------------------------------------------------------------------------
# generic loop
# --------------------------------------------------------------------------

def _fit(model, batch_fn: Callable, loss_fn: Callable, tc: TrainConfig, out_dir=None,
         tag="model", meta=None, progress=None):
    out_dir = Path(out_dir) if out_dir else None
    params = model.parameters()
    opt = Adam(params, lr=tc.lr, betas=tc.betas)
    model.train()
    result = TrainResult(model)
    good_state = copy.deepcopy(model.state_dict())
    t0 = time.time()
    meta = dict(meta or {}, train=tc.to_dict())

    def ckpt(step, state=None):
        if out_dir is None:
            return None
        path = out_dir / f"{tag}.ckpt"
        if state is not None:
            snapshot = build_model(model.cfg, 0, params[0].dtype)
            snapshot.load_state_dict(state)
            return save_model(path, snapshot, dict(meta, step=step))
        return save_model(path, model, dict(meta, step=step))

    for step in range(tc.steps):
        opt.lr = tc.lr_at(step)
        xb, target = batch_fn(step)
        opt.zero_grad()
        loss = loss_fn(model(Tensor(xb)), target)
        value = float(loss.data)
        if not math.isfinite(value):
            path = ckpt(step, good_state)
            model.load_state_dict(good_state)
            raise DivergedLoss(f"non-finite loss {value} at step {step}", checkpoint=path, step=step)
        loss.backward()
        opt.step()
        result.losses.append((step, value, opt.lr))
        if tc.checkpoint_every and (step + 1) % tc.checkpoint_every == 0:
            good_state = copy.deepcopy(model.state_dict())
            ckpt(step + 1)
        if progress and (step + 1) % progress == 0:
            recent = np.mean([l for _, l, _ in result.losses[-progress:]])
            log.info("%s step %d/%d loss %.5f (%.1fs)", tag, step + 1, tc.steps, recent, time.time() - t0)
    model.eval()
    result.seconds = time.time() - t0
    result.checkpoint = ckpt(tc.steps)
    if out_dir is not None:
        write_loss_csv(out_dir / f"{tag}_loss.csv", result.losses)
    return result


def _mse(pred, target):
    return ops.mse_loss(pred, Tensor(target))


def train_decoder(model, data, tc: TrainConfig = TrainConfig(), out_dir=None, tag="decoder",
                  progress=None) -> TrainResult:
    """Minimize pixel MSE between ``model(stereogram)`` and the depth target."""
    if model.cfg.head != "pixel_regression":
        raise ConfigInvalid("train_decoder needs a pixel_regression head")
    x, y = as_arrays(data)
    dt = model.parameters()[0].dtype
    x, y = x.astype(dt), y.astype(dt)
    sampler = BatchSampler(len(x), tc.batch_size, tc.seed)

    def batch(_):
        idx = sampler.next()
        return x[idx], y[idx]

    return _fit(model, batch, _mse, tc, out_dir, tag, {"task": "decoder"}, progress)


def train_classifier(model, data, tc: TrainConfig = TrainConfig(loss="ce"), out_dir=None,
                     tag="classifier", progress=None) -> TrainResult:
    """Softmax cross-entropy on stereogram inputs against glyph categories."""
    if model.cfg.head != "categories":
        raise ConfigInvalid("train_classifier needs a categories head")
    x, _, labels = as_arrays(data, with_labels=True)
    if labels is None or (labels < 0).any():
        raise ConfigInvalid("classifier training needs a label for every sample")
    x = x.astype(model.parameters()[0].dtype)
    sampler = BatchSampler(len(x), tc.batch_size, tc.seed)

    def batch(_):
        idx = sampler.next()
        return x[idx], labels[idx]

    return _fit(model, batch, ops.softmax_ce_loss, tc, out_dir, tag, {"task": "classifier"}, progress)


def watermark_batch(stereo, carriers, alpha, dtype=np.float32):
    """Blend stacked stereograms (N,1,H,W) into carriers with per-sample alpha."""
    a = np.asarray(alpha, dtype=np.float64).reshape(-1, 1, 1, 1)
    return np.clip(a * stereo + (1.0 - a) * carriers, 0.0, 1.0).astype(dtype)


def carriers_for(n, size, seed):
    return np.stack([datagen.gen_carrier(size, datagen.derive_seed(seed, "carrier", k)).data
                     for k in range(n)])[:, None]


def train_watermark(model, data, tc: TrainConfig = TrainConfig(), out_dir=None, tag="watermark",
                    progress=None, carriers=None) -> TrainResult:
    """Fine-tune a decoder on carrier-blended stereograms, alpha ~ U[alpha_range].

    Each step pairs every stereogram with a randomly drawn carrier and alpha.
    """
    x, y = as_arrays(data)
    dt = model.parameters()[0].dtype
    if carriers is None:
        carriers = carriers_for(len(x), x.shape[2:], tc.seed)
    sampler = BatchSampler(len(x), tc.batch_size, tc.seed)
    rng = np.random.default_rng(datagen.derive_seed(tc.seed, "alpha"))
    lo, hi = tc.alpha_range

    def batch(_):
        idx = sampler.next()
        cidx = rng.integers(len(carriers), size=len(idx))
        alpha = rng.uniform(lo, hi, size=len(idx))
        return watermark_batch(x[idx], carriers[cidx], alpha, dt), y[idx].astype(dt)

    return _fit(model, batch, _mse, tc, out_dir, tag, {"task": "watermark"}, progress)


def embed_array(stereo, carrier, alpha):
    """Single-image convenience wrapper returning a numpy array."""
    return np.asarray(watermark_embed(stereo, carrier, alpha))
