"""Uses of a trained network beyond plain decoding: retrieval and input optimization."""

import math
from dataclasses import dataclass, field
from typing import List, Union

import numpy as np

from ..autograd import Adam, Tensor, no_grad, ops
from ..datagen import TextureSpec, derive_seed
from ..errors import ConfigInvalid, DivergedLoss, EmptyDatabase, SizeMismatch
from ..imgcore import GrayImage, as_array, minmax_normalize, psnr
from .evaluate import predict


def _stack(images):
    if isinstance(images, np.ndarray):
        x = images
    else:
        x = np.stack([as_array(im) for im in images])
    if x.ndim == 3:
        x = x[:, None]
    return x


def features(model, x, batch_size=50):
    """Global-pooled activations feeding the classifier's dense layer."""
    x = _stack(x)
    dt = model.parameters()[0].dtype
    model.eval()
    out = []
    with no_grad():
        for i in range(0, len(x), batch_size):
            out.append(model.features(Tensor(x[i:i + batch_size].astype(dt))).data)
    return np.concatenate(out).astype(np.float64)


@dataclass(frozen=True)
class Hit:
    index: int
    score: float  # class probability (category mode) or cosine distance (image mode)


def retrieve(model, db, query: Union[int, GrayImage, np.ndarray], k: int = 5) -> List[Hit]:
    """Top-``k`` database entries for a category index or a query image.

    Category queries rank by predicted class probability, highest first.
    Image queries rank by cosine distance of pooled features, lowest first.
    Equal scores keep database order.
    """
    x = _stack(db) if len(db) else np.zeros((0,))
    if len(x) == 0:
        raise EmptyDatabase("retrieval database is empty")
    k = max(0, min(int(k), len(x)))
    if isinstance(query, (int, np.integer)):
        if model.cfg.head != "categories" or not 0 <= int(query) < model.cfg.num_classes:
            raise ConfigInvalid(f"category query {query} needs a classifier with that class")
        probs = ops.softmax(predict(model, x))[:, int(query)]
        order = np.argsort(-probs, kind="stable")[:k]
        return [Hit(int(i), float(probs[i])) for i in order]
    q = as_array(query)
    if q.shape != x.shape[2:]:
        raise SizeMismatch(f"query {q.shape} vs database images {x.shape[2:]}")
    f = features(model, x)
    fq = features(model, q[None, None])[0]
    nq, nf = np.linalg.norm(fq), np.linalg.norm(f, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where((nf > 0) & (nq > 0), f @ fq / (nf * nq), 0.0)
    dist = np.clip(1.0 - cos, 0.0, 2.0)
    order = np.argsort(dist, kind="stable")[:k]
    return [Hit(int(i), float(dist[i])) for i in order]


def precision_at_k(hits: List[Hit], labels, category) -> float:
    if not hits:
        return 0.0
    labels = np.asarray(labels)
    return float(np.mean([labels[h.index] == category for h in hits]))


@dataclass
class NeuralgramResult:
    image: GrayImage
    initial_loss: float
    final_loss: float
    losses: List[float] = field(default_factory=list)

    @property
    def reduction(self):
        return self.initial_loss / max(self.final_loss, 1e-300)


def initial_input(shape, init="noise", seed=0, texture: TextureSpec = None):
    rng = np.random.default_rng(derive_seed(seed, "neuralgram"))
    if init == "noise":
        return rng.uniform(0.4, 0.6, shape)
    if init == "texture":
        tex = (texture or TextureSpec("value_noise")).render(shape[0], shape[1], derive_seed(seed, "tex"))
        return tex.data.copy()
    raise ConfigInvalid(f"init must be 'noise' or 'texture', got {init!r}")


def synthesize_neural_autostereogram(model, target_depth, steps=500, lr=0.01, tv_weight=0.0,
                                     init="noise", seed=0, texture=None) -> NeuralgramResult:
    """Gradient descent on the input of a frozen decoder towards ``target_depth``.

    The pixel variable is clamped to [0, 1] after every Adam step.  The loss
    is the decoder's training loss (pixel MSE on the raw output) plus
    ``tv_weight`` times a total-variation penalty on the input.
    """
    target = as_array(target_depth)
    n = model.cfg.input_size
    if target.shape != (n, n):
        raise SizeMismatch(f"target must be {n}x{n}, got {target.shape}")
    dt = model.parameters()[0].dtype
    model.eval()
    for p in model.parameters():
        p.requires_grad = False
    y = Tensor(target[None, None].astype(dt))
    x = Tensor(initial_input(target.shape, init, seed, texture)[None, None].astype(dt), requires_grad=True)
    opt = Adam([x], lr=lr)

    def objective():
        loss = ops.mse_loss(model(x), y)
        if tv_weight:
            loss = loss + ops.tv_loss(x) * tv_weight
        return loss

    losses = []
    try:
        for step in range(steps):
            opt.zero_grad()
            loss = objective()
            v = float(loss.data)
            if not math.isfinite(v):
                raise DivergedLoss(f"non-finite loss at step {step}", checkpoint=None, step=step)
            losses.append(v)
            loss.backward()
            opt.step()
            x.data = np.clip(x.data, 0.0, 1.0)
        with no_grad():
            final = float(objective().data)
    finally:
        for p in model.parameters():
            p.requires_grad = True
    losses.append(final)
    initial = losses[0] if steps else final
    return NeuralgramResult(GrayImage(x.data[0, 0].astype(np.float64)), initial, final, losses)


def self_decode_psnr(model, image, target):
    out = predict(model, as_array(image)[None, None])[0, 0]
    return psnr(minmax_normalize(out), minmax_normalize(as_array(target)))
