"""Differentiable operations on NCHW tensors.

Each op computes its forward result with numpy and, when any input requires
grad, registers a closure returning one gradient per input.
"""

import builtins
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import EvalBeforeTrain, ShapeMismatch, ShiftBoundInvalid
from .tensor import Tensor, as_tensor


_abs = builtins.abs


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    nd = g.ndim - len(shape)
    if nd > 0:
        g = g.sum(axis=tuple(range(nd)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _lift(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


# --------------------------------------------------------------------------
# elementwise and reductions
# --------------------------------------------------------------------------

def add(a, b):
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    sa, sb = a.shape, b.shape
    return Tensor.make(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b):
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    sa, sb = a.shape, b.shape
    return Tensor.make(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b):
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    ad, bd = a.data, b.data

    def back(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)
    return Tensor.make(ad * bd, (a, b), back, "mul")


def div(a, b):
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    ad, bd = a.data, b.data

    def back(g):
        return (_unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(-g * ad / (bd * bd), bd.shape) if b.requires_grad else None)
    return Tensor.make(ad / bd, (a, b), back, "div")


def power(a, p):
    a = as_tensor(a)
    p = float(p)
    ad = a.data
    return Tensor.make(ad ** p, (a,), lambda g: (g * p * ad ** (p - 1),), "pow")


def abs(a):
    a = as_tensor(a)
    ad = a.data
    # np.sign(0) == 0: the subgradient at the kink is zero
    return Tensor.make(np.abs(ad), (a,), lambda g: (g * np.sign(ad),), "abs")


def relu(a):
    a = as_tensor(a)
    ad = a.data
    mask = ad > 0
    return Tensor.make(np.maximum(ad, 0), (a,), lambda g: (g * mask,), "relu")


def sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)
    return Tensor.make(np.asarray(out), (a,), back, "sum")


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return mul(sum(a, axis, keepdims), 1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    return Tensor.make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def getitem(a, idx):
    a = as_tensor(a)
    shape, dtype = a.shape, a.dtype

    basic = all(isinstance(i, (slice, int)) or i is Ellipsis
                for i in (idx if isinstance(idx, tuple) else (idx,)))

    def back(g):
        out = np.zeros(shape, dtype=dtype)
        if basic:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)
    return Tensor.make(a.data[idx], (a,), back, "getitem")


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))
    return Tensor.make(np.concatenate([t.data for t in tensors], axis=axis), tensors, back, "concat")


def clamp(a, lo, hi):
    a = as_tensor(a)
    ad = a.data
    mask = (ad >= lo) & (ad <= hi)
    return Tensor.make(np.clip(ad, lo, hi), (a,), lambda g: (g * mask,), "clamp")


# --------------------------------------------------------------------------
# convolution
# --------------------------------------------------------------------------

def _pad2d(a, p):
    if not p:
        return a
    N, C, H, W = a.shape
    out = np.zeros((N, C, H + 2 * p, W + 2 * p), dtype=a.dtype)
    out[:, :, p:p + H, p:p + W] = a
    return out


def _im2col(xp, kh, kw, s):
    """(N, C, Hp, Wp) -> (N, C*kh*kw, Ho*Wo) patch matrix."""
    N, C = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    Ho, Wo = win.shape[2], win.shape[3]
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(N, C * kh * kw, Ho * Wo)


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """Zero-padded 2-D cross-correlation, NCHW input, (O, C, kh, kw) weight.

    The input gradient of a stride-1 layer is computed as a correlation of
    the padded output gradient with the flipped kernel, which moves far less
    memory than scattering the patch-matrix gradient back.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatch(f"conv2d needs 4-D input and weight, got {x.shape}, {weight.shape}")
    N, C, H, W = x.shape
    O, Ci, kh, kw = weight.shape
    if Ci != C:
        raise ShapeMismatch(f"input has {C} channels, weight expects {Ci}")
    if bias is not None and bias.shape != (O,):
        raise ShapeMismatch(f"bias shape {bias.shape} != ({O},)")
    s, p = int(stride), int(padding)
    Hp, Wp = H + 2 * p, W + 2 * p
    Ho, Wo = (Hp - kh) // s + 1, (Wp - kw) // s + 1
    if Ho < 1 or Wo < 1:
        raise ShapeMismatch(f"kernel {kh}x{kw} larger than padded input {Hp}x{Wp}")
    pointwise = kh == 1 and kw == 1 and s == 1
    xp = _pad2d(x.data, p)
    cols = xp.reshape(N, C, Hp * Wp) if pointwise else _im2col(xp, kh, kw, s)
    w2 = weight.data.reshape(O, -1)
    out = np.matmul(w2, cols).reshape(N, O, Ho, Wo)
    if bias is not None:
        out += bias.data.reshape(1, O, 1, 1)

    def back(g):
        g2 = g.reshape(N, O, Ho * Wo)
        gw = gb = gx = None
        if weight.requires_grad:
            gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            if pointwise:
                gx = np.matmul(w2.T, g2).reshape(N, C, Hp, Wp)
                gx = gx[:, :, p:p + H, p:p + W] if p else gx
            elif s == 1 and p <= min(kh, kw) - 1 and kh == kw:
                wf = np.ascontiguousarray(weight.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
                gcols = _im2col(_pad2d(g, kh - 1 - p), kh, kw, 1)
                gx = np.matmul(wf.reshape(C, -1), gcols).reshape(N, C, H, W)
            else:
                gcols = np.matmul(w2.T, g2).reshape(N, C, kh, kw, Ho, Wo)
                gxp = np.zeros((N, C, Hp, Wp), dtype=g.dtype)
                for a in range(kh):
                    for b in range(kw):
                        gxp[:, :, a:a + s * (Ho - 1) + 1:s, b:b + s * (Wo - 1) + 1:s] += gcols[:, :, a, b]
                gx = gxp[:, :, p:p + H, p:p + W] if p else gxp
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.make(out, parents, back, "conv2d")


# --------------------------------------------------------------------------
# disparity features
# --------------------------------------------------------------------------

def _check_shift_bound(x, m):
    if x.ndim != 4:
        raise ShapeMismatch(f"expected NCHW input, got shape {x.shape}")
    W = x.shape[3]
    if int(m) != m or not 1 <= m <= W:
        raise ShiftBoundInvalid(f"shift bound m must satisfy 1 <= m <= width ({W}), got {m}")


def disparity_features(x, m):
    """Channel-summed absolute differences against circular horizontal shifts.

    ``u[n, s-1, i, j] = sum_k |x[n, k, i, j] - x[n, k, i, (j - s) mod W]|``
    for ``s = 1..m``.  Computed as ``m`` whole-tensor rolls; the channel sum
    runs in ascending channel order.
    """
    x = as_tensor(x)
    _check_shift_bound(x, m)
    m = int(m)
    xd = x.data
    N, C, H, W = xd.shape
    u = np.empty((N, m, H, W), dtype=xd.dtype)
    for s in range(1, m + 1):
        d = xd - np.roll(xd, s, axis=3)
        acc = np.abs(d[:, 0])
        for k in range(1, C):
            acc += np.abs(d[:, k])
        u[:, s - 1] = acc

    def back(g):
        gx = np.zeros_like(xd)
        for s in range(1, m + 1):
            t = np.sign(xd - np.roll(xd, s, axis=3)) * g[:, s - 1:s]
            gx += t
            gx -= np.roll(t, -s, axis=3)
        return (gx,)
    return Tensor.make(u, (x,), back, "disparity_features")


def disparity_features_naive(x, m):
    """Per-(n, s, i, j, k) loop form of :func:`disparity_features` (oracle only)."""
    x = as_tensor(x)
    _check_shift_bound(x, m)
    xd = x.data
    N, C, H, W = xd.shape
    u = np.zeros((N, int(m), H, W), dtype=xd.dtype)
    for n in range(N):
        for s in range(1, int(m) + 1):
            for i in range(H):
                for j in range(W):
                    jj = (j - s) % W
                    acc = _abs(xd[n, 0, i, j] - xd[n, 0, i, jj])
                    for k in range(1, C):
                        acc += _abs(xd[n, k, i, j] - xd[n, k, i, jj])
                    u[n, s - 1, i, j] = acc
    return Tensor(u)


# --------------------------------------------------------------------------
# normalization
# --------------------------------------------------------------------------

@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    num_batches: int = 0
    momentum: float = 0.1

    @classmethod
    def create(cls, channels, dtype=np.float32, momentum=0.1):
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype), 0, momentum)


def batch_norm(x, gamma, beta, state: BatchNormState, training=True, eps=1e-5):
    """Batch normalization over (N, H, W); ``state`` holds running statistics."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    xd = x.data
    C = xd.shape[1]
    shp = (1, C, 1, 1)
    if training:
        M = xd.shape[0] * xd.shape[2] * xd.shape[3]
        mu = xd.mean(axis=(0, 2, 3), keepdims=True)
        xc = xd - mu
        var = (xc * xc).mean(axis=(0, 2, 3), keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        mom = state.momentum
        unbiased = var.reshape(C) * (M / max(M - 1, 1))
        state.running_mean = ((1 - mom) * state.running_mean + mom * mu.reshape(C)).astype(state.running_mean.dtype)
        state.running_var = ((1 - mom) * state.running_var + mom * unbiased).astype(state.running_var.dtype)
        state.num_batches += 1
    else:
        if state.num_batches == 0:
            raise EvalBeforeTrain("batch_norm used in eval mode before any training batch")
        mu = state.running_mean.reshape(shp).astype(xd.dtype)
        inv = (1.0 / np.sqrt(state.running_var.reshape(shp) + eps)).astype(xd.dtype)
        xhat = (xd - mu) * inv
    gd = gamma.data.reshape(shp)
    out = xhat * gd + beta.data.reshape(shp)

    def back(g):
        ggamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        gbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = g * gd
            if training:
                mdx = dxhat.mean(axis=(0, 2, 3), keepdims=True)
                mdxx = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
                gx = inv * (dxhat - mdx - xhat * mdxx)
            else:
                gx = dxhat * inv
        return gx, ggamma, gbeta
    return Tensor.make(out.astype(xd.dtype), (x, gamma, beta), back, "batch_norm")


def instance_norm(x, gamma=None, beta=None, eps=1e-5):
    """Per-(n, c) plane normalization with optional affine parameters."""
    x = as_tensor(x)
    gamma = None if gamma is None else as_tensor(gamma)
    beta = None if beta is None else as_tensor(beta)
    xd = x.data
    C = xd.shape[1]
    mu = xd.mean(axis=(2, 3), keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    shp = (1, C, 1, 1)
    gd = gamma.data.reshape(shp) if gamma is not None else None
    out = xhat if gd is None else xhat * gd + beta.data.reshape(shp)

    def back(g):
        dxhat = g if gd is None else g * gd
        mdx = dxhat.mean(axis=(2, 3), keepdims=True)
        mdxx = (dxhat * xhat).mean(axis=(2, 3), keepdims=True)
        gx = inv * (dxhat - mdx - xhat * mdxx)
        if gamma is None:
            return (gx,)
        return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))
    parents = (x,) if gamma is None else (x, gamma, beta)
    return Tensor.make(out.astype(xd.dtype), parents, back, "instance_norm")


# --------------------------------------------------------------------------
# resampling, pooling, dense
# --------------------------------------------------------------------------

def upsample_nearest(x, factor=2):
    x = as_tensor(x)
    f = int(factor)
    N, C, H, W = x.shape
    out = np.repeat(np.repeat(x.data, f, axis=2), f, axis=3)
    return Tensor.make(out, (x,),
                       lambda g: (g.reshape(N, C, H, f, W, f).sum(axis=(3, 5)),), "upsample")


def global_avg_pool(x):
    x = as_tensor(x)
    N, C, H, W = x.shape
    return Tensor.make(x.data.mean(axis=(2, 3)), (x,),
                       lambda g: (np.broadcast_to(g[:, :, None, None] / (H * W), x.shape).copy(),),
                       "gap")


def linear(x, w, b=None):
    """``x @ w.T + b`` for x (N, in), w (out, in)."""
    x, w = as_tensor(x), as_tensor(w)
    b = None if b is None else as_tensor(b)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"linear: input {x.shape} vs weight {w.shape}")
    xd, wd = x.data, w.data
    out = xd @ wd.T
    if b is not None:
        out = out + b.data

    def back(g):
        return (g @ wd if x.requires_grad else None,
                g.T @ xd if w.requires_grad else None,
                g.sum(axis=0) if b is not None else None)
    parents = (x, w) if b is None else (x, w, b)
    return Tensor.make(out, parents, back, "linear")


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------

def mse_loss(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mse_loss: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = diff.size
    scale = 2.0 / n

    def back(g):
        gd = g * scale * diff
        return (gd if a.requires_grad else None, -gd if b.requires_grad else None)
    return Tensor.make(np.asarray(np.mean(diff * diff), dtype=diff.dtype), (a, b), back, "mse")


def log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(z):
    return np.exp(log_softmax(np.asarray(z, dtype=np.float64)))


def softmax_ce_loss(logits, labels):
    """Mean softmax cross-entropy; ``labels`` are integer class indices."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.data
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise ShapeMismatch(f"softmax_ce_loss: logits {z.shape}, labels {labels.shape}")
    N = z.shape[0]
    lsm = log_softmax(z)
    loss = -lsm[np.arange(N), labels].mean()

    def back(g):
        p = np.exp(lsm)
        p[np.arange(N), labels] -= 1.0
        return (g * p / N,)
    return Tensor.make(np.asarray(loss, dtype=z.dtype), (logits,), back, "softmax_ce")


def tv_loss(x):
    """Mean squared difference between vertically and horizontally adjacent pixels."""
    dh = getitem(x, (slice(None), slice(None), slice(1, None))) - getitem(x, (slice(None), slice(None), slice(None, -1)))
    dw = getitem(x, (Ellipsis, slice(1, None))) - getitem(x, (Ellipsis, slice(None, -1)))
    return mean(dh * dh) + mean(dw * dw)
