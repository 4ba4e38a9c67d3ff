"""Layer containers on top of the functional ops."""

from collections import OrderedDict

import numpy as np

from . import ops
from .tensor import DEFAULT_DTYPE, Tensor


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """Minimal module: tracks parameters, buffers and sub-modules by attribute order."""

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, owner, attr):
        """Expose ``getattr(owner, attr)`` (a numpy array) under ``name`` in state dicts."""
        self._buffers[name] = (owner, attr)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    # -- traversal -------------------------------------------------------------
    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for mname, mod in self._modules.items():
            yield from mod.named_parameters(prefix + mname + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name, (owner, attr) in self._buffers.items():
            yield prefix + name, owner, attr
        for mname, mod in self._modules.items():
            yield from mod.named_buffers(prefix + mname + ".")

    def modules(self):
        yield self
        for mod in self._modules.values():
            yield from mod.modules()

    def train(self, mode=True):
        for mod in self.modules():
            object.__setattr__(mod, "training", bool(mode))
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def num_parameters(self):
        return int(sum(p.size for p in self.parameters()))

    # -- state -----------------------------------------------------------------
    def state_dict(self):
        sd = OrderedDict()
        for name, p in self.named_parameters():
            sd[name] = p.data
        for name, owner, attr in self.named_buffers():
            sd[name] = np.asarray(getattr(owner, attr))
        return sd

    def load_state_dict(self, sd, strict=True):
        params = dict(self.named_parameters())
        buffers = {n: (o, a) for n, o, a in self.named_buffers()}
        missing = (set(params) | set(buffers)) - set(sd)
        unexpected = set(sd) - (set(params) | set(buffers))
        if strict and (missing or unexpected):
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, arr in sd.items():
            if name in params:
                p = params[name]
                arr = np.asarray(arr)
                if arr.shape != p.shape:
                    raise ValueError(f"{name}: shape {arr.shape} vs {p.shape}")
                p.data = arr.astype(p.dtype, copy=True)
            elif name in buffers:
                owner, attr = buffers[name]
                cur = getattr(owner, attr)
                if isinstance(cur, np.ndarray):
                    setattr(owner, attr, np.asarray(arr).astype(cur.dtype, copy=True))
                else:
                    setattr(owner, attr, type(cur)(np.asarray(arr).item()))

    def to(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for _, owner, attr in self.named_buffers():
            cur = getattr(owner, attr)
            if isinstance(cur, np.ndarray) and np.issubdtype(cur.dtype, np.floating):
                setattr(owner, attr, cur.astype(dtype))
        return self


def he_normal(rng, shape, fan_in, dtype=DEFAULT_DTYPE):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Module):
    def __init__(self, c_in, c_out, k=3, stride=1, padding=None, bias=True, rng=None,
                 dtype=DEFAULT_DTYPE):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.c_in, self.c_out, self.k, self.stride = c_in, c_out, k, stride
        self.padding = k // 2 if padding is None else padding
        self.weight = Parameter(he_normal(rng, (c_out, c_in, k, k), c_in * k * k, dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype)) if bias else None

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    def __init__(self, n_in, n_out, rng=None, dtype=DEFAULT_DTYPE):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / np.sqrt(n_in)
        self.weight = Parameter(rng.uniform(-bound, bound, (n_out, n_in)).astype(dtype))
        self.bias = Parameter(np.zeros(n_out, dtype=dtype))

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias)


class BatchNorm2d(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.weight = Parameter(np.ones(channels, dtype=dtype))
        self.bias = Parameter(np.zeros(channels, dtype=dtype))
        self.state = ops.BatchNormState.create(channels, dtype, momentum)
        self.eps = eps
        self.register_buffer("running_mean", self.state, "running_mean")
        self.register_buffer("running_var", self.state, "running_var")
        self.register_buffer("num_batches", self.state, "num_batches")

    def forward(self, x):
        return ops.batch_norm(x, self.weight, self.bias, self.state, self.training, self.eps)


class InstanceNorm2d(Module):
    def __init__(self, channels, eps=1e-5, affine=True, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.eps = eps
        if affine:
            self.weight = Parameter(np.ones(channels, dtype=dtype))
            self.bias = Parameter(np.zeros(channels, dtype=dtype))
        else:
            self.weight = self.bias = None

    def forward(self, x):
        return ops.instance_norm(x, self.weight, self.bias, self.eps)


class Identity(Module):
    def forward(self, x):
        return x


class ReLU(Module):
    def forward(self, x):
        return ops.relu(x)


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        for i, layer in enumerate(layers):
            setattr(self, str(i), layer)
        object.__setattr__(self, "_order", [str(i) for i in range(len(layers))])

    def forward(self, x):
        for name in self._order:
            x = getattr(self, name)(x)
        return x


def make_norm(kind, channels, dtype=DEFAULT_DTYPE):
    if kind == "batch":
        return BatchNorm2d(channels, dtype=dtype)
    if kind == "instance":
        return InstanceNorm2d(channels, dtype=dtype)
    if kind == "none":
        return Identity()
    raise ValueError(f"unknown normalization {kind!r}")


class DisparityConv(Module):
    """Difference maps against ``m`` horizontal shifts, then a standard convolution.

    Holds exactly the parameters of a ``Conv2d(m, c_out, k)``.
    """

    def __init__(self, m, c_out, k=3, rng=None, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.m = int(m)
        self.conv = Conv2d(self.m, c_out, k, rng=rng, dtype=dtype)

    def forward(self, x):
        return self.conv(ops.disparity_features(x, self.m))
