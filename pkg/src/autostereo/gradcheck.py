"""Central-difference verification of every differentiable op.

Each case draws random inputs, reduces the op output to a scalar through a
fixed random projection, and compares the analytic gradient of every input
with central differences.  The error of one instance is the normwise ratio
``|a - n|_2 / max(|a|_2, |n|_2)`` over all input coordinates.  Inputs whose
non-smooth points (``|.|``, ReLU, clamp bounds) lie within ``KINK_MARGIN``
are redrawn so the finite differences never straddle a kink.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from .autograd import Tensor, ops

EPS = 1e-5
TOLERANCE = 1e-4
KINK_MARGIN = 1e-4


@dataclass
class CaseResult:
    name: str
    max_rel_error: float
    instances: int
    resampled: int
    tolerance: float = TOLERANCE

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


@dataclass
class Case:
    name: str
    draw: Callable  # rng -> list of input arrays
    fn: Callable    # list of Tensors -> Tensor
    smooth: Callable = None  # list of arrays -> bool (away from kinks)


def _shape(rng, lo=(1, 1, 3, 3), hi=(3, 3, 6, 7)):
    return tuple(int(rng.integers(a, b + 1)) for a, b in zip(lo, hi))


def _far_from(x, points, margin=1e-3):
    return all(np.all(np.abs(x - p) > margin) for p in points)


def _diff_smooth(x, m):
    W = x.shape[-1]
    for s in range(1, m + 1):
        if np.any(np.abs(x - np.roll(x, s, axis=-1)) <= KINK_MARGIN) and not (s % W == 0):
            return False
    return True


def _bn_state(c):
    return ops.BatchNormState.create(c, np.float64)


def _bn_eval_fn(t):
    x, g, b = t
    st = ops.BatchNormState(np.linspace(-0.2, 0.3, x.shape[1]), np.linspace(0.5, 2.0, x.shape[1]), 1)
    return ops.batch_norm(x, g, b, st, training=False)


def _cases() -> List[Case]:
    n = lambda rng, *s: rng.standard_normal(s)
    cases = [
        Case("add", lambda r: ((lambda s: [n(r, *s), n(r, *s)])(_shape(r))), lambda t: t[0] + t[1]),
        Case("add_broadcast", lambda r: [n(r, 2, 3, 4, 5), n(r, 1, 3, 1, 1)], lambda t: t[0] + t[1]),
        Case("sub", lambda r: [n(r, 2, 3, 4, 4), n(r, 2, 3, 4, 4)], lambda t: t[0] - t[1]),
        Case("mul", lambda r: [n(r, 2, 3, 4, 4), n(r, 2, 1, 4, 4)], lambda t: t[0] * t[1]),
        Case("div", lambda r: [n(r, 2, 3, 4), r.choice([-1, 1], (2, 3, 4)) * r.uniform(0.5, 2, (2, 3, 4))],
             lambda t: t[0] / t[1]),
        Case("power3", lambda r: [n(r, 2, 3, 5)], lambda t: ops.power(t[0], 3)),
        Case("power_sqrt", lambda r: [r.uniform(0.5, 2.0, (2, 3, 5))], lambda t: ops.power(t[0], 0.5)),
        Case("abs", lambda r: [n(r, *_shape(r))], lambda t: ops.abs(t[0]),
             lambda a: _far_from(a[0], [0.0])),
        Case("relu", lambda r: [n(r, *_shape(r))], lambda t: ops.relu(t[0]),
             lambda a: _far_from(a[0], [0.0])),
        Case("sum_axis", lambda r: [n(r, 2, 3, 4, 5)], lambda t: ops.sum(t[0], axis=(1, 3))),
        Case("mean", lambda r: [n(r, 2, 3, 4, 5)], lambda t: ops.mean(t[0], axis=2, keepdims=True)),
        Case("reshape", lambda r: [n(r, 2, 3, 4, 5)], lambda t: ops.reshape(t[0], (6, 20))),
        Case("getitem", lambda r: [n(r, 2, 3, 6, 6)], lambda t: t[0][:, 1:, ::2, 1:5]),
        Case("getitem_fancy", lambda r: [n(r, 5, 4)], lambda t: t[0][np.array([0, 2, 2, 4])]),
        Case("concat", lambda r: [n(r, 2, 2, 4, 4), n(r, 2, 3, 4, 4)], lambda t: ops.concat([t[0], t[1]], 1)),
        Case("clamp", lambda r: [n(r, 2, 3, 5, 5)], lambda t: ops.clamp(t[0], -0.5, 0.5),
             lambda a: _far_from(a[0], [-0.5, 0.5])),
        Case("conv2d_3x3", lambda r: [n(r, 2, 3, 6, 7), n(r, 4, 3, 3, 3), n(r, 4)],
             lambda t: ops.conv2d(t[0], t[1], t[2], 1, 1)),
        Case("conv2d_stride2", lambda r: [n(r, 2, 3, 7, 8), n(r, 4, 3, 3, 3), n(r, 4)],
             lambda t: ops.conv2d(t[0], t[1], t[2], 2, 1)),
        Case("conv2d_1x1", lambda r: [n(r, 2, 3, 5, 5), n(r, 2, 3, 1, 1)],
             lambda t: ops.conv2d(t[0], t[1], None, 1, 0)),
        Case("conv2d_valid", lambda r: [n(r, 1, 2, 6, 6), n(r, 3, 2, 3, 3)],
             lambda t: ops.conv2d(t[0], t[1], None, 1, 0)),
        Case("disparity_features", lambda r: [n(r, 2, 3, 4, 8)], lambda t: ops.disparity_features(t[0], 4),
             lambda a: _diff_smooth(a[0], 4)),
        Case("disparity_features_full", lambda r: [n(r, 1, 2, 3, 6)], lambda t: ops.disparity_features(t[0], 6),
             lambda a: _diff_smooth(a[0], 6)),
        Case("batch_norm_train", lambda r: [n(r, 3, 4, 4, 5), 1 + 0.1 * n(r, 4), n(r, 4)],
             lambda t: ops.batch_norm(t[0], t[1], t[2], _bn_state(4), training=True)),
        Case("batch_norm_eval", lambda r: [n(r, 2, 3, 4, 4), n(r, 3), n(r, 3)], _bn_eval_fn),
        Case("instance_norm", lambda r: [n(r, 2, 3, 4, 5), 1 + 0.1 * n(r, 3), n(r, 3)],
             lambda t: ops.instance_norm(t[0], t[1], t[2])),
        Case("upsample_nearest", lambda r: [n(r, 2, 3, 3, 4)], lambda t: ops.upsample_nearest(t[0], 2)),
        Case("global_avg_pool", lambda r: [n(r, 2, 3, 4, 5)], lambda t: ops.global_avg_pool(t[0])),
        Case("linear", lambda r: [n(r, 4, 6), n(r, 3, 6), n(r, 3)], lambda t: ops.linear(t[0], t[1], t[2])),
        Case("mse_loss", lambda r: [n(r, 2, 1, 4, 4), n(r, 2, 1, 4, 4)], lambda t: ops.mse_loss(t[0], t[1])),
        Case("softmax_ce_loss", lambda r: [n(r, 5, 4)],
             lambda t: ops.softmax_ce_loss(t[0], np.array([0, 3, 1, 1, 2]))),
        Case("tv_loss", lambda r: [n(r, 2, 1, 5, 6)], lambda t: ops.tv_loss(t[0])),
        Case("disparity_conv", lambda r: [n(r, 2, 2, 4, 8), n(r, 3, 4, 3, 3), n(r, 3)],
             lambda t: ops.relu(ops.conv2d(ops.disparity_features(t[0], 4), t[1], t[2], 1, 1)),
             lambda a: _diff_smooth(a[0], 4) and _conv_relu_smooth(a)),
    ]
    return cases


def _conv_relu_smooth(a):
    u = ops.disparity_features(Tensor(a[0]), 4)
    z = ops.conv2d(u, Tensor(a[1]), Tensor(a[2]), 1, 1).data
    return _far_from(z, [0.0])


CASES: Dict[str, Case] = {c.name: c for c in _cases()}


def _scalar(case, arrays, proj_seed):
    ts = [Tensor(a, requires_grad=True, dtype=a.dtype) for a in arrays]
    out = case.fn(ts)
    R = np.random.default_rng(proj_seed).standard_normal(out.shape).astype(out.dtype)
    return ops.sum(out * Tensor(R, dtype=out.dtype)), ts


def check_instance(case: Case, arrays, proj_seed=0, eps=EPS) -> float:
    """Relative error of the analytic gradient at ``arrays`` (in their own dtype).

    Finite differences are always taken in double precision, so a
    single-precision call checks the float32 backward pass against an
    accurate reference.
    """
    loss, ts = _scalar(case, arrays, proj_seed)
    loss.backward()
    analytic = np.concatenate([t.grad.ravel() for t in ts]).astype(np.float64)
    arrays = [a.astype(np.float64) for a in arrays]
    numeric = []
    for k, a in enumerate(arrays):
        a = a.copy()
        g = np.zeros(a.size)
        flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            vals = []
            for d in (eps, -eps):
                flat[i] = orig + d
                args = [b if j != k else a for j, b in enumerate(arrays)]
                vals.append(float(_scalar(case, args, proj_seed)[0].data))
            flat[i] = orig
            g[i] = (vals[0] - vals[1]) / (2 * eps)
        numeric.append(g)
    numeric = np.concatenate(numeric)
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / denom)


def settings_for(dtype):
    """(eps, tolerance) for a precision; single precision only loosens the tolerance."""
    if np.dtype(dtype) == np.float64:
        return EPS, TOLERANCE
    return EPS, 1e-3


def run_case(case: Case, instances=20, seed=0, dtype=np.float64) -> CaseResult:
    rng = np.random.default_rng(seed)
    eps, tol = settings_for(dtype)
    worst, redraws = 0.0, 0
    for k in range(instances):
        for _ in range(100):
            arrays = [np.asarray(a, dtype=dtype) for a in case.draw(rng)]
            if case.smooth is None or case.smooth(arrays):
                break
            redraws += 1
        worst = max(worst, check_instance(case, arrays, seed * 1000 + k, eps))
    return CaseResult(case.name, worst, instances, redraws, tol)


def run_suite(instances=20, seed=0, dtype=np.float64, names=None) -> List[CaseResult]:
    names = names or list(CASES)
    return [run_case(CASES[n], instances, seed, dtype) for n in names]
