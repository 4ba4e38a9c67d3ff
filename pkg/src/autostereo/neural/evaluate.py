"""Inference, metric tables and the classic-baseline comparison row."""

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..autograd import Tensor, no_grad
from ..errors import SizeMismatch
from ..imgcore import DegradeSpec, GrayImage, as_array, degrade, minmax_normalize, psnr, ssim


def predict(model, x, batch_size=50):
    """Raw network output for a stack (N,1,H,W); eval mode, no graph."""
    x = np.asarray(x)
    dt = model.parameters()[0].dtype
    model.eval()
    outs = []
    with no_grad():
        for i in range(0, len(x), batch_size):
            outs.append(model(Tensor(x[i:i + batch_size].astype(dt))).data)
    return np.concatenate(outs) if outs else np.zeros((0,) + x.shape[1:], dt)


def decode(model, img, raw=False):
    """Decode one stereogram; returns the min-max renormalized depth (or the raw map)."""
    a = as_array(img)
    n = model.cfg.input_size
    if a.shape != (n, n):
        raise SizeMismatch(f"model expects {n}x{n} input, got {a.shape[0]}x{a.shape[1]}")
    out = predict(model, a[None, None])[0, 0].astype(np.float64)
    return out if raw else GrayImage(minmax_normalize(out))


def score(pred, target):
    """Mean PSNR / SSIM over a stack after per-image min-max renormalization."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, *np.shape(pred)[-2:])
    target = np.asarray(target, dtype=np.float64).reshape(pred.shape)
    ps, ss = [], []
    for p, t in zip(pred, target):
        p, t = minmax_normalize(p), minmax_normalize(t)
        ps.append(psnr(p, t))
        ss.append(ssim(p, t))
    return float(np.mean(ps)), float(np.mean(ss))


@dataclass
class EvalRow:
    condition: str
    psnr: float
    ssim: float
    n: int


@dataclass
class EvalReport:
    rows: List[EvalRow] = field(default_factory=list)
    fingerprint: str = ""

    def row(self, condition) -> EvalRow:
        for r in self.rows:
            if r.condition == condition:
                return r
        raise KeyError(condition)

    def as_dict(self) -> Dict[str, EvalRow]:
        return {r.condition: r for r in self.rows}

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["condition", "psnr", "ssim", "n"])
        for r in self.rows:
            wr.writerow([r.condition, f"{r.psnr:.4f}", f"{r.ssim:.4f}", r.n])
        return buf.getvalue()

    def to_text(self) -> str:
        width = max([len("condition")] + [len(r.condition) for r in self.rows])
        lines = [f"model {self.fingerprint}" if self.fingerprint else "",
                 f"{'condition':<{width}}  {'PSNR':>8}  {'SSIM':>6}  {'n':>5}"]
        lines += [f"{r.condition:<{width}}  {r.psnr:8.3f}  {r.ssim:6.4f}  {r.n:5d}" for r in self.rows]
        return "\n".join(l for l in lines if l) + "\n"

    def write(self, out_dir, stem="eval"):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{stem}.csv").write_text(self.to_csv())
        (out_dir / f"{stem}.txt").write_text(self.to_text())


DEFAULT_CONDITIONS = ("clean", "blur:1", "jpeg:20", "gain:1.5")


def degrade_stack(x, spec: Optional[DegradeSpec], seed=0):
    if spec is None:
        return x
    return np.stack([degrade(GrayImage(im[0]), spec, seed + i).data for i, im in enumerate(x)])[:, None]


def evaluate(model, x, y, conditions: Sequence[str] = DEFAULT_CONDITIONS, classic_baseline=True,
             seed=0, classic_cfg=None, geometry=None) -> EvalReport:
    """Per-condition PSNR/SSIM of ``model`` on clean test stacks ``x`` -> ``y``.

    Each condition degrades the clean stereograms before decoding.  With
    ``classic_baseline`` a ``classic`` row decodes the clean inputs with the
    window-matching decoder.
    """
    report = EvalReport(fingerprint=model.cfg.fingerprint())
    x = np.asarray(x, dtype=np.float64)
    for cond in conditions:
        spec = None if cond == "clean" else DegradeSpec.parse(cond)
        xi = degrade_stack(x, spec, seed)
        p, s = score(predict(model, xi), y)
        report.rows.append(EvalRow(cond if spec is None else spec.label(), p, s, len(x)))
    if classic_baseline:
        p, s = classic_score(x, y, classic_cfg, geometry)
        report.rows.append(EvalRow("classic", p, s, len(x)))
    return report


def classic_score(x, y, cfg=None, geometry=None):
    from ..classic import decode_window_match, default_config
    from ..stereogram import StereoGeometry
    x = np.asarray(x)
    W = x.shape[-1]
    g = geometry or StereoGeometry.for_width(W)
    cfg = cfg or default_config(g)
    preds = np.stack([decode_window_match(GrayImage(im[0]), cfg, g).data for im in x])
    return score(preds, y)


def accuracy(model, x, labels):
    logits = predict(model, x)
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))
