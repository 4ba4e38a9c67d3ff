"""Acceptance criteria at their pinned tolerances.

Criteria 4 to 9 need trained toy models.  Those come from the checkpoint
cache of ``autostereo.neural.toy`` (``$AUTOSTEREO_CACHE``); on a cold cache
the first run trains them, which takes several CPU hours.  A one-line
verdict per criterion is printed in the terminal summary.
"""

import time
from functools import lru_cache

import numpy as np
from scipy import ndimage

from autostereo.autograd import Tensor
from autostereo.autograd.ops import disparity_features, disparity_features_naive
from autostereo.classic import decode_window_match, default_config
from autostereo.datagen import SHAPE_POSES, SceneSpec, gen_scene
from autostereo.gradcheck import run_suite
from autostereo.imgcore import psnr, ssim
from autostereo.neural import accuracy, evaluate, predict, score, self_decode_psnr
from autostereo.neural import synthesize_neural_autostereogram, watermark_batch
from autostereo.neural import toy
from autostereo.stereogram import StereoGeometry, encode_random_dot

RESULTS = {}


def verdict(num, ok, detail):
    RESULTS[num] = (bool(ok), detail)
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@lru_cache(maxsize=None)
def decoder(seed, dc=True):
    return toy.decoder(seed, dc, progress=500)


@lru_cache(maxsize=None)
def decoder_psnr(seed, dc=True):
    x, y, _ = toy.test_arrays(seed)
    return score(predict(decoder(seed, dc), x), y)[0]


@lru_cache(maxsize=None)
def report(seed):
    x, y, _ = toy.test_arrays(seed)
    return evaluate(decoder(seed), x, y, seed=seed)


def test_c01_classic_round_trip():
    t0 = time.perf_counter()
    g = StereoGeometry(0.5, 32)
    cfg = default_config(g)
    levels = np.arange(8) / 8
    err_sum, count = 0.0, 0
    for k in range(50):
        d, _ = gen_scene(SceneSpec("composite", size=(256, 256), pose=SHAPE_POSES, depth_levels=(0, 1), k=3), k)
        d = np.asarray(d, dtype=np.float64)
        # piecewise-constant scene: snap object depths onto a 1/8 grid
        d = np.where(d < 1, levels[np.clip(np.round(d * 8).astype(int), 0, 7)], 1.0)
        out = decode_window_match(encode_random_dot(d, g, k), cfg, g).data
        half = cfg.window_w // 2
        mask = ndimage.maximum_filter(d, 2 * half + 1) == ndimage.minimum_filter(d, 2 * half + 1)
        mask[:, :cfg.s_max] = False
        err_sum += float(np.abs(out - d)[mask].sum())
        count += int(mask.sum())
    err, bound = err_sum / count, 1.5 / (g.beta * g.stripe_width)
    secs = time.perf_counter() - t0
    verdict(1, err <= bound and secs < 60,
            f"mean interior error {err:.4f} <= {bound:.4f} over 50 scenes ({secs:.1f}s, limit 60s)")


def test_c02_disparity_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        W = int(rng.choice([4, 8, 12, 16]))
        x = rng.standard_normal((int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 6)), W))
        for m in (1, W // 4, W):
            fast = disparity_features(Tensor(x), m).data
            slow = disparity_features_naive(Tensor(x), m).data
            worst = max(worst, float(np.abs(fast - slow).max()))
    secs = time.perf_counter() - t0
    verdict(2, worst <= 1e-6 and secs < 30,
            f"max |fast - naive| {worst:.1e} over 100 tensors x m in {{1, w/4, w}} ({secs:.1f}s)")


def test_c03_gradient_suite():
    t0 = time.perf_counter()
    results = run_suite(instances=20, seed=0, dtype=np.float64)
    secs = time.perf_counter() - t0
    bad = [r.name for r in results if not r.max_rel_error < 1e-4]
    worst = max(r.max_rel_error for r in results)
    verdict(3, not bad and secs < 120,
            f"{len(results) - len(bad)}/{len(results)} ops below 1e-4 (worst {worst:.1e}, {secs:.1f}s)"
            + (f"; failing {bad}" if bad else ""))


def test_c04_self_supervised_decode():
    dc = [decoder_psnr(s, True) for s in toy.SEEDS]
    plain = [decoder_psnr(s, False) for s in toy.SEEDS]
    gap = float(np.mean(dc) - np.mean(plain))
    ok = min(dc) >= 20.0 and gap >= 2.0
    verdict(4, ok, f"disparity-conv PSNR {', '.join(f'{p:.2f}' for p in dc)} dB (need >= 20 each); "
                   f"without {', '.join(f'{p:.2f}' for p in plain)} dB; mean gap {gap:.2f} dB (need >= 2)")


def test_c05_classic_vs_neural():
    rows = [(report(s).row("classic").psnr, report(s).row("clean").psnr) for s in toy.SEEDS]
    ok = all(c < n for c, n in rows)
    verdict(5, ok, "; ".join(f"seed {s}: classic {c:.2f} < neural {n:.2f} dB" for s, (c, n) in zip(toy.SEEDS, rows)))


def test_c06_classification_ablation():
    acc = {}
    for dc in (True, False):
        vals = []
        for s in toy.SEEDS:
            x, _, labels = toy.test_arrays(s)
            vals.append(accuracy(toy.classifier(s, dc, progress=250), x, labels))
        acc[dc] = vals
    m_dc, m_plain = float(np.mean(acc[True])), float(np.mean(acc[False]))
    ok = m_dc > m_plain and m_dc >= 0.8
    verdict(6, ok, f"mean accuracy with disparity conv {m_dc:.3f} (need >= 0.80) vs without {m_plain:.3f}; "
                   f"per seed {[round(a, 3) for a in acc[True]]} / {[round(a, 3) for a in acc[False]]}")


def test_c07_watermark_recovery():
    at02, at0, bands = [], [], []
    for s in toy.SEEDS:
        model = toy.watermark_decoder(s, progress=250)
        x, y, _ = toy.test_arrays(s)
        c = toy.test_carriers(s, len(x))
        at02.append(score(predict(model, watermark_batch(x, c, np.full(len(x), 0.2))), y)[0])
        at0.append(score(predict(model, watermark_batch(x, c, np.zeros(len(x)))), y)[0])
        bands.append(toy.chance_psnr(y, seed=s))
    near_chance = all(lo - 2.0 <= p <= hi + 2.0 for p, (lo, hi) in zip(at0, bands))
    ok = min(at02) >= 15.0 and near_chance
    verdict(7, ok, f"alpha=0.2 PSNR {', '.join(f'{p:.2f}' for p in at02)} dB (need >= 15); alpha=0 "
                   + ", ".join(f"{p:.2f} in [{lo - 2:.2f}, {hi + 2:.2f}]" for p, (lo, hi) in zip(at0, bands)))


def test_c08_robustness():
    limits = {"blur1": 5.0, "jpeg20": 5.0, "gain1.5": 3.0}
    lines, ok, above = [], True, []
    for s in toy.SEEDS:
        rep = report(s)
        clean = rep.row("clean").psnr
        for cond, lim in limits.items():
            loss = clean - rep.row(cond).psnr
            ok &= loss <= lim
            lines.append(f"{cond} {-loss:+.2f}")
            if loss < 0:
                above.append(f"{cond}@seed{s}")
    # a degraded row scoring above clean is logged, not gated
    note = f"; rows above clean (observation): {', '.join(above)}" if above else ""
    verdict(8, ok, "PSNR change vs clean per seed (loss limits blur/jpeg 5, gain 3 dB): " + ", ".join(lines) + note)


def test_c09_neural_autostereogram():
    model = decoder(1)
    _, y, _ = toy.test_arrays(1)
    reductions, psnrs, cross = [], [], []
    other = decoder(2)
    for k in range(3):
        res = synthesize_neural_autostereogram(model, y[k, 0], steps=500, lr=0.03, seed=k)
        reductions.append(res.reduction)
        psnrs.append(self_decode_psnr(model, res.image, y[k, 0]))
        cross.append(self_decode_psnr(other, res.image, y[k, 0]))
    ok = min(reductions) >= 10.0 and min(psnrs) >= 20.0
    verdict(9, ok, f"loss reduction {', '.join(f'{r:.1f}x' for r in reductions)} (need >= 10x); self-decode "
                   f"{', '.join(f'{p:.2f}' for p in psnrs)} dB (need >= 20); cross-decode by an independently "
                   f"trained decoder (logged only) {', '.join(f'{p:.2f}' for p in cross)} dB")


def test_c10_metric_units():
    a = np.zeros((16, 16))
    p_half = psnr(a, a + 0.5)
    rng = np.random.default_rng(10)
    b = np.full((16, 16), 0.3)
    p_20 = psnr(b, b + 0.1)
    x, z = rng.random((32, 32)), rng.random((32, 32))
    sym = abs(ssim(x, z) - ssim(z, x))
    ok = abs(p_half - 6.0206) <= 1e-3 and abs(p_20 - 20.0) <= 1e-3 and ssim(x, x) == 1.0 and sym <= 1e-12
    verdict(10, ok, f"PSNR {p_half:.4f} (6.0206) and {p_20:.4f} (20) dB; SSIM(x,x) = {ssim(x, x)!r}; "
                    f"asymmetry {sym:.1e}")

