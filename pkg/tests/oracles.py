"""Slow, obviously-correct reference implementations used only by the tests."""

import numpy as np


def conv2d_loops(x, w, b=None, stride=1, padding=0):
    """Direct 6-deep loop cross-correlation with zero padding."""
    N, C, H, W = x.shape
    O, _, kh, kw = w.shape
    xp = np.zeros((N, C, H + 2 * padding, W + 2 * padding), dtype=np.float64)
    xp[:, :, padding:padding + H, padding:padding + W] = x
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    out = np.zeros((N, O, Ho, Wo))
    for n in range(N):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0 if b is None else float(b[o])
                    for c in range(C):
                        for a in range(kh):
                            for d in range(kw):
                                acc += xp[n, c, i * stride + a, j * stride + d] * w[o, c, a, d]
                    out[n, o, i, j] = acc
    return out


def ssim_per_window(a, b, size=11, sigma=1.5, c1=0.01 ** 2, c2=0.03 ** 2):
    """Mean SSIM computed window by window with an explicit 2-D Gaussian."""
    ax = np.arange(size) - (size - 1) / 2.0
    g1 = np.exp(-ax ** 2 / (2 * sigma ** 2))
    w = np.outer(g1, g1)
    w /= w.sum()
    H, W = a.shape
    vals = []
    for i in range(H - size + 1):
        for j in range(W - size + 1):
            pa = a[i:i + size, j:j + size]
            pb = b[i:i + size, j:j + size]
            ma, mb = (w * pa).sum(), (w * pb).sum()
            va = (w * (pa - ma) ** 2).sum()
            vb = (w * (pb - mb) ** 2).sum()
            cov = (w * (pa - ma) * (pb - mb)).sum()
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def idct_quantize_block(block, table):
    """8x8 DCT-II (orthonormal) by explicit basis sums, quantize, invert."""
    n = 8
    k = np.arange(n)
    basis = np.cos(np.pi * (2 * k[None, :] + 1) * k[:, None] / (2 * n))
    scale = np.where(k == 0, np.sqrt(1.0 / n), np.sqrt(2.0 / n))
    D = scale[:, None] * basis
    coef = D @ block @ D.T
    q = np.where(table > 0, np.round(coef / np.where(table > 0, table, 1)) * table, coef)
    return D.T @ q @ D


def walk_constraints(stereo, shifts):
    """Count pixels with j >= s(i,j) whose value differs from their left partner."""
    H, W = stereo.shape
    bad = 0
    for i in range(H):
        for j in range(W):
            s = int(shifts[i, j])
            if j >= s and stereo[i, j] != stereo[i, j - s]:
                bad += 1
    return bad


def sad_argmin_pixel(img, i, j, s_min, s_max, wh, ww):
    """Mean-SAD argmin for one pixel, smallest shift on ties."""
    H, W = img.shape
    best, best_cost = s_min, np.inf
    for s in range(s_min, s_max + 1):
        tot, cnt = 0.0, 0
        for di in range(-(wh // 2), wh - wh // 2):
            for dj in range(-(ww // 2), ww - ww // 2):
                ii, jj = i + di, j + dj
                if 0 <= ii < H and s <= jj < W:
                    tot += abs(img[ii, jj] - img[ii, jj - s])
                    cnt += 1
        if cnt and tot / cnt < best_cost:
            best, best_cost = s, tot / cnt
    return best
