"""Window-matching decoder: stripe-period estimation plus per-pixel SAD search.

For every pixel the decoder compares a ``window_h x window_w`` patch with the
patch ``s`` columns to its left, for each candidate shift ``s``, and keeps
the shift with the lowest mean absolute difference.  Window entries that
would read left of column 0 are dropped from the mean.  Equal scores go to
the smaller shift.
"""

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _accel
from ._accel import njit
from .errors import NoPeriod, SearchRangeInvalid
from .imgcore import GrayImage, ImageLike, as_array
from .stereogram import StereoGeometry, depth_of_disparity


@dataclass(frozen=True)
class MatchConfig:
    window_h: int = 3
    window_w: int = 17
    s_min: int = 4
    s_max: int = 9
    smoothing: str = "none"  # "none" or "median:K"

    def __post_init__(self):
        if self.window_h < 1 or self.window_w < 1:
            raise SearchRangeInvalid(f"window must be at least 1x1, got {self.window_h}x{self.window_w}")
        if not 1 <= self.s_min <= self.s_max:
            raise SearchRangeInvalid(f"need 1 <= s_min <= s_max, got [{self.s_min}, {self.s_max}]")
        self.median_k  # validates the smoothing string

    @property
    def median_k(self):
        """Median kernel size, or 0 when smoothing is off."""
        if self.smoothing in ("none", "", None):
            return 0
        m = re.fullmatch(r"median[:(]?(\d+)\)?", str(self.smoothing))
        if not m or int(m.group(1)) < 1:
            raise SearchRangeInvalid(f"smoothing must be 'none' or 'median:K', got {self.smoothing!r}")
        return int(m.group(1))


def auto_range(period: int):
    """Search range derived from an estimated background period."""
    return max(1, int(math.floor(0.5 * period))), int(math.ceil(1.1 * period))


def default_config(g: StereoGeometry, window=(3, 17), smoothing="none") -> MatchConfig:
    lo, hi = auto_range(g.stripe_width)
    lo = min(lo, int(math.floor(g.min_disparity)))
    return MatchConfig(window[0], window[1], max(1, lo), max(hi, g.stripe_width), smoothing)


# --------------------------------------------------------------------------
# period estimation
# --------------------------------------------------------------------------

@njit(cache=True)
def _period_scores_nb(img, s_lo, s_hi):
    H, W = img.shape
    out = np.empty(s_hi - s_lo + 1)
    for s in range(s_lo, s_hi + 1):
        acc = 0.0
        for i in range(H):
            for j in range(s, W):
                acc += abs(img[i, j] - img[i, j - s])
        out[s - s_lo] = acc / (H * (W - s))
    return out


def _period_scores_np(img, s_lo, s_hi):
    H, W = img.shape
    out = np.empty(s_hi - s_lo + 1)
    for s in range(s_lo, s_hi + 1):
        out[s - s_lo] = np.abs(img[:, s:] - img[:, :-s]).sum() / (H * (W - s))
    return out


def period_scores(img: ImageLike, s_lo: int, s_hi: int) -> np.ndarray:
    """Mean |img(i,j) - img(i,j-s)| over valid columns, for s = s_lo..s_hi."""
    a = np.ascontiguousarray(as_array(img), dtype=np.float64)
    if _accel.use_numba():
        return _period_scores_nb(a, int(s_lo), int(s_hi))
    return _period_scores_np(a, int(s_lo), int(s_hi))


def estimate_period(img: ImageLike, s_lo: int = 2, s_hi: int = None) -> int:
    """Background stripe width: the shift with the lowest mean row self-difference.

    Raises :class:`NoPeriod` when even the best shift scores above 0.9x the
    average score, i.e. nothing repeats.
    """
    a = as_array(img)
    W = a.shape[1]
    if s_hi is None:
        s_hi = (W - 1) // 2
    if not (2 <= s_lo < s_hi and s_hi < W / 2):
        raise SearchRangeInvalid(f"need 2 <= s_lo < s_hi < width/2, got [{s_lo}, {s_hi}] for width {W}")
    sc = period_scores(a, s_lo, s_hi)
    best = int(np.argmin(sc))
    if sc[best] > 0.9 * sc.mean():
        raise NoPeriod(f"no periodic structure found in [{s_lo}, {s_hi}] "
                       f"(best score {sc[best]:.4f}, mean {sc.mean():.4f})")
    return s_lo + best


# --------------------------------------------------------------------------
# window matching
# --------------------------------------------------------------------------

@njit(cache=True)
def _match_nb(img, s_min, s_max, wh, ww):
    H, W = img.shape
    ry, rx = wh // 2, ww // 2
    best = np.full((H, W), s_min, dtype=np.int64)
    best_cost = np.full((H, W), np.inf)
    diff = np.zeros((H, W))
    hsum = np.zeros((H, W))
    hcnt = np.zeros((H, W))
    for s in range(s_min, s_max + 1):
        for i in range(H):
            for j in range(W):
                diff[i, j] = abs(img[i, j] - img[i, j - s]) if j >= s else 0.0
        # horizontal pass, then vertical, each summed in ascending offset order
        for i in range(H):
            for j in range(W):
                acc = 0.0
                cnt = 0.0
                for dj in range(-rx, ww - rx):
                    jj = j + dj
                    if jj >= s and jj < W:
                        acc += diff[i, jj]
                        cnt += 1.0
                hsum[i, j] = acc
                hcnt[i, j] = cnt
        for i in range(H):
            for j in range(W):
                acc = 0.0
                cnt = 0.0
                for di in range(-ry, wh - ry):
                    ii = i + di
                    if ii >= 0 and ii < H:
                        acc += hsum[ii, j]
                        cnt += hcnt[ii, j]
                if cnt > 0.0:
                    c = acc / cnt
                    if c < best_cost[i, j]:
                        best_cost[i, j] = c
                        best[i, j] = s
    return best


def _shifted(a, d, axis):
    """``out[..., k] = a[..., k + d]`` with zero fill outside."""
    out = np.zeros_like(a)
    n = a.shape[axis]
    if abs(d) >= n:
        return out
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if d >= 0:
        src[axis], dst[axis] = slice(d, n), slice(0, n - d)
    else:
        src[axis], dst[axis] = slice(0, n + d), slice(-d, n)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _match_np(img, s_min, s_max, wh, ww):
    H, W = img.shape
    ry, rx = wh // 2, ww // 2
    best = np.full((H, W), s_min, dtype=np.int64)
    best_cost = np.full((H, W), np.inf)
    cols = np.arange(W)
    for s in range(s_min, s_max + 1):
        valid = np.broadcast_to(cols >= s, (H, W)).astype(np.float64)
        diff = np.zeros((H, W))
        diff[:, s:] = np.abs(img[:, s:] - img[:, :-s])
        hsum = np.zeros((H, W))
        hcnt = np.zeros((H, W))
        for dj in range(-rx, ww - rx):
            hsum += _shifted(diff, dj, 1)
            hcnt += _shifted(valid, dj, 1)
        vsum = np.zeros((H, W))
        vcnt = np.zeros((H, W))
        for di in range(-ry, wh - ry):
            vsum += _shifted(hsum, di, 0)
            vcnt += _shifted(hcnt, di, 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            cost = np.where(vcnt > 0, vsum / np.where(vcnt > 0, vcnt, 1.0), np.inf)
        better = cost < best_cost
        best_cost[better] = cost[better]
        best[better] = s
    return best


def best_shifts(img: ImageLike, cfg: MatchConfig) -> np.ndarray:
    """Per-pixel argmin shift (int array), before clamping and margin fill."""
    a = np.ascontiguousarray(as_array(img), dtype=np.float64)
    if cfg.s_max >= a.shape[1]:
        raise SearchRangeInvalid(f"s_max={cfg.s_max} must be below the image width {a.shape[1]}")
    args = (a, int(cfg.s_min), int(cfg.s_max), int(cfg.window_h), int(cfg.window_w))
    return _match_nb(*args) if _accel.use_numba() else _match_np(*args)


def decode_window_match(img: ImageLike, cfg: MatchConfig = None, g: StereoGeometry = None) -> GrayImage:
    """Recover a depth map from a stereogram by windowed SAD matching.

    Shifts are clamped to the geometry's disparity range before conversion
    to depth. Columns left of ``s_max`` have no full search range; they copy
    the depth of column ``s_max`` in the same row.
    """
    a = as_array(img)
    W = a.shape[1]
    g = g or StereoGeometry.for_width(W)
    cfg = cfg or default_config(g)
    lo, hi = g.shift_range
    if cfg.s_min > lo or cfg.s_max < hi:
        raise SearchRangeInvalid(f"search range [{cfg.s_min}, {cfg.s_max}] does not bracket "
                                 f"the disparity range [{lo}, {hi}]")
    s = best_shifts(a, cfg)
    s = np.clip(s, g.min_disparity, g.stripe_width).astype(np.float64)
    depth = depth_of_disparity(s, g)
    edge = min(cfg.s_max, W - 1)
    depth[:, :edge] = depth[:, edge:edge + 1]
    k = cfg.median_k
    if k > 1:
        depth = ndimage.median_filter(depth, size=k, mode="nearest")
    return GrayImage(np.clip(depth, 0.0, 1.0))


def decode_auto(img: ImageLike, beta: float = 0.5, window=(3, 17), smoothing="none",
                period=None, search=None) -> GrayImage:
    """Estimate the stripe period (unless given), then window-match."""
    a = as_array(img)
    W = a.shape[1]
    p = int(period) if period else estimate_period(a, 2, min(W // 2 - 1, max(3, W // 2 - 1)))
    g = StereoGeometry(beta=beta, stripe_width=p)
    lo, hi = search if search else auto_range(p)
    lo = min(lo, int(math.floor(g.min_disparity)))
    hi = min(max(hi, p), W - 1)
    cfg = MatchConfig(window[0], window[1], max(1, lo), hi, smoothing)
    return decode_window_match(a, cfg, g)
