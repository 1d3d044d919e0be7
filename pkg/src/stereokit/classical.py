"""Classical stereo baseline: window-SAD winner-takes-all matching with
parabolic subpixel refinement of the discrete cost curve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costvolume import DisparityMap
from .dataio import StereoSample
from .tensor import Tensor

LUMA = (0.299, 0.587, 0.114)


@dataclass
class MatchConfig:
    """Odd SAD window and the inclusive disparity search range [0, max_disp]."""

    window: int = 9
    max_disp: int = 32

    def __post_init__(self):
        if self.window % 2 == 0 or self.window < 1:
            raise ValueError(f"window must be odd and positive, got {self.window}")
        if self.max_disp < 1:
            raise ValueError("max_disp must be >= 1")


def grayscale(image) -> np.ndarray:
    """Luma conversion 0.299 R + 0.587 G + 0.114 B of a (H, W, 3) image."""
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    return (
        LUMA[0] * arr[:, :, 0] + LUMA[1] * arr[:, :, 1] + LUMA[2] * arr[:, :, 2]
    ).astype(np.float64)


def _box_sum(a: np.ndarray, r: int) -> np.ndarray:
    """Window sums over the window/image intersection (window radius r)."""
    h, w = a.shape
    integral = np.zeros((h + 1, w + 1), dtype=np.float64)
    integral[1:, 1:] = a.cumsum(axis=0).cumsum(axis=1)
    ys, xs = np.arange(h), np.arange(w)
    y0, y1 = np.clip(ys - r, 0, h), np.clip(ys + r + 1, 0, h)
    x0, x1 = np.clip(xs - r, 0, w), np.clip(xs + r + 1, 0, w)
    return (
        integral[np.ix_(y1, x1)]
        - integral[np.ix_(y0, x1)]
        - integral[np.ix_(y1, x0)]
        + integral[np.ix_(y0, x0)]
    )


def wta_match(left_gray: np.ndarray, right_gray: np.ndarray, cfg: MatchConfig):
    """Integer winner-takes-all disparity plus the full per-pixel cost curves.

    Costs are mean absolute grayscale differences over the valid part of
    the window (pixels whose matching column exists); positions with no
    valid support get cost +inf. Ties break toward the smaller disparity.
    """
    if left_gray.shape != right_gray.shape:
        raise ValueError("left/right shape mismatch")
    h, w = left_gray.shape
    if cfg.window > min(h, w):
        raise ValueError(f"window {cfg.window} larger than image {h}x{w}")
    r = cfg.window // 2
    n_cand = cfg.max_disp + 1
    costs = np.full((h, w, n_cand), np.inf, dtype=np.float64)
    for d in range(n_cand):
        diff = np.zeros((h, w), dtype=np.float64)
        if d < w:
            diff[:, d:] = np.abs(left_gray[:, d:] - right_gray[:, : w - d])
        valid = np.zeros((h, w), dtype=np.float64)
        valid[:, d:] = 1.0
        s = _box_sum(diff, r)
        n = _box_sum(valid, r)
        with np.errstate(invalid="ignore", divide="ignore"):
            c = s / n
        c[n == 0] = np.inf
        costs[:, :, d] = c
    disp = np.argmin(costs, axis=2)  # first minimum = smaller disparity on ties
    return DisparityMap(Tensor(disp.astype(np.float32)), level=0), costs


def parabola_refine(costs, d: int, max_disp: int | None = None) -> float:
    """Subpixel vertex of the parabola through (d-1, d, d+1) cost samples.

    Returns d + (C(d-1) - C(d+1)) / (2 (C(d-1) - 2 C(d) + C(d+1))) with the
    offset clamped to [-0.5, 0.5]. Positions without both neighbors, flat
    or non-finite stencils, and exact matches (C(d) = 0, where the integer
    location already is the minimum of the true cost) return d unchanged.
    """
    curve = np.asarray(costs, dtype=np.float64)
    top = curve.shape[-1] - 1 if max_disp is None else max_disp
    if d < 1 or d > top - 1:
        return float(d)
    cm, c0, cp = float(curve[d - 1]), float(curve[d]), float(curve[d + 1])
    if not (np.isfinite(cm) and np.isfinite(c0) and np.isfinite(cp)):
        return float(d)
    if c0 <= 1e-12:
        return float(d)
    denom = cm - 2.0 * c0 + cp
    if abs(denom) <= 1e-12:
        return float(d)
    offset = (cm - cp) / (2.0 * denom)
    return float(d) + float(np.clip(offset, -0.5, 0.5))


def _parabola_refine_map(costs: np.ndarray, disp: np.ndarray) -> np.ndarray:
    """Vectorized parabola_refine over a whole disparity map."""
    h, w, n_cand = costs.shape
    d = disp.astype(np.int64)
    ys, xs = np.mgrid[0:h, 0:w]
    inner = (d >= 1) & (d <= n_cand - 2)
    dm = np.clip(d - 1, 0, n_cand - 1)
    dp = np.clip(d + 1, 0, n_cand - 1)
    cm = costs[ys, xs, dm]
    c0 = costs[ys, xs, d]
    cp = costs[ys, xs, dp]
    denom = cm - 2.0 * c0 + cp
    ok = (
        inner
        & np.isfinite(cm) & np.isfinite(c0) & np.isfinite(cp)
        & (np.abs(denom) > 1e-12)
        & (c0 > 1e-12)
    )
    offset = np.zeros((h, w), dtype=np.float64)
    np.divide(cm - cp, 2.0 * denom, out=offset, where=ok)
    np.clip(offset, -0.5, 0.5, out=offset)
    offset[~ok] = 0.0
    return d.astype(np.float64) + offset


def classical_pipeline(sample: StereoSample, cfg: MatchConfig) -> DisparityMap:
    """WTA matching followed by per-pixel parabolic refinement."""
    disp, costs = wta_match(grayscale(sample.left), grayscale(sample.right), cfg)
    refined = _parabola_refine_map(costs, disp.values.data)
    return DisparityMap(Tensor(refined.astype(np.float32)), level=0)
