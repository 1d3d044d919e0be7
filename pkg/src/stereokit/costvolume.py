"""Coarse cost volume: formation by feature differencing, 3-D filtering,
and disparity selection (hard argmin, soft argmin, stochastic draw)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .tensor import Param, Tensor


@dataclass
class DisparityMap:
    """Per-pixel continuous disparity in pixels at this map's resolution.

    level 0 is full resolution; level k > 0 is downsampled by 2**k and the
    values are expressed in that level's own pixel units.
    """

    values: Tensor  # (H, W)
    level: int = 0

    @property
    def shape(self) -> tuple:
        return self.values.shape


@dataclass
class CostVolume:
    """Feature-difference volume and its filtered scalar form at level K."""

    raw: Tensor                     # (H', W', D', C)
    level: int
    dprime: int
    filtered: Optional[Tensor] = None  # (H', W', D')


def coarse_candidates(max_disp: int, k: int) -> int:
    """Number of coarse disparity candidates D' = (D+1) / 2**k.

    (D+1) must divide evenly; this is the volume-size rule the rest of the
    pipeline assumes.
    """
    f = 1 << k
    if (max_disp + 1) % f != 0:
        raise ValueError(
            f"(D+1) must be divisible by 2^K for the cost volume size "
            f"W/2^K x H/2^K x (D+1)/2^K; got D={max_disp}, K={k}"
        )
    return (max_disp + 1) // f


def form_cost_volume(feat_left: Tensor, feat_right: Tensor, dprime: int) -> Tensor:
    """Per-candidate feature differences, left image as reference.

    raw[y, x, d, :] = feat_left[y, x, :] - feat_right[y, max(x - d, 0), :].
    Out-of-range candidates clamp to column 0 so border costs stay finite.
    """
    if feat_left.shape != feat_right.shape:
        raise ValueError(f"feature shape mismatch: {feat_left.shape} vs {feat_right.shape}")
    if dprime < 1:
        raise ValueError("dprime must be >= 1")
    T._check_dtypes("form_cost_volume", feat_left, feat_right)
    h, w, c = feat_left.shape
    raw = np.empty((h, w, dprime, c), dtype=feat_left.dtype)
    for d in range(dprime):
        cols = np.maximum(np.arange(w) - d, 0)
        raw[:, :, d, :] = feat_left.data - feat_right.data[:, cols, :]
    out = Tensor(raw)
    T._ensure_finite(out.data, "form_cost_volume")

    tape = T._tape()
    if tape is not None:

        def pull(tp, g: np.ndarray) -> None:
            if tp.wants(feat_left):
                tp.accumulate(feat_left, g.sum(axis=2))
            if tp.wants(feat_right):
                gr = np.zeros((h, w, c), dtype=g.dtype)
                for d in range(dprime):
                    if d > 0:
                        gr[:, 0, :] -= g[:, :d, d, :].sum(axis=1)
                    gr[:, : w - d, :] -= g[:, d:, d, :]
                tp.accumulate(feat_right, gr)

        tape.record(out, pull)
    return out


@dataclass
class FilterParams:
    """Four 3x3x3 conv blocks (batch norm + leaky ReLU) and a linear head."""

    convs: list  # [(w, b, gamma, beta)] * 4
    head_w: Param
    head_b: Param
    leaky_alpha: float = 0.2

    def params(self):
        for w, b, g, bt in self.convs:
            yield from (w, b, g, bt)
        yield self.head_w
        yield self.head_b


def build_filter(rng: np.random.Generator, channels: int = 32, prefix: str = "filter") -> FilterParams:
    from .features import conv3d_init  # local import; features owns the init helpers

    convs = []
    for i in range(4):
        w, b = conv3d_init(rng, 3, channels, channels, f"{prefix}/conv{i}")
        gamma = Param(f"{prefix}/conv{i}/gamma", Tensor(np.ones(channels, dtype=np.float32)))
        beta = Param(f"{prefix}/conv{i}/beta", Tensor(np.zeros(channels, dtype=np.float32)))
        convs.append((w, b, gamma, beta))
    head_w, head_b = conv3d_init(rng, 3, channels, 1, f"{prefix}/head")
    return FilterParams(convs=convs, head_w=head_w, head_b=head_b)


def filter_cost_volume(raw: Tensor, params: FilterParams) -> Tensor:
    """Aggregate context over space and disparity; scalar cost per candidate.

    Lower filtered cost means a better match.
    """
    x = raw
    for w, b, gamma, beta in params.convs:
        x = T.conv3d(x, w.value, b.value)
        x = T.batch_norm(x, gamma.value, beta.value)
        x = T.leaky_relu(x, params.leaky_alpha)
    x = T.conv3d(x, params.head_w.value, params.head_b.value)
    return T.reshape(x, x.shape[:3])


def hard_argmin(filtered: Tensor, level: int) -> DisparityMap:
    """Index of the minimum cost per pixel; ties break toward smaller disparity."""
    idx = np.argmin(filtered.data, axis=2)
    return DisparityMap(Tensor(idx.astype(filtered.dtype)), level=level)


def soft_argmin(filtered: Tensor, level: int) -> DisparityMap:
    """Softmax-weighted mean of candidate indices; differentiable.

    d = sum_d d * exp(-C(d)) / sum_d' exp(-C(d')), with max subtraction
    inside the softmax.
    """
    dprime = filtered.shape[2]
    probs = T.softmax(T.neg(filtered), axis=2)
    idx = Tensor(np.arange(dprime, dtype=filtered.dtype).reshape(1, 1, dprime))
    vals = T.sum_axis(T.mul(probs, idx), axis=2)
    return DisparityMap(vals, level=level)


def sample_disparity(filtered: Tensor, rng_seed: int, level: int) -> DisparityMap:
    """Per-pixel draw from the softmax distribution over negated costs.

    Inference only: nothing is recorded on the tape.
    """
    z = -filtered.data
    z = z - z.max(axis=2, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=2, keepdims=True)
    cdf = np.cumsum(probs, axis=2)
    u = np.random.default_rng(rng_seed).random(filtered.shape[:2] + (1,))
    draw = (cdf < u).sum(axis=2)
    return DisparityMap(Tensor(draw.astype(filtered.dtype)), level=level)
