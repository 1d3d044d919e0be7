"""Hierarchical edge-aware refinement of coarse disparity.

Each stage bilinearly upsamples the incoming disparity (scaling the values
so they stay in the new resolution's pixel units), concatenates the color
guide resized to the same grid, and predicts a residual that is added to
the upsampled disparity; a final ReLU keeps disparities non-negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .costvolume import DisparityMap
from .features import ResBlockParams, build_res_block, conv2d_init, res_block
from .tensor import Param, Tensor

DILATION_SCHEDULE = (1, 2, 4, 8, 1, 1)


@dataclass
class RefinerParams:
    """Entry 3x3 conv (3 color + 1 disparity channels), six dilated residual
    blocks, and a linear 3x3 head producing the scalar residual."""

    entry_w: Param
    entry_b: Param
    blocks: list  # [ResBlockParams] * 6 with dilations DILATION_SCHEDULE
    head_w: Param
    head_b: Param
    level: int
    disp_scale: float  # disparity normalization: values / disp_scale feed the net
    leaky_alpha: float = 0.2

    def params(self):
        yield from (self.entry_w, self.entry_b)
        for blk in self.blocks:
            yield from blk.params()
        yield from (self.head_w, self.head_b)


def build_refiner(
    rng: np.random.Generator,
    channels: int,
    level: int,
    disp_scale: float,
    prefix: str,
    leaky_alpha: float = 0.2,
) -> RefinerParams:
    entry_w, entry_b = conv2d_init(rng, 3, 4, channels, f"{prefix}/entry")
    blocks = [
        build_res_block(rng, channels, f"{prefix}/block{i}", dilation=d)
        for i, d in enumerate(DILATION_SCHEDULE)
    ]
    head_w, head_b = conv2d_init(rng, 3, channels, 1, f"{prefix}/head")
    # zero head: each stage starts as the exact identity ReLU(upsample(d)),
    # so an untrained cascade can never be worse than its coarse input
    head_w.value.data[...] = 0.0
    return RefinerParams(
        entry_w=entry_w, entry_b=entry_b, blocks=blocks,
        head_w=head_w, head_b=head_b,
        level=level, disp_scale=disp_scale, leaky_alpha=leaky_alpha,
    )


def upsample_disparity(d: DisparityMap, factor: int, out_hw: tuple[int, int] | None = None) -> DisparityMap:
    """Bilinearly upsample and rescale values into the new pixel units.

    out_hw overrides the default (H*factor, W*factor) target so levels of
    images whose extents are not divisible by 2^K still chain exactly
    (targets come from ceil division of the full resolution).
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    h, w = d.values.shape
    if out_hw is None:
        out_hw = (h * factor, w * factor)
    if factor == 1 and out_hw == (h, w):
        return DisparityMap(d.values, level=d.level)
    vals = T.bilinear_resize(d.values, out_hw[0], out_hw[1])
    vals = T.scale(vals, float(factor))
    return DisparityMap(vals, level=d.level - int(round(np.log2(factor))))


def refine(d_up: DisparityMap, guide: Tensor, params: RefinerParams) -> DisparityMap:
    """One residual refinement stage: ReLU(d_up + residual(guide, d_up)).

    guide is the color image resized to d_up's grid, normalized to [-1, 1].
    The disparity channel is fed to the network divided by disp_scale and
    the predicted residual is scaled back before the sum.
    """
    h, w = d_up.values.shape
    if guide.shape[:2] != (h, w):
        raise ValueError(f"guide resolution {guide.shape[:2]} != disparity {h, w}")
    norm = T.reshape(T.scale(d_up.values, 1.0 / params.disp_scale), (h, w, 1))
    x = T.concat([guide, norm], axis=2)
    x = T.leaky_relu(T.conv2d(x, params.entry_w.value, params.entry_b.value), params.leaky_alpha)
    for blk in params.blocks:
        x = res_block(x, blk, params.leaky_alpha)
    r = T.conv2d(x, params.head_w.value, params.head_b.value)
    residual = T.scale(T.reshape(r, (h, w)), params.disp_scale)
    return DisparityMap(T.relu(T.add(d_up.values, residual)), level=params.level)


def hierarchical_refine(
    coarse: DisparityMap,
    color: Tensor,
    refiners: list[RefinerParams],
    mode: str = "multi",
) -> list[DisparityMap]:
    """Refine a level-K coarse map up to full resolution.

    multi: K stages, each doubling resolution (one refiner per level K-1..0).
    single: one stage directly at full resolution.
    Returns every intermediate map, coarsest first; the hierarchical loss
    consumes all of them. All values are >= 0 (each stage ends in ReLU).
    """
    k = coarse.level
    full_h, full_w = color.shape[:2]
    if mode == "multi":
        if len(refiners) != k:
            raise ValueError(f"multi mode with level-{k} input needs {k} refiners, got {len(refiners)}")
        maps = [coarse]
        current = coarse
        for level in range(k - 1, -1, -1):
            target = (-(-full_h // (1 << level)), -(-full_w // (1 << level)))
            d_up = upsample_disparity(current, 2, target)
            guide = T.bilinear_resize(color, *target)
            current = refine(d_up, guide, refiners[k - 1 - level])
            maps.append(current)
        return maps
    if mode == "single":
        if len(refiners) != 1:
            raise ValueError(f"single mode needs exactly 1 refiner, got {len(refiners)}")
        d_up = upsample_disparity(coarse, 1 << k, (full_h, full_w))
        return [coarse, refine(d_up, color, refiners[0])]
    raise ValueError(f"unknown refinement mode {mode!r}")
