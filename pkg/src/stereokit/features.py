"""Siamese feature tower: K stride-2 downsampling convs, residual blocks,
and a linear head producing 32-dimensional per-pixel descriptors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Param, Tensor


def truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Normal(0, std) resampled until every draw lies within 2 std."""
    x = rng.standard_normal(shape)
    bad = np.abs(x) > 2.0
    while bad.any():
        x[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(x) > 2.0
    return (x * std).astype(np.float32)


def conv2d_init(rng, k: int, cin: int, cout: int, name: str) -> tuple[Param, Param]:
    """Fan-in scaled truncated-normal weight (std = sqrt(2/fan_in)), zero bias."""
    std = np.sqrt(2.0 / (k * k * cin))
    w = Param(f"{name}/w", Tensor(truncated_normal(rng, (k, k, cin, cout), std)))
    b = Param(f"{name}/b", Tensor(np.zeros(cout, dtype=np.float32)))
    return w, b


def conv3d_init(rng, k: int, cin: int, cout: int, name: str) -> tuple[Param, Param]:
    std = np.sqrt(2.0 / (k * k * k * cin))
    w = Param(f"{name}/w", Tensor(truncated_normal(rng, (k, k, k, cin, cout), std)))
    b = Param(f"{name}/b", Tensor(np.zeros(cout, dtype=np.float32)))
    return w, b


@dataclass
class ResBlockParams:
    """Two 3x3 convs, each batch-normalized; leaky ReLU after the first conv
    and after the skip addition."""

    w1: Param
    b1: Param
    g1: Param
    bt1: Param
    w2: Param
    b2: Param
    g2: Param
    bt2: Param
    dilation: int = 1

    def params(self):
        yield from (self.w1, self.b1, self.g1, self.bt1, self.w2, self.b2, self.g2, self.bt2)


def build_res_block(rng, channels: int, name: str, dilation: int = 1) -> ResBlockParams:
    w1, b1 = conv2d_init(rng, 3, channels, channels, f"{name}/conv1")
    w2, b2 = conv2d_init(rng, 3, channels, channels, f"{name}/conv2")
    ones = lambda n: Tensor(np.ones(n, dtype=np.float32))
    zeros = lambda n: Tensor(np.zeros(n, dtype=np.float32))
    return ResBlockParams(
        w1=w1, b1=b1,
        g1=Param(f"{name}/conv1/gamma", ones(channels)), bt1=Param(f"{name}/conv1/beta", zeros(channels)),
        w2=w2, b2=b2,
        g2=Param(f"{name}/conv2/gamma", ones(channels)), bt2=Param(f"{name}/conv2/beta", zeros(channels)),
        dilation=dilation,
    )


def res_block(x: Tensor, p: ResBlockParams, alpha: float) -> Tensor:
    h = T.conv2d(x, p.w1.value, p.b1.value, dilation=p.dilation)
    h = T.batch_norm(h, p.g1.value, p.bt1.value)
    h = T.leaky_relu(h, alpha)
    h = T.conv2d(h, p.w2.value, p.b2.value, dilation=p.dilation)
    h = T.batch_norm(h, p.g2.value, p.bt2.value)
    return T.leaky_relu(T.add(x, h), alpha)


@dataclass
class TowerSpec:
    """K stride-2 5x5 convs, then residual blocks, then a linear 3x3 head."""

    K: int = 3
    channels: int = 32
    num_res_blocks: int = 6
    leaky_alpha: float = 0.2
    in_channels: int = 3

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        # K outside {3, 4} still runs but is a non-standard configuration.
        self.standard = self.K in (3, 4)


@dataclass
class TowerParams:
    spec: TowerSpec
    down: list   # [(w, b)] * K, 5x5 stride-2 convs
    blocks: list  # [ResBlockParams] * num_res_blocks
    head_w: Param
    head_b: Param

    def params(self):
        for w, b in self.down:
            yield from (w, b)
        for blk in self.blocks:
            yield from blk.params()
        yield self.head_w
        yield self.head_b


def build_tower(spec: TowerSpec, rng_seed: int) -> TowerParams:
    """Deterministic tower construction for a given seed."""
    rng = np.random.default_rng(rng_seed)
    down = []
    cin = spec.in_channels
    for i in range(spec.K):
        down.append(conv2d_init(rng, 5, cin, spec.channels, f"tower/down{i}"))
        cin = spec.channels
    blocks = [build_res_block(rng, spec.channels, f"tower/block{i}") for i in range(spec.num_res_blocks)]
    head_w, head_b = conv2d_init(rng, 3, spec.channels, spec.channels, "tower/head")
    return TowerParams(spec=spec, down=down, blocks=blocks, head_w=head_w, head_b=head_b)


def extract_features(image: Tensor, params: TowerParams) -> Tensor:
    """Map a normalized (H, W, 3) image to ceil(H/2^K) x ceil(W/2^K) x C features.

    The head is linear (no norm, no activation), so outputs are unbounded.
    Both views of a pair must share one TowerParams (Siamese weights).
    """
    spec = params.spec
    if image.ndim != 3 or image.shape[2] != spec.in_channels:
        raise ValueError(f"expected (H, W, {spec.in_channels}) image, got {image.shape}")
    x = image
    for w, b in params.down:
        x = T.conv2d(x, w.value, b.value, stride=2)
        x = T.leaky_relu(x, spec.leaky_alpha)
    for blk in params.blocks:
        x = res_block(x, blk, spec.leaky_alpha)
    return T.conv2d(x, params.head_w.value, params.head_b.value)


def parameter_count(params) -> int:
    """Total scalar parameter count of anything exposing .params()."""
    return sum(int(np.prod(p.shape)) for p in params.params())
