"""Full coarse-to-fine disparity model: Siamese tower, filtered cost
volume, soft-argmin selection, and the refinement cascade."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, restore_params, save_checkpoint
from .costvolume import (
    DisparityMap,
    build_filter,
    coarse_candidates,
    filter_cost_volume,
    form_cost_volume,
    soft_argmin,
)
from .features import TowerSpec, build_tower, extract_features
from .refinement import build_refiner, hierarchical_refine
from .tensor import Tensor


@dataclass
class ModelConfig:
    """Architecture knobs: downsampling depth K, disparity range D, width."""

    K: int = 3
    max_disp: int = 191
    channels: int = 32
    refinement_mode: str = "multi"
    leaky_alpha: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.refinement_mode not in ("multi", "single"):
            raise ValueError(f"refinement_mode must be 'multi' or 'single', got {self.refinement_mode!r}")
        self.dprime = coarse_candidates(self.max_disp, self.K)


class StereoModel:
    """Holds all parameters and runs the end-to-end forward pass."""

    def __init__(self, config: ModelConfig):
        self.config = config
        spec = TowerSpec(K=config.K, channels=config.channels, leaky_alpha=config.leaky_alpha)
        self.tower = build_tower(spec, rng_seed=config.seed)
        self.filter = build_filter(np.random.default_rng(config.seed + 1), config.channels)
        self.filter.leaky_alpha = config.leaky_alpha
        self.refiners = []
        n_refiners = config.K if config.refinement_mode == "multi" else 1
        for i in range(n_refiners):
            level = (config.K - 1 - i) if config.refinement_mode == "multi" else 0
            disp_scale = float(config.dprime * (1 << (config.K - level)))
            self.refiners.append(
                build_refiner(
                    np.random.default_rng(config.seed + 2 + i),
                    config.channels,
                    level=level,
                    disp_scale=disp_scale,
                    prefix=f"refine{level}",
                    leaky_alpha=config.leaky_alpha,
                )
            )

    def params(self):
        yield from self.tower.params()
        yield from self.filter.params()
        for r in self.refiners:
            yield from r.params()

    def zero_grads(self) -> None:
        for p in self.params():
            p.zero_grad()

    def parameter_count(self) -> int:
        return sum(int(np.prod(p.shape)) for p in self.params())

    def coarse_disparity(self, left_norm: Tensor, right_norm: Tensor) -> DisparityMap:
        """Level-K soft-argmin disparity from the filtered cost volume."""
        feat_l = extract_features(left_norm, self.tower)
        feat_r = extract_features(right_norm, self.tower)
        raw = form_cost_volume(feat_l, feat_r, self.config.dprime)
        filtered = filter_cost_volume(raw, self.filter)
        return soft_argmin(filtered, level=self.config.K)

    def forward(self, left_norm: Tensor, right_norm: Tensor) -> list[DisparityMap]:
        """All disparity maps, coarsest (level K) to full resolution (level 0).

        Both inputs must already be normalized to [-1, 1]; the left image
        doubles as the refinement guide.
        """
        if left_norm.shape != right_norm.shape:
            raise ValueError(f"image shape mismatch: {left_norm.shape} vs {right_norm.shape}")
        coarse = self.coarse_disparity(left_norm, right_norm)
        return hierarchical_refine(coarse, left_norm, self.refiners, self.config.refinement_mode)

    def save(self, path, step: int = 0) -> None:
        save_checkpoint(path, self.params(), {"config": asdict(self.config), "step": step})

    @classmethod
    def load(cls, path) -> tuple["StereoModel", dict]:
        meta, tensors = load_checkpoint(path)
        if "config" not in meta:
            raise CheckpointError("checkpoint has no model config metadata")
        model = cls(ModelConfig(**meta["config"]))
        restore_params(model.params(), tensors)
        return model, meta
