"""Hierarchical robust loss, RMSProp, learning-rate schedule, and the
end-to-end training loop (batch size 1, optional mirrored right-view pass)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .costvolume import DisparityMap
from .dataio import StereoSample, normalize
from .pipeline import StereoModel
from .refinement import upsample_disparity
from .tensor import Param, Tape, Tensor


@dataclass
class RobustLoss:
    """Smoothed-L1 penalty rho(x) = sqrt((x/c)^2 + 1) - 1.

    This is the alpha = 1 member of the two-parameter robust family; other
    alpha values are not implemented.
    """

    alpha: float = 1.0
    c: float = 2.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.alpha != 1.0:
            raise NotImplementedError("only the alpha=1 (smoothed L1) form is implemented")

    def __call__(self, x):
        return robust_loss(x, self.c)


def robust_loss(x, c: float = 2.0):
    """rho(x) = sqrt((x/c)^2 + 1) - 1; even, rho(0)=0, asymptotic slope 1/c."""
    xa = np.asarray(x, dtype=np.float64)
    out = np.sqrt((xa / c) ** 2 + 1.0) - 1.0
    return float(out) if np.isscalar(x) or out.ndim == 0 else out


def _robust_tensor(x: Tensor, c: float) -> Tensor:
    return T.add_const(T.sqrt(T.add_const(T.square(T.scale(x, 1.0 / c)), 1.0)), -1.0)


def hierarchical_loss(
    preds: Sequence[DisparityMap],
    gt: DisparityMap,
    valid_mask: np.ndarray,
    c: float = 2.0,
) -> Tensor:
    """Sum over levels of the masked mean robust error at full resolution.

    Every prediction is bilinearly upsampled (with value scaling) to the
    ground-truth resolution before differencing; level K is the
    pre-refinement coarse output.
    """
    count = float(np.count_nonzero(valid_mask))
    if count == 0:
        raise ValueError("empty validity mask")
    gh, gw = gt.values.shape
    gt_t = Tensor(gt.values.data)
    mask_t = Tensor(valid_mask.astype(gt.values.dtype))
    total: Optional[Tensor] = None
    for pred in preds:
        full = upsample_disparity(pred, 1 << pred.level, (gh, gw))
        rho = _robust_tensor(T.sub(full.values, gt_t), c)
        term = T.scale(T.sum_all(T.mul(rho, mask_t)), 1.0 / count)
        total = term if total is None else T.add(total, term)
    return total


@dataclass
class OptState:
    """Per-parameter accumulator of squared gradients."""

    decay: float = 0.9
    eps: float = 1e-8
    acc: dict = field(default_factory=dict)

    def slot(self, p: Param) -> np.ndarray:
        a = self.acc.get(p.name)
        if a is None:
            a = np.zeros_like(p.data)
            self.acc[p.name] = a
        return a


def rmsprop_step(params: Sequence[Param], state: OptState, lr: float) -> None:
    """acc <- 0.9 acc + 0.1 g^2;  p <- p - lr * g / sqrt(acc + eps)."""
    for p in params:
        g = p.grad
        a = state.slot(p)
        a *= state.decay
        a += (1.0 - state.decay) * g * g
        p.value.data -= lr * g / np.sqrt(a + state.eps)


@dataclass
class TrainConfig:
    iterations: int
    lr0: float = 1e-3
    decay_rate: float = 0.9
    decay_steps: Optional[int] = None  # default: iterations / 10
    seed: int = 0
    both_sides: bool = True
    loss_c: float = 2.0

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.decay_steps is None:
            self.decay_steps = max(self.iterations // 10, 1)


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    """lr0 * decay_rate ** (step / decay_steps), continuous exponent."""
    return cfg.lr0 * cfg.decay_rate ** (step / cfg.decay_steps)


def _mirrored(sample: StereoSample) -> tuple[Tensor, Tensor, DisparityMap, np.ndarray]:
    """Flip both views horizontally and swap so the right view becomes the
    reference; its ground truth (flipped) supervises the pass."""
    if sample.gt_right is None or sample.valid_mask_right is None:
        raise ValueError("both_sides training needs gt_right and valid_mask_right")
    new_left = Tensor(sample.right.data[:, ::-1].copy())
    new_right = Tensor(sample.left.data[:, ::-1].copy())
    gt = DisparityMap(Tensor(sample.gt_right.values.data[:, ::-1].copy()), level=0)
    mask = sample.valid_mask_right[:, ::-1].copy()
    return new_left, new_right, gt, mask


def train(
    model: StereoModel,
    dataset: Sequence[StereoSample],
    cfg: TrainConfig,
    start_step: int = 0,
    log_every: int = 0,
) -> list[dict]:
    """Run the training loop; returns one history row per step.

    Sample order is a seeded permutation per epoch. When both_sides is on,
    each step runs the left-reference pass plus the mirrored right-view
    pass (two forward/backward sweeps) and applies one RMSProp update on
    the summed gradients.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    params = list(model.params())
    state = OptState()
    order_rng = np.random.default_rng(cfg.seed)
    per_epoch = len(dataset)
    order = None
    history: list[dict] = []

    from .evaluation import epe  # late import; evaluation depends on costvolume only

    for step in range(start_step, cfg.iterations):
        if order is None or step % per_epoch == 0:
            order = order_rng.permutation(per_epoch)
        sample = dataset[order[step % per_epoch]]
        lr = lr_schedule(step, cfg)
        model.zero_grads()

        left = normalize(sample.left)
        right = normalize(sample.right)
        with Tape() as tape:
            maps = model.forward(left, right)
            loss = hierarchical_loss(maps, sample.gt_left, sample.valid_mask, cfg.loss_c)
        tape.backward(loss)
        loss_value = loss.item()
        final = maps[-1].values.data
        epe_full = epe(final, sample.gt_left.values.data, sample.valid_mask)
        del tape, maps, loss

        if cfg.both_sides:
            m_left, m_right, m_gt, m_mask = _mirrored(sample)
            with Tape() as tape:
                maps = model.forward(normalize(m_left), normalize(m_right))
                loss = hierarchical_loss(maps, m_gt, m_mask, cfg.loss_c)
            tape.backward(loss)
            loss_value += loss.item()
            del tape, maps, loss

        rmsprop_step(params, state, lr)
        row = {"step": step, "lr": lr, "loss": loss_value, "epe_fullres": epe_full}
        history.append(row)
        if log_every and (step % log_every == 0 or step == cfg.iterations - 1):
            print(f"step {step:5d}  lr {lr:.2e}  loss {loss_value:.4f}  epe {epe_full:.3f}", flush=True)
    return history


def write_loss_csv(history: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "lr", "loss", "epe_fullres"])
        for row in history:
            writer.writerow([row["step"], f"{row['lr']:.8g}", f"{row['loss']:.8g}", f"{row['epe_fullres']:.8g}"])
