"""Plain-text run configuration: one ``key = value`` per line, # comments.

Parsing is strict: unknown keys and malformed values fail with a message
naming the offending key, so a bad run dies before any compute starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


_MODEL_KEYS = {
    "k": ("K", int),
    "d": ("max_disp", int),
    "channels": ("channels", int),
    "refinement_mode": ("refinement_mode", str),
    "seed": ("seed", int),
}

_TRAIN_KEYS = {
    "lr0": ("lr0", float),
    "decay_rate": ("decay_rate", float),
    "decay_steps": ("decay_steps", int),
    "iterations": ("iterations", int),
    "both_sides": ("both_sides", bool),
}

_DATA_KEYS = {
    "data": ("data", str),
    "synth_count": ("synth_count", int),
    "synth_width": ("synth_width", int),
    "synth_height": ("synth_height", int),
    "synth_min_disp": ("synth_min_disp", float),
    "synth_max_disp": ("synth_max_disp", float),
    "synth_kinds": ("synth_kinds", str),
    "synth_seed": ("synth_seed", int),
    "sceneflow_lefts": ("sceneflow_lefts", str),
    "kitti_root": ("kitti_root", str),
    "kitti_frames": ("kitti_frames", str),
}

_OUTPUT_KEYS = {
    "checkpoint": ("checkpoint", str),
    "loss_csv": ("loss_csv", str),
    "resume": ("resume", bool),
    "log_every": ("log_every", int),
}

_ALL_KEYS = {**_MODEL_KEYS, **_TRAIN_KEYS, **_DATA_KEYS, **_OUTPUT_KEYS}


@dataclass
class RunConfig:
    """Everything cmd_train needs; model fields feed ModelConfig directly."""

    K: int = 3
    max_disp: int = 191
    channels: int = 32
    refinement_mode: str = "multi"
    seed: int = 0

    lr0: float = 1e-3
    decay_rate: float = 0.9
    decay_steps: int | None = None
    iterations: int = 1000
    both_sides: bool = True

    data: str = "synth"
    synth_count: int = 100
    synth_width: int = 128
    synth_height: int = 64
    synth_min_disp: float = 0.0
    synth_max_disp: float = 20.0
    synth_kinds: str = "constant,ramp"
    synth_seed: int = 1
    sceneflow_lefts: str = ""
    kitti_root: str = ""
    kitti_frames: str = ""

    checkpoint: str = "model.snkt"
    loss_csv: str = "loss.csv"
    resume: bool = False
    log_every: int = 0


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cfg = RunConfig()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip().lower()
        raw = raw.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        attr, typ = _ALL_KEYS[key]
        try:
            value = _parse_bool(raw) if typ is bool else typ(raw)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for key {key!r}: {exc}") from None
        setattr(cfg, attr, value)

    if cfg.refinement_mode not in ("multi", "single"):
        raise ConfigError(f"key 'refinement_mode' must be multi or single, got {cfg.refinement_mode!r}")
    if (cfg.max_disp + 1) % (1 << cfg.K) != 0:
        raise ConfigError(
            f"key 'd': (D+1) must be divisible by 2^K so the cost volume has size "
            f"W/2^K x H/2^K x (D+1)/2^K; got D={cfg.max_disp}, K={cfg.K}"
        )
    if cfg.data not in ("synth", "sceneflow", "kitti"):
        raise ConfigError(f"key 'data' must be synth, sceneflow, or kitti, got {cfg.data!r}")
    if cfg.iterations < 1:
        raise ConfigError("key 'iterations' must be >= 1")
    for kind in cfg.synth_kinds.split(","):
        if kind.strip() not in ("constant", "ramp", "blocks"):
            raise ConfigError(f"key 'synth_kinds': unknown kind {kind.strip()!r}")
    return cfg
