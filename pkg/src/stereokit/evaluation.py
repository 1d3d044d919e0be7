"""Disparity metrics, the subpixel-precision experiment, the triangulation
depth-error model, and per-stage runtime instrumentation."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .costvolume import (
    DisparityMap,
    filter_cost_volume,
    form_cost_volume,
    soft_argmin,
)
from .features import extract_features
from .refinement import refine, upsample_disparity
from . import tensor as T
from .tensor import Tensor


def _vals(x) -> np.ndarray:
    if isinstance(x, DisparityMap):
        return x.values.data
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x)


def epe(pred, gt, mask) -> float:
    """Mean absolute disparity error over the mask."""
    p, g, m = _vals(pred), _vals(gt), np.asarray(mask, bool)
    if p.shape != g.shape or p.shape != m.shape:
        raise ValueError(f"shape mismatch: pred {p.shape}, gt {g.shape}, mask {m.shape}")
    if not m.any():
        raise ValueError("empty mask")
    return float(np.abs(p[m] - g[m]).mean())


def bad_pixel_ratio(pred, gt, mask, threshold_px: float) -> float:
    """Percentage of masked pixels whose error exceeds the threshold."""
    if threshold_px <= 0:
        raise ValueError("threshold must be positive")
    p, g, m = _vals(pred), _vals(gt), np.asarray(mask, bool)
    if not m.any():
        raise ValueError("empty mask")
    err = np.abs(p[m] - g[m])
    return float(100.0 * np.count_nonzero(err > threshold_px) / err.size)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def subpixel_precision(pred, gt, mask) -> Optional[float]:
    """Mean |pred - gt| over pixels matched at the correct integer location.

    "Correctly matched" means round(pred) == round(gt) with half-away-from-
    zero rounding. Returns None when no pixel qualifies.
    """
    p, g, m = _vals(pred), _vals(gt), np.asarray(mask, bool)
    ok = m & (_round_half_away(p) == _round_half_away(g))
    if not ok.any():
        return None
    return float(np.abs(p[ok] - g[ok]).mean())


def depth_error_bound(delta_px: float, z_m: float, baseline_m: float, focal_px: float) -> float:
    """Triangulation depth error delta * Z^2 / (b * f), in meters."""
    if min(delta_px, z_m, baseline_m, focal_px) <= 0:
        raise ValueError("all inputs must be positive")
    return delta_px * z_m * z_m / (baseline_m * focal_px)


@dataclass
class EvalReport:
    epe_all: float
    epe_nocc: float
    bad_ratio: dict  # threshold px -> percent
    subpixel: Optional[float]
    n_pixels: int

    def rows(self) -> list[tuple[str, str]]:
        out = [
            ("epe_all", f"{self.epe_all:.6f}"),
            ("epe_nocc", f"{self.epe_nocc:.6f}"),
        ]
        for thr in sorted(self.bad_ratio):
            out.append((f"bad_{thr:g}px_percent", f"{self.bad_ratio[thr]:.4f}"))
        out.append(("subpixel_precision", "undefined" if self.subpixel is None else f"{self.subpixel:.6f}"))
        out.append(("n_pixels", str(self.n_pixels)))
        return out


def evaluate(pred, gt, mask=None, nocc_mask=None, thresholds=(1.0, 2.0, 3.0)) -> EvalReport:
    """Full metric set. mask defaults to everything; nocc defaults to mask."""
    g = _vals(gt)
    m = np.ones(g.shape, bool) if mask is None else np.asarray(mask, bool)
    nocc = m if nocc_mask is None else (m & np.asarray(nocc_mask, bool))
    return EvalReport(
        epe_all=epe(pred, gt, m),
        epe_nocc=epe(pred, gt, nocc),
        bad_ratio={thr: bad_pixel_ratio(pred, gt, m, thr) for thr in thresholds},
        subpixel=subpixel_precision(pred, gt, m),
        n_pixels=int(np.count_nonzero(m)),
    )


def write_report_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "value"])
        writer.writerows(report.rows())


# ---------------------------------------------------------------------------
# runtime breakdown


@dataclass
class StageTimings:
    """Median per-stage wall times in milliseconds.

    filter_ms includes the soft-argmin selection; refine_ms has one entry
    per refinement stage, coarsest first. Percentages are medians of the
    per-repetition stage/total ratios, which keeps them stable when the
    machine is under load.
    """

    feature_ms: float
    volume_ms: float
    filter_ms: float
    refine_ms: list
    total_ms: float
    pct: Optional[list] = None  # per-stage percent, same order as stages()

    def stages(self) -> list[tuple[str, float]]:
        out = [("feature", self.feature_ms), ("volume", self.volume_ms), ("filter", self.filter_ms)]
        for i, ms in enumerate(self.refine_ms):
            out.append((f"refine_level_{len(self.refine_ms) - 1 - i}", ms))
        return out

    def percentages(self) -> list[tuple[str, float]]:
        names = [name for name, _ in self.stages()]
        if self.pct is not None:
            return list(zip(names, self.pct))
        return [(name, 100.0 * ms / self.total_ms) for name, ms in self.stages()]


def runtime_breakdown(model, sample, repetitions: int = 5) -> StageTimings:
    """Median wall time of every pipeline stage over repeated runs.

    No assertion is made about absolute values (hardware dependent); the
    part-to-whole accounting is what callers verify.
    """
    if repetitions < 5:
        raise ValueError("repetitions must be >= 5 for a stable median")
    from .dataio import normalize

    left = normalize(sample.left if isinstance(sample.left, Tensor) else Tensor(sample.left))
    right = normalize(sample.right if isinstance(sample.right, Tensor) else Tensor(sample.right))
    cfg = model.config
    n_refine = cfg.K if cfg.refinement_mode == "multi" else 1
    feat_t, vol_t, filt_t, tot_t = [], [], [], []
    ref_t = [[] for _ in range(n_refine)]

    for _ in range(repetitions):
        t0 = time.perf_counter()
        fl = extract_features(left, model.tower)
        fr = extract_features(right, model.tower)
        t1 = time.perf_counter()
        raw = form_cost_volume(fl, fr, cfg.dprime)
        t2 = time.perf_counter()
        filtered = filter_cost_volume(raw, model.filter)
        current = soft_argmin(filtered, level=cfg.K)
        t3 = time.perf_counter()
        feat_t.append(t1 - t0)
        vol_t.append(t2 - t1)
        filt_t.append(t3 - t2)
        full_h, full_w = left.shape[:2]
        tr = time.perf_counter()
        if cfg.refinement_mode == "multi":
            for i, level in enumerate(range(cfg.K - 1, -1, -1)):
                target = (-(-full_h // (1 << level)), -(-full_w // (1 << level)))
                d_up = upsample_disparity(current, 2, target)
                guide = T.bilinear_resize(left, *target)
                current = refine(d_up, guide, model.refiners[i])
                now = time.perf_counter()
                ref_t[i].append(now - tr)
                tr = now
        else:
            d_up = upsample_disparity(current, 1 << cfg.K, (full_h, full_w))
            current = refine(d_up, left, model.refiners[0])
            now = time.perf_counter()
            ref_t[0].append(now - tr)
            tr = now
        tot_t.append(tr - t0)

    med = lambda xs: float(np.median(xs) * 1000.0)
    per_stage = [feat_t, vol_t, filt_t] + ref_t
    totals = np.asarray(tot_t)
    pct = [float(np.median(np.asarray(xs) / totals * 100.0)) for xs in per_stage]
    return StageTimings(
        feature_ms=med(feat_t),
        volume_ms=med(vol_t),
        filter_ms=med(filt_t),
        refine_ms=[med(xs) for xs in ref_t],
        total_ms=med(tot_t),
        pct=pct,
    )


def write_timings_csv(timings: StageTimings, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["stage", "median_ms", "percent"])
        for (name, ms), (_, pct) in zip(timings.stages(), timings.percentages()):
            writer.writerow([name, f"{ms:.3f}", f"{pct:.2f}"])
        writer.writerow(["total", f"{timings.total_ms:.3f}", "100.00"])


# ---------------------------------------------------------------------------
# subpixel-precision experiment


def subpixel_experiment(
    predictors: Mapping[str, Callable],
    pairs: Sequence,
    csv_path=None,
) -> list[dict]:
    """Per-configuration subpixel precision over a held-out synthetic set.

    predictors maps a configuration label to a callable taking a
    StereoSample and returning a full-resolution disparity array. Returns
    one row per (configuration, pair) plus a mean row per configuration.
    """
    rows: list[dict] = []
    for label, fn in predictors.items():
        per_pair = []
        for i, sample in enumerate(pairs):
            pred = fn(sample)
            sp = subpixel_precision(pred, sample.gt_left, sample.valid_mask)
            per_pair.append(sp)
            rows.append({"config": label, "pair": i, "subpixel_precision": sp})
        defined = [s for s in per_pair if s is not None]
        mean = float(np.mean(defined)) if defined else None
        rows.append({"config": label, "pair": "mean", "subpixel_precision": mean})
    if csv_path is not None:
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["config", "pair", "subpixel_precision"])
            for r in rows:
                sp = r["subpixel_precision"]
                writer.writerow([r["config"], r["pair"], "undefined" if sp is None else f"{sp:.6f}"])
    return rows
