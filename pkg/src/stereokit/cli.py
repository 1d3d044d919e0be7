"""Command-line entry point: train, infer, eval, bench.

Every command is file-in/file-out and deterministic for a fixed seed and
config (timing measurements excepted). The STEREONET_THREADS environment
variable caps the data-parallel width of the numeric backend (0 or unset
means automatic); it must be handled before numpy is first imported, so
this module touches it at import time.
"""

from __future__ import annotations

import os
import sys

_THREAD_VARS = ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def _apply_thread_cap(environ=os.environ) -> int | None:
    """Propagate STEREONET_THREADS to the BLAS/OpenMP thread knobs."""
    raw = environ.get("STEREONET_THREADS", "").strip()
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"error: STEREONET_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise SystemExit("error: STEREONET_THREADS must be >= 0")
    if n == 0:
        return None  # automatic
    for var in _THREAD_VARS:
        environ[var] = str(n)
    return n


_apply_thread_cap()

import argparse  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402


def cmd_train(args) -> int:
    from .config import parse_config
    from .dataio import load_kitti_sample, load_sceneflow_sample, synth_dataset
    from .pipeline import ModelConfig, StereoModel
    from .training import TrainConfig, train, write_loss_csv

    cfg = parse_config(args.config)
    start_step = 0
    ckpt = Path(cfg.checkpoint)
    if cfg.resume and ckpt.exists():
        model, meta = StereoModel.load(ckpt)
        start_step = int(meta.get("step", 0))
        print(f"resuming from {ckpt} at step {start_step}")
    else:
        model = StereoModel(
            ModelConfig(
                K=cfg.K,
                max_disp=cfg.max_disp,
                channels=cfg.channels,
                refinement_mode=cfg.refinement_mode,
                seed=cfg.seed,
            )
        )

    if cfg.data == "synth":
        kinds = [k.strip() for k in cfg.synth_kinds.split(",")]
        dataset = synth_dataset(
            cfg.synth_count, cfg.synth_width, cfg.synth_height,
            cfg.synth_min_disp, cfg.synth_max_disp, kinds, cfg.synth_seed,
        )
    elif cfg.data == "sceneflow":
        lefts = [p.strip() for p in cfg.sceneflow_lefts.split(",") if p.strip()]
        if not lefts:
            print("error: key 'sceneflow_lefts' lists no image paths", file=sys.stderr)
            return 1
        dataset = [load_sceneflow_sample(p) for p in lefts]
    else:
        frames = [f.strip() for f in cfg.kitti_frames.split(",") if f.strip()]
        if not cfg.kitti_root or not frames:
            print("error: keys 'kitti_root' and 'kitti_frames' are required", file=sys.stderr)
            return 1
        dataset = [load_kitti_sample(cfg.kitti_root, f) for f in frames]

    tcfg = TrainConfig(
        iterations=cfg.iterations,
        lr0=cfg.lr0,
        decay_rate=cfg.decay_rate,
        decay_steps=cfg.decay_steps,
        seed=cfg.seed,
        both_sides=cfg.both_sides,
    )
    if start_step >= cfg.iterations:
        print(f"checkpoint already at step {start_step} >= iterations {cfg.iterations}; nothing to do")
        return 0
    history = train(model, dataset, tcfg, start_step=start_step, log_every=cfg.log_every)
    model.save(ckpt, step=cfg.iterations)
    write_loss_csv(history, cfg.loss_csv)
    print(f"wrote {ckpt} and {cfg.loss_csv}")
    return 0


def cmd_infer(args) -> int:
    from .dataio import normalize, read_image, write_disparity_png, write_pfm
    from .pipeline import StereoModel

    model, _ = StereoModel.load(args.checkpoint)
    left = read_image(args.left)
    right = read_image(args.right)
    if left.shape != right.shape:
        print(f"error: image dimensions differ: {left.shape} vs {right.shape}", file=sys.stderr)
        return 1
    maps = model.forward(normalize(left), normalize(right))
    final = maps[-1].values.data.astype(np.float32)
    write_pfm(args.out, final)
    if args.viz:
        write_disparity_png(args.viz, final, max_disp=float(model.config.max_disp))
    print(f"wrote {args.out}" + (f" and {args.viz}" if args.viz else ""))
    return 0


def _read_mask(path, shape):
    from PIL import Image

    from .dataio import read_pfm

    p = Path(path)
    if p.suffix.lower() == ".pfm":
        data, _ = read_pfm(p)
    else:
        with Image.open(p) as img:
            data = np.asarray(img.convert("L"))
    if data.shape[:2] != shape:
        raise ValueError(f"mask shape {data.shape[:2]} != disparity shape {shape}")
    return data != 0


def cmd_eval(args) -> int:
    from .dataio import read_pfm
    from .evaluation import evaluate, write_report_csv

    pred, _ = read_pfm(args.pred)
    gt, _ = read_pfm(args.gt)
    if pred.shape != gt.shape:
        print(f"error: dimensions differ: pred {pred.shape} vs gt {gt.shape}", file=sys.stderr)
        return 1
    mask = _read_mask(args.mask, gt.shape) if args.mask else None
    report = evaluate(pred, gt, mask)
    write_report_csv(report, args.report)
    print(f"wrote {args.report}")
    return 0


def cmd_bench(args) -> int:
    import csv as _csv

    from .dataio import SynthSpec, synth_pair
    from .evaluation import runtime_breakdown
    from .pipeline import StereoModel

    model, _ = StereoModel.load(args.checkpoint)
    try:
        w, h = (int(v) for v in args.size.lower().split("x"))
    except ValueError:
        print(f"error: --size must look like 640x480, got {args.size!r}", file=sys.stderr)
        return 1
    d0 = min(4.0, w / 8)
    sample = synth_pair(SynthSpec(width=w, height=h, seed=0, kind="constant", d0=d0))
    timings = runtime_breakdown(model, sample, repetitions=args.reps)
    writer = _csv.writer(sys.stdout)
    writer.writerow(["stage", "median_ms", "percent"])
    for (name, ms), (_, pct) in zip(timings.stages(), timings.percentages()):
        writer.writerow([name, f"{ms:.3f}", f"{pct:.2f}"])
    writer.writerow(["total", f"{timings.total_ms:.3f}", "100.00"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stereokit",
        description="Coarse-to-fine stereo disparity: train, infer, evaluate, benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a key=value config file")
    p_train.add_argument("--config", required=True, help="path to the run configuration")
    p_train.set_defaults(fn=cmd_train)

    p_infer = sub.add_parser("infer", help="predict disparity for a rectified pair")
    p_infer.add_argument("--checkpoint", required=True)
    p_infer.add_argument("--left", required=True, help="left (reference) image, PNG or PPM")
    p_infer.add_argument("--right", required=True)
    p_infer.add_argument("--out", required=True, help="output disparity PFM")
    p_infer.add_argument("--viz", default=None, help="optional color-mapped PNG")
    p_infer.set_defaults(fn=cmd_infer)

    p_eval = sub.add_parser("eval", help="score a predicted disparity map")
    p_eval.add_argument("--pred", required=True, help="predicted disparity PFM")
    p_eval.add_argument("--gt", required=True, help="ground-truth disparity PFM")
    p_eval.add_argument("--mask", default=None, help="optional validity mask (PNG or PFM, nonzero=valid)")
    p_eval.add_argument("--report", required=True, help="output metrics CSV")
    p_eval.set_defaults(fn=cmd_eval)

    p_bench = sub.add_parser("bench", help="per-stage runtime breakdown (CSV on stdout)")
    p_bench.add_argument("--checkpoint", required=True)
    p_bench.add_argument("--size", required=True, help="input size as WxH, e.g. 640x480")
    p_bench.add_argument("--reps", type=int, default=10)
    p_bench.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # surfaced as exit code + message, not a traceback
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
