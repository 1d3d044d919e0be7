"""Dataset ingestion, PFM/image I/O, normalization, and synthetic pairs.

Synthetic pairs carry exact continuous ground truth: the right view is
rendered by bilinearly sampling the left texture along the epipolar line,
so subpixel matching error can be measured against a noise-free target.

Fixture directory conventions handled by the loaders:

  Scene Flow style:   <root>/frames_finalpass/.../left/NNNN.png
                      <root>/frames_finalpass/.../right/NNNN.png
                      <root>/disparity/.../left/NNNN.pfm   (and right/)
  KITTI 2015 style:   <root>/image_2/FFFFFF_10.png (left)
                      <root>/image_3/FFFFFF_10.png (right)
                      <root>/disp_occ_0/FFFFFF_10.png (uint16, disparity*256, 0=invalid)
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .costvolume import DisparityMap
from .tensor import Tensor


@dataclass
class StereoSample:
    """Rectified color pair with left-reference ground truth."""

    left: Tensor            # (H, W, 3) raw values in [0, 255]
    right: Tensor           # (H, W, 3)
    gt_left: DisparityMap
    valid_mask: np.ndarray  # bool (H, W), True where gt_left is usable
    gt_right: Optional[DisparityMap] = None
    valid_mask_right: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.left.shape != self.right.shape:
            raise ValueError(f"left/right shape mismatch: {self.left.shape} vs {self.right.shape}")


# ---------------------------------------------------------------------------
# PFM


def read_pfm(path) -> tuple[np.ndarray, float]:
    """Read a PFM file; returns (array, scale).

    1-channel "Pf" gives (H, W); 3-channel "PF" gives (H, W, 3). Rows are
    stored bottom-to-top in the file and returned top-down. A negative
    scale marks little-endian payloads.
    """
    with open(path, "rb") as f:
        header = f.readline().rstrip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise ValueError(f"{path}: not a PFM file (header {header!r})")
        dims = f.readline().decode("ascii", errors="replace")
        m = re.match(r"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise ValueError(f"{path}: malformed dimensions line {dims!r}")
        width, height = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().decode("ascii", errors="replace").strip())
        if scale == 0:
            raise ValueError(f"{path}: zero scale")
        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height * channels
        payload = f.read(4 * count)
        if len(payload) != 4 * count:
            raise ValueError(f"{path}: truncated payload ({len(payload)} of {4 * count} bytes)")
    data = np.frombuffer(payload, dtype=dtype)
    if channels == 1:
        data = data.reshape(height, width)
    else:
        data = data.reshape(height, width, 3)
    return np.ascontiguousarray(data[::-1]).astype(np.float32), scale


def write_pfm(path, data: np.ndarray, scale: float = -1.0) -> None:
    """Write a (H, W) or (H, W, 3) float32 array as PFM (little-endian)."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        header = b"Pf"
        h, w = arr.shape
    elif arr.ndim == 3 and arr.shape[2] == 3:
        header = b"PF"
        h, w = arr.shape[:2]
    else:
        raise ValueError(f"unsupported PFM shape {arr.shape}")
    if scale >= 0:
        raise ValueError("only little-endian output (negative scale) is supported")
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(f"{scale}\n".encode("ascii"))
        f.write(np.ascontiguousarray(arr[::-1]).astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# images


def read_image(path) -> Tensor:
    """Read an 8-bit RGB PNG or PPM image as a (H, W, 3) float tensor in [0, 255]."""
    with Image.open(path) as img:
        if img.mode != "RGB":
            raise ValueError(f"{path}: expected 8-bit RGB, got mode {img.mode!r}")
        data = np.asarray(img, dtype=np.float32)
    return Tensor(data)


def write_image(path, data) -> None:
    """Write a (H, W, 3) array of [0, 255] values as 8-bit RGB."""
    arr = np.clip(np.asarray(data), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


# Perceptual ramp for disparity rendering: piecewise-linear interpolation
# through these (dark blue -> green -> yellow) anchor colors, evenly spaced
# over [0, 1] after normalization by max_disp.
_RAMP = np.array(
    [
        (68, 1, 84),
        (71, 44, 122),
        (59, 81, 139),
        (44, 113, 142),
        (33, 144, 141),
        (39, 173, 129),
        (92, 200, 99),
        (170, 220, 50),
        (253, 231, 37),
    ],
    dtype=np.float64,
)


def disparity_to_color(values: np.ndarray, max_disp: float) -> np.ndarray:
    """Map disparities in [0, max_disp] through the ramp; NaN/invalid -> black."""
    if max_disp <= 0:
        raise ValueError("max_disp must be positive")
    vals = np.asarray(values, dtype=np.float64)
    bad = ~np.isfinite(vals)
    t = np.clip(np.where(bad, 0.0, vals) / max_disp, 0.0, 1.0) * (len(_RAMP) - 1)
    i0 = np.minimum(t.astype(np.int64), len(_RAMP) - 2)
    f = (t - i0)[..., None]
    rgb = _RAMP[i0] * (1.0 - f) + _RAMP[i0 + 1] * f
    rgb[bad] = 0.0
    return rgb


def write_disparity_png(path, dmap, max_disp: float, color_map: str = "ramp") -> None:
    """Render a disparity map to an 8-bit PNG.

    color_map 'ramp' uses the documented perceptual ramp; 'gray' maps
    [0, max_disp] to [0, 255] luminance. Invalid (NaN) pixels are black.
    """
    values = dmap.values.data if isinstance(dmap, DisparityMap) else np.asarray(dmap)
    if color_map == "ramp":
        rgb = disparity_to_color(values, max_disp)
    elif color_map == "gray":
        vals = np.asarray(values, dtype=np.float64)
        bad = ~np.isfinite(vals)
        g = np.clip(np.where(bad, 0.0, vals) / max_disp, 0.0, 1.0) * 255.0
        g[bad] = 0.0
        rgb = np.repeat(g[..., None], 3, axis=-1)
    else:
        raise ValueError(f"unknown color_map {color_map!r}")
    write_image(path, rgb + 0.5)  # round to nearest


def normalize(image):
    """Map [0, 255] intensities to [-1, 1] (x/127.5 - 1). Apply exactly once."""
    if isinstance(image, Tensor):
        return Tensor(image.data / np.asarray(127.5, image.dtype) - np.asarray(1.0, image.dtype))
    arr = np.asarray(image)
    return arr / np.asarray(127.5, arr.dtype) - np.asarray(1.0, arr.dtype)


# ---------------------------------------------------------------------------
# synthetic pairs


@dataclass
class SynthSpec:
    """Recipe for one synthetic rectified pair with exact ground truth.

    kind 'constant' uses d0 everywhere; 'ramp' varies linearly from d0 at
    the left edge to d1 at the right edge; 'blocks' places fronto-parallel
    boxes (x0, x1, y0, y1, disparity) over a background at d0.
    """

    width: int
    height: int
    seed: int
    kind: str = "constant"
    d0: float = 5.0
    d1: Optional[float] = None
    blocks: list = field(default_factory=list)
    texture_sigma: float = 1.2
    noise_std: float = 0.0  # additive sensor noise (intensity levels), per view

    def max_disparity(self) -> float:
        if self.kind == "constant":
            return self.d0
        if self.kind == "ramp":
            return max(self.d0, self.d1)
        return max([self.d0] + [b[4] for b in self.blocks])

    def validate(self) -> None:
        if self.kind not in ("constant", "ramp", "blocks"):
            raise ValueError(f"unknown disparity field kind {self.kind!r}")
        if self.kind == "ramp" and self.d1 is None:
            raise ValueError("ramp field needs d1")
        if self.kind == "blocks" and any(b[4] < self.d0 for b in self.blocks):
            raise ValueError("block disparities must be >= the background (opaque background)")
        md = self.max_disparity()
        if min(self.d0, md) < 0 or (self.kind == "ramp" and self.d1 < 0):
            raise ValueError("disparity must be non-negative")
        if md >= self.width / 4:
            raise ValueError(f"max disparity {md} violates the < width/4 bound ({self.width / 4})")


def _band_limited_texture(rng, height, width, sigma) -> np.ndarray:
    """Blurred white noise rescaled to span [0, 255] per channel."""
    noise = rng.random((height, width, 3))
    tex = np.empty_like(noise)
    for c in range(3):
        tex[:, :, c] = gaussian_filter(noise[:, :, c], sigma, mode="reflect")
        lo, hi = tex[:, :, c].min(), tex[:, :, c].max()
        tex[:, :, c] = (tex[:, :, c] - lo) / max(hi - lo, 1e-12) * 255.0
    return tex.astype(np.float32)


def _sample_rows(canvas: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Bilinear gather along the column axis; x is (H, W) of source columns."""
    xc = np.clip(x, 0.0, canvas.shape[1] - 1)
    i0 = np.floor(xc).astype(np.int64)
    i1 = np.minimum(i0 + 1, canvas.shape[1] - 1)
    f = (xc - i0)[..., None].astype(canvas.dtype)
    rows = np.arange(canvas.shape[0])[:, None]
    return canvas[rows, i0] * (1.0 - f) + canvas[rows, i1] * f


def synth_pair(spec: SynthSpec) -> StereoSample:
    """Render a stereo pair whose right view resamples the left texture.

    The texture canvas extends past the right edge by the maximum disparity
    so every right-view pixel has a source; the left-view validity mask
    marks exactly the columns whose match x - d(x) falls off the right
    image (x - d < 0).
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    margin = int(np.ceil(spec.max_disparity())) + 2
    canvas = _band_limited_texture(rng, h, w + margin, spec.texture_sigma)
    left = canvas[:, :w].copy()

    cols = np.arange(w, dtype=np.float64)
    if spec.kind == "constant":
        gt_left = np.full((h, w), spec.d0, dtype=np.float32)
        src = np.broadcast_to(cols + spec.d0, (h, w))
        gt_right = gt_left.copy()
    elif spec.kind == "ramp":
        slope = (spec.d1 - spec.d0) / max(w - 1, 1)
        gt_left = np.broadcast_to(spec.d0 + slope * cols, (h, w)).astype(np.float32)
        # left coordinate x(u) solves x - d(x) = u for d(x) = d0 + slope*x
        x_of_u = (cols + spec.d0) / (1.0 - slope)
        src = np.broadcast_to(x_of_u, (h, w))
        gt_right = (x_of_u - cols).astype(np.float32)
        gt_right = np.broadcast_to(gt_right, (h, w)).copy()
        gt_left = gt_left.copy()
    else:  # blocks
        gt_left = np.full((h, w), spec.d0, dtype=np.float32)
        for (x0, x1, y0, y1, d) in spec.blocks:
            gt_left[y0:y1, x0:x1] = d
        # nearest surface (largest d) wins at each right pixel
        src = np.broadcast_to(cols + spec.d0, (h, w)).copy()
        gt_right = np.full((h, w), spec.d0, dtype=np.float32)
        order = np.argsort([b[4] for b in spec.blocks])
        for k in order:
            x0, x1, y0, y1, d = spec.blocks[k]
            cand = cols + d
            hit = (cand >= x0) & (cand < x1)
            src[y0:y1, hit] = cand[hit]
            gt_right[y0:y1, hit] = d

    right = _sample_rows(canvas, np.asarray(src, dtype=np.float64))
    if spec.noise_std > 0:
        left = np.clip(left + rng.normal(0, spec.noise_std, left.shape), 0, 255).astype(np.float32)
        right = np.clip(right + rng.normal(0, spec.noise_std, right.shape), 0, 255)
    valid = (cols - gt_left) >= 0.0
    valid_right = (cols + gt_right) <= (w - 1)

    return StereoSample(
        left=Tensor(left),
        right=Tensor(right.astype(np.float32)),
        gt_left=DisparityMap(Tensor(gt_left), level=0),
        valid_mask=valid,
        gt_right=DisparityMap(Tensor(gt_right), level=0),
        valid_mask_right=valid_right,
    )


def synth_dataset(
    count: int,
    width: int,
    height: int,
    min_disp: float,
    max_disp: float,
    kinds: Sequence[str] = ("constant", "ramp"),
    seed: int = 1,
) -> list[StereoSample]:
    """Deterministic batch of synthetic pairs cycling through field kinds.

    Disparity endpoints are drawn uniformly from [min_disp, max_disp]; the
    per-pair texture/geometry seed derives from ``seed`` so the whole set
    is reproducible.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        kind = kinds[i % len(kinds)]
        if kind == "constant":
            spec = SynthSpec(
                width=width, height=height, seed=int(rng.integers(2**31)),
                kind="constant", d0=float(rng.uniform(min_disp, max_disp)),
            )
        elif kind == "ramp":
            a, b = rng.uniform(min_disp, max_disp, size=2)
            spec = SynthSpec(
                width=width, height=height, seed=int(rng.integers(2**31)),
                kind="ramp", d0=float(a), d1=float(b),
            )
        elif kind == "blocks":
            d0 = float(rng.uniform(min_disp, 0.5 * max_disp))
            blocks = []
            for _ in range(int(rng.integers(1, 3))):
                x0 = int(rng.integers(0, width // 2))
                y0 = int(rng.integers(0, height // 2))
                blocks.append(
                    (
                        x0,
                        x0 + int(rng.integers(width // 8, width // 3)),
                        y0,
                        y0 + int(rng.integers(height // 8, height // 2)),
                        float(rng.uniform(d0, max_disp)),
                    )
                )
            spec = SynthSpec(
                width=width, height=height, seed=int(rng.integers(2**31)),
                kind="blocks", d0=d0, blocks=blocks,
            )
        else:
            raise ValueError(f"unknown synthetic kind {kind!r}")
        out.append(synth_pair(spec))
    return out


# ---------------------------------------------------------------------------
# dataset loaders (exercised on miniature fixtures)


def load_sceneflow_sample(left_image_path) -> StereoSample:
    """Load one Scene Flow style sample given the left image path.

    Derives the right image by swapping the 'left' path component and the
    disparity maps by swapping 'frames_finalpass' (or 'frames_cleanpass')
    for 'disparity' and '.png' for '.pfm'.
    """
    lp = Path(left_image_path)
    if "left" not in lp.parts:
        raise ValueError(f"{lp}: expected a .../left/... image path")
    rp = Path(*["right" if part == "left" else part for part in lp.parts])

    def disp_path(img_path: Path) -> Path:
        parts = [
            "disparity" if part in ("frames_finalpass", "frames_cleanpass") else part
            for part in img_path.parts
        ]
        return Path(*parts).with_suffix(".pfm")

    left = read_image(lp)
    right = read_image(rp)
    gt_left, _ = read_pfm(disp_path(lp))
    gt_right_path = disp_path(rp)
    gt_right = None
    valid_right = None
    if gt_right_path.exists():
        gr, _ = read_pfm(gt_right_path)
        gt_right = DisparityMap(Tensor(gr), level=0)
        valid_right = np.isfinite(gr)
    valid = np.isfinite(gt_left)
    return StereoSample(
        left=left,
        right=right,
        gt_left=DisparityMap(Tensor(np.nan_to_num(gt_left)), level=0),
        valid_mask=valid,
        gt_right=gt_right,
        valid_mask_right=valid_right,
    )


def load_kitti_sample(root, frame: str) -> StereoSample:
    """Load one KITTI 2015 style sample (sparse uint16 disparity / 256)."""
    root = Path(root)
    left = read_image(root / "image_2" / f"{frame}.png")
    right = read_image(root / "image_3" / f"{frame}.png")
    with Image.open(root / "disp_occ_0" / f"{frame}.png") as img:
        raw = np.asarray(img)
    if raw.dtype != np.uint16:
        raise ValueError(f"{frame}: KITTI disparity must be 16-bit PNG, got {raw.dtype}")
    disp = raw.astype(np.float32) / 256.0
    valid = raw > 0
    return StereoSample(
        left=left,
        right=right,
        gt_left=DisparityMap(Tensor(disp), level=0),
        valid_mask=valid,
    )
