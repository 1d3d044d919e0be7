"""Dense tensor type with reverse-mode automatic differentiation.

Layout is row-major (C order) with the channel axis last. Float32 is the
working precision; float64 is supported for gradient checking. Every op
validates that its output is finite and raises instead of propagating
NaN/Inf silently.

Gradients are recorded on a :class:`Tape`. Ops executed while a tape is
active append a pull-back closure; ``tape.backward(loss)`` replays the
closures in exact reverse order, accumulating gradients additively into
every tensor that owns a grad slot (notably :class:`Param` values).
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_DTYPE = np.float32

_SUPPORTED_DTYPES = (np.float32, np.float64)


class Tensor:
    """Dense multi-dimensional array of float32 or float64 values."""

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _SUPPORTED_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(()))

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


class Param:
    """Learnable tensor with a persistent, additively-accumulated grad slot."""

    __slots__ = ("name", "value")

    def __init__(self, name: str, value):
        self.name = name
        self.value = value if isinstance(value, Tensor) else Tensor(value)
        self.value.grad = np.zeros_like(self.value.data)

    @property
    def data(self) -> np.ndarray:
        return self.value.data

    @property
    def grad(self) -> np.ndarray:
        return self.value.grad

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def zero_grad(self) -> None:
        self.value.grad[...] = 0.0

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.shape})"


_ACTIVE_TAPE: Optional["Tape"] = None


class Tape:
    """Ordered record of executed ops for one reverse-mode sweep.

    Use as a context manager; ops run inside the ``with`` block are
    recorded. ``backward`` may be called more than once: parameter grads
    keep accumulating while intermediate grads are reset per call.

    Pull-back closures receive the tape as their first argument instead of
    capturing it, so a released tape (and the buffers its records hold) is
    reclaimed by reference counting alone.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, Callable[["Tape", np.ndarray], None]]] = []
        self._outputs: set[int] = set()

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a Tape is already active; nesting is not supported")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, pull: Callable[["Tape", np.ndarray], None]) -> None:
        self._records.append((out, pull))
        self._outputs.add(id(out))

    def wants(self, t: Tensor) -> bool:
        """True if a gradient for ``t`` would be kept (param or tape output)."""
        return t.grad is not None or id(t) in self._outputs

    def accumulate(self, t: Tensor, g: np.ndarray) -> None:
        """Add a gradient contribution to ``t`` if it participates in this tape."""
        if t.grad is not None:
            t.grad += g
        elif id(t) in self._outputs:
            t.grad = np.array(g)  # own the buffer; g may alias a view

    def backward(self, loss: Tensor) -> None:
        if not self._records:
            raise ValueError("tape is empty")
        if loss.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.shape}")
        if id(loss) not in self._outputs:
            raise ValueError("loss is not an output recorded on this tape")
        # Intermediate grads are transient per sweep; param grads persist.
        for out, _ in self._records:
            out.grad = None
        loss.grad = np.ones_like(loss.data)
        for out, pull in reversed(self._records):
            if out.grad is not None:
                pull(self, out.grad)


def backward(tape: Tape, loss: Tensor) -> None:
    """Replay ``tape`` in reverse, writing d(loss)/d(param) into param grads."""
    tape.backward(loss)


def _tape() -> Optional[Tape]:
    return _ACTIVE_TAPE


def _ensure_finite(arr: np.ndarray, op: str) -> None:
    # One fused summation pass; NaN/Inf anywhere poisons the float64 total.
    if not math.isfinite(float(arr.sum(dtype=np.float64))):
        raise FloatingPointError(f"{op}: non-finite values in output")


def _check_dtypes(op: str, *tensors: Tensor) -> None:
    dt = tensors[0].dtype
    for t in tensors[1:]:
        if t.dtype != dt:
            raise ValueError(f"{op}: mixed dtypes {dt} and {t.dtype}")


# ---------------------------------------------------------------------------
# convolution


def _same_geometry(n: int, k: int, stride: int, dilation: int) -> tuple[int, int, int]:
    """Output extent and begin/end zero padding for 'same' semantics.

    Output extent is ceil(n / stride); padding splits the required total
    with the smaller half first (begin side).
    """
    eff = (k - 1) * dilation + 1
    out = -(-n // stride)
    total = max((out - 1) * stride + eff - n, 0)
    lo = total // 2
    return out, lo, total - lo


def _zero_pad(x: np.ndarray, ph: tuple[int, int], pw: tuple[int, int]) -> np.ndarray:
    if ph == (0, 0) and pw == (0, 0):
        return x
    h, w, c = x.shape
    out = np.zeros((h + ph[0] + ph[1], w + pw[0] + pw[1], c), dtype=x.dtype)
    out[ph[0] : ph[0] + h, pw[0] : pw[0] + w] = x
    return out


def _corr2d(xpad: np.ndarray, w: np.ndarray, stride: int, dilation: int):
    """Valid cross-correlation of a pre-padded (H,W,Cin) input.

    Returns the (H',W',Cout) result and the im2col matrix for reuse in the
    weight gradient.
    """
    kh, kw, cin, cout = w.shape
    ekh = (kh - 1) * dilation + 1
    ekw = (kw - 1) * dilation + 1
    hp, wp, _ = xpad.shape
    oh = (hp - ekh) // stride + 1
    ow = (wp - ekw) // stride + 1
    win = sliding_window_view(xpad, (ekh, ekw, cin), axis=(0, 1, 2))
    win = win[::stride, ::stride, 0, ::dilation, ::dilation, :]
    cols = np.ascontiguousarray(win).reshape(oh * ow, kh * kw * cin)
    y = cols @ w.reshape(kh * kw * cin, cout)
    return y.reshape(oh, ow, cout), cols


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Tensor,
    stride: int = 1,
    dilation: int = 1,
) -> Tensor:
    """2-D cross-correlation with 'same' zero padding.

    x: (H, W, Cin); w: (kh, kw, Cin, Cout) with odd kh, kw; b: (Cout,).
    Output spatial extents are ceil(H/stride) x ceil(W/stride).
    """
    if x.ndim != 3 or w.ndim != 4:
        raise ValueError(f"conv2d: expected (H,W,Cin) and (kh,kw,Cin,Cout), got {x.shape}, {w.shape}")
    kh, kw, cin, cout = w.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d: kernel extents must be odd, got {kh}x{kw}")
    if x.shape[2] != cin:
        raise ValueError(f"conv2d: input has {x.shape[2]} channels, weight expects {cin}")
    if b.shape != (cout,):
        raise ValueError(f"conv2d: bias shape {b.shape} != ({cout},)")
    if stride < 1 or dilation < 1:
        raise ValueError("conv2d: stride and dilation must be >= 1")
    _check_dtypes("conv2d", x, w, b)

    h, wdt, _ = x.shape
    oh, pt, pb = _same_geometry(h, kh, stride, dilation)
    ow, pl, pr = _same_geometry(wdt, kw, stride, dilation)
    xpad = _zero_pad(x.data, (pt, pb), (pl, pr))
    y, cols = _corr2d(xpad, w.data, stride, dilation)
    y += b.data
    out = Tensor(y)
    _ensure_finite(out.data, "conv2d")

    tape = _tape()
    if tape is not None:

        def pull(tp: Tape, g: np.ndarray) -> None:
            gm = g.reshape(-1, cout)
            if tp.wants(w):
                tp.accumulate(w, (cols.T @ gm).reshape(w.shape))
            if tp.wants(b):
                tp.accumulate(b, gm.sum(axis=0))
            if tp.wants(x):
                tp.accumulate(x, _conv2d_input_grad(g, w.data, x.shape, (pt, pb, pl, pr), stride, dilation))

        tape.record(out, pull)
    return out


def _conv2d_input_grad(g, w, xshape, pads, stride, dilation):
    """Adjoint of the padded strided correlation (a transposed convolution)."""
    kh, kw, cin, cout = w.shape
    ekh = (kh - 1) * dilation + 1
    ekw = (kw - 1) * dilation + 1
    pt, pb, pl, pr = pads
    h, wdt, _ = xshape
    oh, ow, _ = g.shape
    if stride > 1:
        up = np.zeros((((oh - 1) * stride + 1), ((ow - 1) * stride + 1), cout), dtype=g.dtype)
        up[::stride, ::stride] = g
    else:
        up = g
    upad = _zero_pad(up, (ekh - 1, ekh - 1), (ekw - 1, ekw - 1))
    wflip = w[::-1, ::-1].transpose(0, 1, 3, 2).copy()
    span, _ = _corr2d(upad, wflip, 1, dilation)
    # span covers rows/cols [0, (oh-1)*stride + ekh) of the padded input;
    # the padded input may extend further when 'same' needed no padding.
    gx = np.zeros((h + pt + pb, wdt + pl + pr, cin), dtype=g.dtype)
    gx[: span.shape[0], : span.shape[1]] = span
    return gx[pt : pt + h, pl : pl + wdt]


def _corr3d(xpad: np.ndarray, w: np.ndarray):
    """Valid cross-correlation of a pre-padded (H,W,D,Cin) volume, stride 1."""
    kh, kw, kd, cin, cout = w.shape
    hp, wp, dp, _ = xpad.shape
    oh, ow, od = hp - kh + 1, wp - kw + 1, dp - kd + 1
    win = sliding_window_view(xpad, (kh, kw, kd, cin), axis=(0, 1, 2, 3))
    cols = np.ascontiguousarray(win[:, :, :, 0]).reshape(oh * ow * od, kh * kw * kd * cin)
    y = cols @ w.reshape(-1, cout)
    return y.reshape(oh, ow, od, cout), cols


def conv3d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1) -> Tensor:
    """3-D cross-correlation over the joint spatial+disparity domain.

    x: (H, W, D, Cin); w: (kh, kw, kd, Cin, Cout) with odd extents; 'same'
    zero padding in all three dims. Only stride 1 is supported here.
    """
    if x.ndim != 4 or w.ndim != 5:
        raise ValueError(f"conv3d: expected (H,W,D,Cin) and 5-D weight, got {x.shape}, {w.shape}")
    kh, kw, kd, cin, cout = w.shape
    if kh % 2 == 0 or kw % 2 == 0 or kd % 2 == 0:
        raise ValueError(f"conv3d: kernel extents must be odd, got {kh}x{kw}x{kd}")
    if x.shape[3] != cin:
        raise ValueError(f"conv3d: input has {x.shape[3]} channels, weight expects {cin}")
    if b.shape != (cout,):
        raise ValueError(f"conv3d: bias shape {b.shape} != ({cout},)")
    if stride != 1:
        raise ValueError("conv3d: only stride 1 is supported")
    _check_dtypes("conv3d", x, w, b)

    ph, pw, pd = kh // 2, kw // 2, kd // 2
    xpad = np.pad(x.data, ((ph, ph), (pw, pw), (pd, pd), (0, 0)))
    y, cols = _corr3d(xpad, w.data)
    y += b.data
    out = Tensor(y)
    _ensure_finite(out.data, "conv3d")

    tape = _tape()
    if tape is not None:

        def pull(tp: Tape, g: np.ndarray) -> None:
            gm = g.reshape(-1, cout)
            if tp.wants(w):
                tp.accumulate(w, (cols.T @ gm).reshape(w.shape))
            if tp.wants(b):
                tp.accumulate(b, gm.sum(axis=0))
            if tp.wants(x):
                gpad = np.pad(g, ((kh - 1 - ph,) * 2, (kw - 1 - pw,) * 2, (kd - 1 - pd,) * 2, (0, 0)))
                wflip = w.data[::-1, ::-1, ::-1].transpose(0, 1, 2, 4, 3).copy()
                gx, _ = _corr3d(gpad, wflip)
                tp.accumulate(x, gx)

        tape.record(out, pull)
    return out


# ---------------------------------------------------------------------------
# normalization / activations


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-3) -> Tensor:
    """Normalize over every non-channel element of the single input.

    Statistics come from this call's input (the pipeline runs one sample at
    a time); gamma and beta are per-channel (last axis).
    """
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"batch_norm: gamma/beta must have shape ({c},), got {gamma.shape}, {beta.shape}")
    _check_dtypes("batch_norm", x, gamma, beta)
    axes = tuple(range(x.ndim - 1))
    flat = x.data.reshape(-1, c)
    mu = flat.mean(axis=0)
    xc = x.data - mu
    var = np.einsum("ij,ij->j", xc.reshape(-1, c), xc.reshape(-1, c)) / flat.shape[0]
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = xc * inv
    out = Tensor(gamma.data * xhat + beta.data)
    _ensure_finite(out.data, "batch_norm")

    tape = _tape()
    if tape is not None:

        def pull(tp: Tape, g: np.ndarray) -> None:
            if tp.wants(beta):
                tp.accumulate(beta, g.sum(axis=axes))
            if tp.wants(gamma):
                tp.accumulate(gamma, (g * xhat).sum(axis=axes))
            if tp.wants(x):
                gh = g * gamma.data
                m1 = gh.mean(axis=axes)
                m2 = (gh * xhat).mean(axis=axes)
                tp.accumulate(x, inv * (gh - m1 - xhat * m2))

        tape.record(out, pull)
    return out


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    """x if x >= 0 else alpha * x, elementwise. alpha in [0, 1)."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"leaky_relu: alpha must be in [0,1), got {alpha}")
    a = np.asarray(alpha, dtype=x.dtype)
    # max(x, alpha*x) equals the leaky form exactly for alpha in [0,1)
    out = Tensor(np.maximum(x.data, x.data * a))
    _ensure_finite(out.data, "leaky_relu")
    tape = _tape()
    if tape is not None:

        def pull(tp: Tape, g: np.ndarray) -> None:
            tp.accumulate(x, np.where(x.data >= 0, g, g * a))

        tape.record(out, pull)
    return out


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def softmax(x: Tensor, axis: int) -> Tensor:
    """Softmax along ``axis``, computed with max subtraction for stability."""
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)
    _ensure_finite(out.data, "softmax")
    tape = _tape()
    if tape is not None:

        def pull(tp: Tape, g: np.ndarray) -> None:
            dot = (g * y).sum(axis=axis, keepdims=True)
            tp.accumulate(x, y * (g - dot))

        tape.record(out, pull)
    return out


# ---------------------------------------------------------------------------
# resampling


@lru_cache(maxsize=64)
def _interp_matrix(n_in: int, n_out: int, dtype_name: str) -> np.ndarray:
    """Row-stochastic 1-D bilinear interpolation matrix (n_out x n_in).

    Source coordinate convention: src = (dst + 0.5) * (n_in / n_out) - 0.5,
    clamped to [0, n_in - 1].
    """
    dtype = np.dtype(dtype_name)
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = src - i0
    m = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - f)
    np.add.at(m, (rows, i1), f)
    return m.astype(dtype)


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize of an (H,W,C) or (H,W) tensor to (out_h, out_w).

    Differentiable with respect to the input; resizing to the input size is
    the exact identity.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError("bilinear_resize: output extents must be >= 1")
    if x.ndim not in (2, 3):
        raise ValueError(f"bilinear_resize: expected (H,W) or (H,W,C), got {x.shape}")
    h, w = x.shape[:2]
    if (out_h, out_w) == (h, w):
        out = Tensor(x.data.copy())
        tape = _tape()
        if tape is not None:
            tape.record(out, lambda tp, g: tp.accumulate(x, g))
        return out

    squeeze = x.ndim == 2
    data = x.data[:, :, None] if squeeze else x.data
    ry = _interp_matrix(h, out_h, x.dtype.name)
    rx = _interp_matrix(w, out_w, x.dtype.name)
    tmp = np.tensordot(ry, data, axes=(1, 0))            # (out_h, W, C)
    y = np.moveaxis(np.tensordot(tmp, rx, axes=(1, 1)), 2, 1)  # (out_h, out_w, C)
    y = np.ascontiguousarray(y)
    out = Tensor(y[:, :, 0] if squeeze else y)
    _ensure_finite(out.data, "bilinear_resize")

    tape = _tape()
    if tape is not None:

        def pull(tp: Tape, g: np.ndarray) -> None:
            if not tp.wants(x):
                return
            gg = g[:, :, None] if squeeze else g
            t = np.tensordot(ry.T, gg, axes=(1, 0))
            gx = np.ascontiguousarray(np.moveaxis(np.tensordot(t, rx, axes=(1, 0)), 2, 1))
            tp.accumulate(x, gx[:, :, 0] if squeeze else gx)

        tape.record(out, pull)
    return out


# ---------------------------------------------------------------------------
# elementwise / shape / reductions


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _binary(op: str, a: Tensor, b: Tensor, fwd, da, db) -> Tensor:
    _check_dtypes(op, a, b)
    out = Tensor(fwd(a.data, b.data))
    _ensure_finite(out.data, op)
    tape = _tape()
    if tape is not None:

        def pull(tp: Tape, g: np.ndarray) -> None:
            if tp.wants(a):
                tp.accumulate(a, _unbroadcast(da(g), a.shape))
            if tp.wants(b):
                tp.accumulate(b, _unbroadcast(db(g), b.shape))

        tape.record(out, pull)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    return _binary("add", a, b, np.add, lambda g: g, lambda g: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _binary("sub", a, b, np.subtract, lambda g: g, lambda g: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _binary("mul", a, b, np.multiply, lambda g: g * b.data, lambda g: g * a.data)


def scale(x: Tensor, s: float) -> Tensor:
    sv = np.asarray(s, dtype=x.dtype)
    out = Tensor(x.data * sv)
    _ensure_finite(out.data, "scale")
    tape = _tape()
    if tape is not None:
        tape.record(out, lambda tp, g: tp.accumulate(x, g * sv))
    return out


def add_const(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data + np.asarray(c, dtype=x.dtype))
    _ensure_finite(out.data, "add_const")
    tape = _tape()
    if tape is not None:
        tape.record(out, lambda tp, g: tp.accumulate(x, g))
    return out


def neg(x: Tensor) -> Tensor:
    return scale(x, -1.0)


def square(x: Tensor) -> Tensor:
    out = Tensor(x.data * x.data)
    _ensure_finite(out.data, "square")
    tape = _tape()
    if tape is not None:
        tape.record(out, lambda tp, g: tp.accumulate(x, 2.0 * x.data * g))
    return out


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)
    out = Tensor(y)
    _ensure_finite(out.data, "sqrt")
    tape = _tape()
    if tape is not None:
        tape.record(out, lambda tp, g: tp.accumulate(x, g / (2.0 * y)))
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    tape = _tape()
    if tape is not None:
        tape.record(out, lambda tp, g: tp.accumulate(x, g.reshape(x.shape)))
    return out


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    _check_dtypes("concat", *parts)
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    _ensure_finite(out.data, "concat")
    tape = _tape()
    if tape is not None:
        splits = np.cumsum([p.shape[axis] for p in parts])[:-1]

        def pull(tp: Tape, g: np.ndarray) -> None:
            for p, gp in zip(parts, np.split(g, splits, axis=axis)):
                if tp.wants(p):
                    tp.accumulate(p, gp)

        tape.record(out, pull)
    return out


def sum_axis(x: Tensor, axis: int) -> Tensor:
    out = Tensor(x.data.sum(axis=axis))
    _ensure_finite(out.data, "sum_axis")
    tape = _tape()
    if tape is not None:

        def pull(tp: Tape, g: np.ndarray) -> None:
            tp.accumulate(x, np.broadcast_to(np.expand_dims(g, axis), x.shape))

        tape.record(out, pull)
    return out


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.sum(), dtype=x.dtype))
    _ensure_finite(out.data.reshape(1), "sum_all")
    tape = _tape()
    if tape is not None:
        tape.record(out, lambda tp, g: tp.accumulate(x, np.broadcast_to(g, x.shape)))
    return out


def mean_all(x: Tensor) -> Tensor:
    return scale(sum_all(x), 1.0 / x.size)


# ---------------------------------------------------------------------------
# gradient oracle


def finite_diff_check(
    fn: Callable[[Tensor], Tensor],
    point: Tensor,
    h: float = 1e-4,
    max_coords: Optional[int] = None,
    seed: int = 0,
    zero_floor: float = 1e-8,
) -> float:
    """Max relative error between backward() and central finite differences.

    ``fn`` maps a tensor to a scalar Tensor. The analytic gradient comes
    from one taped evaluation at ``point``; the numeric one perturbs each
    checked coordinate by +-h (all coordinates, or ``max_coords`` sampled
    ones). Coordinates where both gradients are below ``zero_floor`` count
    as exact agreement.
    """
    probe = Tensor(point.data.copy())
    probe.grad = np.zeros_like(probe.data)
    with Tape() as tape:
        loss = fn(probe)
    tape.backward(loss)
    analytic = probe.grad.reshape(-1).copy()

    n = point.size
    if max_coords is not None and max_coords < n:
        idx = np.random.default_rng(seed).choice(n, size=max_coords, replace=False)
    else:
        idx = np.arange(n)

    flat = point.data.reshape(-1)
    worst = 0.0
    for i in idx:
        orig = flat[i]
        pert = Tensor(point.data.copy())
        pflat = pert.data.reshape(-1)
        pflat[i] = orig + h
        fp = fn(pert).item()
        pflat[i] = orig - h
        fm = fn(pert).item()
        numeric = (fp - fm) / (2.0 * h)
        a = float(analytic[i])
        denom = max(abs(a), abs(numeric))
        if denom < zero_floor:
            continue
        worst = max(worst, abs(a - numeric) / denom)
    return worst
