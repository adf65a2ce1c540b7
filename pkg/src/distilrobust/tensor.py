"""Minimal reverse-mode autodiff over float64 numpy buffers.

Nodes record their parents and a vector-Jacobian closure when any input
requires gradients; `backward` walks the graph once per call and adds the
resulting adjoints into `.grad`, so repeated calls accumulate. Every op
allocates fresh output buffers and never mutates its inputs.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ParameterError, ShapeError

COSINE_EPS = 1e-8

_GELU_C1 = math.sqrt(2.0 / math.pi)
_GELU_C2 = 0.044715


class Tensor:
    """Value buffer plus optional gradient and graph-edge record."""

    __slots__ = ("values", "requires_grad", "grad", "parents", "op", "_vjp")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.op: str | None = None
        self._vjp = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.values.shape}")
        return float(self.values.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.values)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = self.op or ("param" if self.requires_grad else "const")
        return f"Tensor(shape={self.values.shape}, op={tag})"

    # convenience arithmetic, same-shape or scalar operands
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise ParameterError("tensor division only supports scalar divisors")
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(values) -> Tensor:
    return Tensor(values, requires_grad=True)


def _node(values: np.ndarray, parents: tuple[Tensor, ...], op: str, vjp) -> Tensor:
    out = Tensor(values)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out.op = op
        out._vjp = vjp
    return out


def backward(loss: Tensor):
    """Populate/accumulate `.grad` on every requires_grad tensor reachable from loss.

    Adjoints are tracked per call, so calling twice without zeroing doubles
    the leaf gradients rather than compounding stale intermediate state.
    """
    if loss.values.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.values.shape}")
    if not loss.requires_grad:
        return

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    adjoint: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for node in reversed(topo):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            if node.grad is None:
                node.grad = np.zeros_like(node.values)
            node.grad = node.grad + g
        if node._vjp is None:
            continue
        for p, contrib in zip(node.parents, node._vjp(g)):
            if contrib is None or not p.requires_grad:
                continue
            prev = adjoint.get(id(p))
            adjoint[id(p)] = contrib if prev is None else prev + contrib


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.values.shape != b.values.shape:
        raise ShapeError(f"{op}: shape {a.values.shape} vs {b.values.shape}")


# ---------------------------------------------------------------------------
# elementwise and reduction ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    a_scalar, b_scalar = a.values.size == 1, b.values.size == 1
    if not (a_scalar or b_scalar):
        _check_same_shape(a, b, "add")
    out = a.values + b.values

    def vjp(g):
        ga = g if g.shape == a.values.shape else np.sum(g).reshape(a.values.shape)
        gb = g if g.shape == b.values.shape else np.sum(g).reshape(b.values.shape)
        return ga, gb

    return _node(out, (a, b), "add", vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "mul")

    def vjp(g):
        return g * b.values, g * a.values

    return _node(a.values * b.values, (a, b), "mul", vjp)


def scale(a, alpha: float) -> Tensor:
    a = as_tensor(a)
    alpha = float(alpha)
    return _node(a.values * alpha, (a,), "scale", lambda g: (g * alpha,))


def scale_add(alpha: float, a, beta: float = 0.0, b=None) -> Tensor:
    """alpha*a + beta*b; beta of exactly 0 still routes (zero) adjoints to b."""
    a = as_tensor(a)
    if b is None:
        return scale(a, alpha)
    b = as_tensor(b)
    a_scalar, b_scalar = a.values.size == 1, b.values.size == 1
    if not (a_scalar or b_scalar):
        _check_same_shape(a, b, "scale_add")
    alpha, beta = float(alpha), float(beta)
    out = alpha * a.values + beta * b.values

    def vjp(g):
        ga = alpha * g
        gb = beta * g
        if ga.shape != a.values.shape:
            ga = np.sum(ga).reshape(a.values.shape)
        if gb.shape != b.values.shape:
            gb = np.sum(gb).reshape(b.values.shape)
        return ga, gb

    return _node(out, (a, b), "scale_add", vjp)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # stable in both tails
    s = np.where(x.values >= 0,
                 1.0 / (1.0 + np.exp(-np.abs(x.values))),
                 np.exp(-np.abs(x.values)) / (1.0 + np.exp(-np.abs(x.values))))
    return _node(s, (x,), "sigmoid", lambda g: (g * s * (1.0 - s),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.values)
    return _node(t, (x,), "tanh", lambda g: (g * (1.0 - t * t),))


def gelu(x) -> Tensor:
    """GELU via the tanh approximation 0.5*x*(1 + tanh(c1*(x + c2*x^3)))."""
    x = as_tensor(x)
    v = x.values
    inner = _GELU_C1 * (v + _GELU_C2 * v**3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def vjp(g):
        d_inner = _GELU_C1 * (1.0 + 3.0 * _GELU_C2 * v * v)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * d_inner),)

    return _node(out, (x,), "gelu", vjp)


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.values <= 0):
        raise NumericError("log requires strictly positive input")
    return _node(np.log(x.values), (x,), "log", lambda g: (g / x.values,))


def mean(x) -> Tensor:
    x = as_tensor(x)
    n = x.values.size

    def vjp(g):
        return (np.full_like(x.values, float(g) / n),)

    return _node(np.asarray(np.mean(x.values)), (x,), "mean", vjp)


def sum_all(x) -> Tensor:
    x = as_tensor(x)

    def vjp(g):
        return (np.full_like(x.values, float(g)),)

    return _node(np.asarray(np.sum(x.values)), (x,), "sum", vjp)


def l1_distance(a, b) -> Tensor:
    """Sum of |a - b| over the last axis: (T, D) -> (T,), (N,) -> scalar."""
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "l1_distance")
    if a.values.ndim not in (1, 2):
        raise ShapeError(f"l1_distance supports 1-D/2-D, got {a.values.ndim}-D")
    diff = a.values - b.values
    sgn = np.sign(diff)

    def vjp(g):
        ga = g[:, None] * sgn if diff.ndim == 2 else g * sgn
        return ga, -ga

    return _node(np.sum(np.abs(diff), axis=-1), (a, b), "l1_distance", vjp)


def cosine_sim_rows(a, b, eps: float = COSINE_EPS) -> Tensor:
    """Per-row cosine similarity of two (T, D) matrices with a guarded denominator."""
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "cosine_sim_rows")
    if a.values.ndim != 2:
        raise ShapeError(f"cosine_sim_rows needs (T, D) inputs, got {a.values.shape}")
    av, bv = a.values, b.values
    dot = np.sum(av * bv, axis=1)
    norm_prod = np.linalg.norm(av, axis=1) * np.linalg.norm(bv, axis=1)
    guarded = norm_prod <= eps
    denom = np.where(guarded, eps, norm_prod)
    cos = dot / denom

    def vjp(g):
        # unguarded rows: d cos/da = b/(|a||b|) - cos * a/|a|^2; guarded rows see
        # a constant denominator, so the derivative is just the other operand / eps
        sq_a = np.sum(av * av, axis=1)
        sq_b = np.sum(bv * bv, axis=1)
        safe_a = np.where(sq_a == 0, 1.0, sq_a)
        safe_b = np.where(sq_b == 0, 1.0, sq_b)
        da_open = bv / denom[:, None] - (cos / safe_a)[:, None] * av
        db_open = av / denom[:, None] - (cos / safe_b)[:, None] * bv
        da = np.where(guarded[:, None], bv / eps, da_open)
        db = np.where(guarded[:, None], av / eps, db_open)
        return g[:, None] * da, g[:, None] * db

    return _node(cos, (a, b), "cosine_sim_rows", vjp)


# ---------------------------------------------------------------------------
# shape plumbing


def narrow(x, axis: int, start: int, length: int) -> Tensor:
    x = as_tensor(x)
    if axis not in (0, 1) or x.values.ndim <= axis:
        raise ShapeError(f"narrow: axis {axis} on shape {x.values.shape}")
    if start < 0 or start + length > x.values.shape[axis]:
        raise ShapeError(f"narrow: [{start}, {start + length}) outside axis of size "
                         f"{x.values.shape[axis]}")
    sl = (slice(start, start + length),) if axis == 0 else (slice(None), slice(start, start + length))
    out = x.values[sl].copy()

    def vjp(g):
        full = np.zeros_like(x.values)
        full[sl] = g
        return (full,)

    return _node(out, (x,), "narrow", vjp)


def concat(parts, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat of zero tensors")
    ndim = parts[0].values.ndim
    if axis >= ndim or any(p.values.ndim != ndim for p in parts):
        raise ShapeError("concat operands must share rank and contain the axis; got "
                         f"shapes {[p.values.shape for p in parts]} axis {axis}")
    out = np.concatenate([p.values for p in parts], axis=axis)
    sizes = [p.values.shape[axis] for p in parts]

    def vjp(g):
        grads, pos = [], 0
        for size in sizes:
            sl = (slice(pos, pos + size),) if axis == 0 else (slice(None), slice(pos, pos + size))
            grads.append(g[sl])
            pos += size
        return tuple(grads)

    return _node(out, tuple(parts), "concat", vjp)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.values.reshape(shape).copy()
    return _node(out, (x,), "reshape", lambda g: (g.reshape(x.values.shape),))


# ---------------------------------------------------------------------------
# linear algebra / convolution


def linear(x, w, b=None) -> Tensor:
    """x @ w (+ b). x may be (T, C) or (C,); w is (C, O), b is (O,)."""
    x, w = as_tensor(x), as_tensor(w)
    if w.values.ndim != 2:
        raise ShapeError(f"linear: weight must be 2-D, got {w.values.shape}")
    if x.values.ndim not in (1, 2) or x.values.shape[-1] != w.values.shape[0]:
        raise ShapeError(f"linear: input {x.values.shape} vs weight {w.values.shape}")
    out = x.values @ w.values
    parents: tuple[Tensor, ...]
    if b is not None:
        b = as_tensor(b)
        if b.values.shape != (w.values.shape[1],):
            raise ShapeError(f"linear: bias {b.values.shape} vs weight {w.values.shape}")
        out = out + b.values
        parents = (x, w, b)
    else:
        parents = (x, w)

    def vjp(g):
        gx = g @ w.values.T
        if x.values.ndim == 2:
            gw = x.values.T @ g
        else:
            gw = np.outer(x.values, g)
        if b is not None:
            gb = g.sum(axis=0) if g.ndim == 2 else g
            return gx, gw, gb
        return gx, gw

    return _node(out, parents, "linear", vjp)


def _conv_checks(x: Tensor, k: Tensor, stride: int, op: str):
    if stride < 1:
        raise ParameterError(f"{op}: stride must be >= 1, got {stride}")
    if x.values.ndim != 2 or k.values.ndim != 3:
        raise ShapeError(f"{op}: need x (T, Cin) and kernel (kw, Cin, Cout), got "
                         f"{x.values.shape} and {k.values.shape}")
    if x.values.shape[1] != k.values.shape[1]:
        raise ShapeError(f"{op}: channel mismatch {x.values.shape[1]} vs {k.values.shape[1]}")


def conv1d(x, k, stride: int = 1) -> Tensor:
    """Valid cross-correlation along time: (N, Cin) * (kw, Cin, Cout) -> (T, Cout)."""
    x, k = as_tensor(x), as_tensor(k)
    _conv_checks(x, k, stride, "conv1d")
    n, kw = x.values.shape[0], k.values.shape[0]
    if n < kw:
        raise ShapeError(f"conv1d: input of {n} samples shorter than kernel {kw}")
    t_out = (n - kw) // stride + 1
    span = stride * (t_out - 1) + 1
    out = np.zeros((t_out, k.values.shape[2]))
    for j in range(kw):
        out += x.values[j : j + span : stride, :] @ k.values[j]

    def vjp(g):
        gx = np.zeros_like(x.values)
        gk = np.zeros_like(k.values)
        for j in range(kw):
            rows = x.values[j : j + span : stride, :]
            gx[j : j + span : stride, :] += g @ k.values[j].T
            gk[j] = rows.T @ g
        return gx, gk

    return _node(out, (x, k), "conv1d", vjp)


def conv1d_transposed(x, k, stride: int = 1) -> Tensor:
    """Transposed conv along time: (T, Cin) * (kw, Cin, Cout) -> ((T-1)*stride + kw, Cout)."""
    x, k = as_tensor(x), as_tensor(k)
    _conv_checks(x, k, stride, "conv1d_transposed")
    t_in, kw = x.values.shape[0], k.values.shape[0]
    n_out = (t_in - 1) * stride + kw
    span = stride * (t_in - 1) + 1
    out = np.zeros((n_out, k.values.shape[2]))
    for j in range(kw):
        out[j : j + span : stride, :] += x.values @ k.values[j]

    def vjp(g):
        gx = np.zeros_like(x.values)
        gk = np.zeros_like(k.values)
        for j in range(kw):
            g_rows = g[j : j + span : stride, :]
            gx += g_rows @ k.values[j].T
            gk[j] = x.values.T @ g_rows
        return gx, gk

    return _node(out, (x, k), "conv1d_transposed", vjp)


# ---------------------------------------------------------------------------
# recurrent cells


@dataclass
class RecurrentParams:
    """One direction of a recurrent layer: input map, state map, bias.

    LSTM gates are packed (input, forget, cell, output) along the last axis of
    4H columns; the gated fallback packs (update, reset, candidate) in 3H.
    """

    w_x: Tensor
    w_h: Tensor
    bias: Tensor


@dataclass
class BiRecurrentParams:
    forward: RecurrentParams
    backward: RecurrentParams
    hidden: int
    cell: str = "lstm"  # "lstm" | "gru"


def _lstm_direction(x: Tensor, p: RecurrentParams, hidden: int, reverse: bool) -> list[Tensor]:
    t_steps = x.values.shape[0]
    h = Tensor(np.zeros((1, hidden)))
    c = Tensor(np.zeros((1, hidden)))
    order = range(t_steps - 1, -1, -1) if reverse else range(t_steps)
    outputs: list[Tensor | None] = [None] * t_steps
    for t in order:
        x_t = narrow(x, 0, t, 1)
        z = add(add(linear(x_t, p.w_x), linear(h, p.w_h)), reshape(p.bias, (1, -1)))
        i_g = sigmoid(narrow(z, 1, 0, hidden))
        f_g = sigmoid(narrow(z, 1, hidden, hidden))
        c_g = tanh(narrow(z, 1, 2 * hidden, hidden))
        o_g = sigmoid(narrow(z, 1, 3 * hidden, hidden))
        c = add(mul(f_g, c), mul(i_g, c_g))
        h = mul(o_g, tanh(c))
        outputs[t] = h
    return outputs  # type: ignore[return-value]


def _gru_direction(x: Tensor, p: RecurrentParams, hidden: int, reverse: bool) -> list[Tensor]:
    t_steps = x.values.shape[0]
    h = Tensor(np.zeros((1, hidden)))
    order = range(t_steps - 1, -1, -1) if reverse else range(t_steps)
    outputs: list[Tensor | None] = [None] * t_steps
    ones = Tensor(np.ones((1, hidden)))
    for t in order:
        x_t = narrow(x, 0, t, 1)
        zx = linear(x_t, p.w_x)
        zh = linear(h, p.w_h)
        bias_row = reshape(p.bias, (1, -1))
        u_g = sigmoid(add(add(narrow(zx, 1, 0, hidden), narrow(zh, 1, 0, hidden)),
                          narrow(bias_row, 1, 0, hidden)))
        r_g = sigmoid(add(add(narrow(zx, 1, hidden, hidden), narrow(zh, 1, hidden, hidden)),
                          narrow(bias_row, 1, hidden, hidden)))
        cand = tanh(add(add(narrow(zx, 1, 2 * hidden, hidden),
                            mul(r_g, narrow(zh, 1, 2 * hidden, hidden))),
                        narrow(bias_row, 1, 2 * hidden, hidden)))
        h = add(mul(sub_from(ones, u_g), h), mul(u_g, cand))
        outputs[t] = h
    return outputs  # type: ignore[return-value]


def sub_from(a, b) -> Tensor:
    """a - b as a graph op."""
    return add(a, scale(b, -1.0))


def bidir_recurrent(x, params: BiRecurrentParams) -> Tensor:
    """Bidirectional recurrence over (T, C) rows -> (T, 2*hidden)."""
    x = as_tensor(x)
    if x.values.ndim != 2:
        raise ShapeError(f"bidir_recurrent needs (T, C), got {x.values.shape}")
    if params.cell == "lstm":
        step = _lstm_direction
    elif params.cell == "gru":
        step = _gru_direction
    else:
        raise ParameterError(f"unknown recurrent cell {params.cell!r}")
    fwd = step(x, params.forward, params.hidden, reverse=False)
    bwd = step(x, params.backward, params.hidden, reverse=True)
    rows = [concat([f, b], axis=1) for f, b in zip(fwd, bwd)]
    return concat(rows, axis=0)


# ---------------------------------------------------------------------------
# short-time Fourier magnitude


def stft_mag(x, window: np.ndarray, hop: int, fft_size: int) -> Tensor:
    """Magnitude STFT of a 1-D signal: (frames, fft_size//2 + 1).

    Frames start at multiples of hop, are windowed, zero-padded to fft_size,
    and transformed; only whole frames are taken.
    """
    x = as_tensor(x)
    window = np.asarray(window, dtype=np.float64)
    if x.values.ndim != 1:
        raise ShapeError(f"stft_mag needs a 1-D signal, got {x.values.shape}")
    win_len = window.size
    if hop < 1:
        raise ParameterError(f"stft_mag: hop must be >= 1, got {hop}")
    if fft_size < win_len:
        raise ParameterError(f"stft_mag: fft_size {fft_size} < window length {win_len}")
    n = x.values.size
    if n < win_len:
        raise ShapeError(f"stft_mag: signal of {n} samples shorter than window {win_len}")
    n_frames = 1 + (n - win_len) // hop
    idx = np.arange(win_len)[None, :] + hop * np.arange(n_frames)[:, None]
    segments = x.values[idx] * window
    spectrum = np.fft.rfft(segments, n=fft_size, axis=1)
    mag = np.abs(spectrum)

    def vjp(g):
        # d|z|/dz direction, guarded against exactly-zero bins
        ratio = spectrum / np.maximum(mag, 1e-300)
        full = np.zeros((n_frames, fft_size), dtype=np.complex128)
        full[:, : mag.shape[1]] = g * ratio
        d_seg = fft_size * np.fft.ifft(full, axis=1).real[:, :win_len] * window
        gx = np.zeros_like(x.values)
        for f in range(n_frames):
            gx[f * hop : f * hop + win_len] += d_seg[f]
        return (gx,)

    return _node(mag, (x,), "stft_mag", vjp)


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradcheckReport:
    """Analytic-vs-numeric comparison for one closure."""

    per_input: list[float]
    tolerance: float
    failures: list[str] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max(self.per_input) if self.per_input else 0.0

    @property
    def passed(self) -> bool:
        return not self.failures and self.max_rel_error < self.tolerance


def _projected(fn, inputs, coeffs: np.ndarray | None) -> tuple[Tensor, np.ndarray | None]:
    out = fn(*inputs)
    if out.values.size == 1:
        return out, None
    if coeffs is None:
        coeffs = np.random.default_rng(0xC0FFEE).standard_normal(out.values.shape)
    return sum_all(mul(out, Tensor(coeffs))), coeffs


def gradcheck(fn, inputs, h: float = 1e-5, tolerance: float = 1e-4) -> GradcheckReport:
    """Compare backward() gradients against central finite differences.

    Non-scalar closures are reduced with a fixed random projection so the
    whole Jacobian is exercised. Relative error per input is
    max|analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    inputs = [as_tensor(x) for x in inputs]
    for t in inputs:
        t.requires_grad = True
        t.grad = None

    loss, coeffs = _projected(fn, inputs, None)
    backward(loss)
    analytic = [np.zeros_like(t.values) if t.grad is None else t.grad.copy() for t in inputs]

    def eval_scalar() -> float:
        out, _ = _projected(fn, inputs, coeffs)
        return out.item()

    report = GradcheckReport(per_input=[], tolerance=tolerance)
    for t, ana in zip(inputs, analytic):
        num = np.zeros_like(t.values)
        flat = t.values.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = eval_scalar()
            flat[i] = orig - h
            f_minus = eval_scalar()
            flat[i] = orig
            num.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * h)
        scale_ = max(1.0, float(np.max(np.abs(ana))), float(np.max(np.abs(num))))
        err = float(np.max(np.abs(ana - num))) / scale_
        report.per_input.append(err)
        if not np.isfinite(err):
            report.failures.append("non-finite gradient")
    return report


# ---------------------------------------------------------------------------
# binary tensor files: magic "DRTN", u8 version, u8 rank, u64 dims, f64 row-major

DRTN_MAGIC = b"DRTN"
DRTN_VERSION = 1


def tensor_to_bytes(values: np.ndarray) -> bytes:
    # np.ascontiguousarray silently promotes 0-d arrays to 1-d, so keep rank 0 by hand
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim and not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr)
    header = DRTN_MAGIC + struct.pack("<BB", DRTN_VERSION, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    return header + dims + arr.astype("<f8").tobytes()


def tensor_from_bytes(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    from .errors import DataError

    if buf[offset : offset + 4] != DRTN_MAGIC:
        raise DataError("not a DRTN tensor record")
    version, rank = struct.unpack_from("<BB", buf, offset + 4)
    if version != DRTN_VERSION:
        raise DataError(f"unsupported DRTN version {version}")
    pos = offset + 6
    dims = struct.unpack_from(f"<{rank}Q", buf, pos) if rank else ()
    pos += 8 * rank
    count = int(np.prod(dims)) if rank else 1
    end = pos + 8 * count
    if end > len(buf):
        raise DataError("DRTN record truncated")
    values = np.frombuffer(buf[pos:end], dtype="<f8").reshape(dims).astype(np.float64)
    return values, end


def write_tensor_file(path, values: np.ndarray):
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(values))


def read_tensor_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    values, _ = tensor_from_bytes(buf)
    return values
