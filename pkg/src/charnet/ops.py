"""Forward ops and their gradients.

Exactly the operations the two networks need, nothing else: affine maps,
1-d convolution (cross-correlation convention, zero padding), max
pooling, LSTM cells and sequences, dropout, the usual activations, and
the two cross-entropy losses.

Shape conventions: time-major per instance, [T, C]; every sequence op
also accepts a leading batch axis, [N, T, C]. Elementwise ops are
shape-agnostic. Gradients route through `charnet.tensor.record_op`.

The LSTM sequence is a single fused tape node with a hand-derived
backward pass (backpropagation through time); `lstm_cell` builds the same
arithmetic out of primitive ops, which gives an independent second route
used by the tests to cross-check the fused gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .rng import RngStream
from .tensor import Tensor, record_op

PROB_CLAMP = 1e-7


def _tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")
    return record_op("add", a.data + b.data, (a, b), lambda g: (g, g))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """x[..., C] + b[C], broadcast over leading axes."""
    x, b = _tensor(x), _tensor(b)
    if b.data.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"add_bias: {x.shape} vs {b.shape}")
    lead = tuple(range(x.data.ndim - 1))
    return record_op("add_bias", x.data + b.data, (x, b),
                     lambda g: (g, g.sum(axis=lead)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}")
    return record_op("mul", a.data * b.data, (a, b),
                     lambda g: (g * b.data, g * a.data))


def scale(x: Tensor, c: float) -> Tensor:
    x = _tensor(x)
    return record_op("scale", x.data * c, (x,), lambda g: (g * c,))


def sum_all(x: Tensor) -> Tensor:
    x = _tensor(x)
    return record_op("sum_all", x.data.sum(), (x,),
                     lambda g: (np.broadcast_to(g, x.shape).astype(x.dtype),))


def mean_all(x: Tensor) -> Tensor:
    x = _tensor(x)
    n = x.data.size
    return record_op("mean_all", x.data.mean(), (x,),
                     lambda g: ((np.broadcast_to(g, x.shape) / n).astype(x.dtype),))


# ---------------------------------------------------------------------------
# affine

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    return record_op("matmul", a.data @ b.data, (a, b),
                     lambda g: (g @ b.data.T, a.data.T @ g))


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w + b for x[N, I], w[I, O], b[O]."""
    x, w, b = _tensor(x), _tensor(w), _tensor(b)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense: {x.shape} @ {w.shape}")
    if b.data.ndim != 1 or b.shape[0] != w.shape[1]:
        raise ShapeError(f"dense bias: {b.shape} vs {w.shape}")
    return record_op("dense", x.data @ w.data + b.data, (x, w, b),
                     lambda g: (g @ w.data.T, x.data.T @ g, g.sum(axis=0)))


# ---------------------------------------------------------------------------
# activations

def relu(x: Tensor) -> Tensor:
    x = _tensor(x)
    pos = x.data > 0  # subgradient 0 at the kink
    return record_op("relu", np.where(pos, x.data, 0), (x,),
                     lambda g: (g * pos,))


def sigmoid(x: Tensor) -> Tensor:
    x = _tensor(x)
    y = _sigmoid(x.data)
    return record_op("sigmoid", y, (x,), lambda g: (g * y * (1 - y),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # exp(-z) overflowing to inf yields the correct 0 limit
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def tanh(x: Tensor) -> Tensor:
    x = _tensor(x)
    y = np.tanh(x.data)
    return record_op("tanh", y, (x,), lambda g: (g * (1 - y * y),))


def softmax(x: Tensor) -> Tensor:
    """Row softmax over the last axis, computed with max subtraction."""
    x = _tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward_fn(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return record_op("softmax", y, (x,), backward_fn)


# ---------------------------------------------------------------------------
# structure

def concat(a: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    na = a.shape[axis if axis >= 0 else a.data.ndim + axis]
    out = np.concatenate([a.data, b.data], axis=axis)

    def backward_fn(g):
        ga, gb = np.split(g, [na], axis=axis)
        return ga, gb

    return record_op("concat", out, (a, b), backward_fn)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    x = _tensor(x)
    out = x.data[..., start:stop].copy()

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        gx[..., start:stop] = g
        return (gx,)

    return record_op("slice_cols", out, (x,), backward_fn)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = _tensor(x)
    return record_op("reshape", x.data.reshape(shape), (x,),
                     lambda g: (g.reshape(x.shape),))


def reverse_time(x: Tensor) -> Tensor:
    """Reverse the time axis (second from last)."""
    x = _tensor(x)
    return record_op("reverse_time", np.flip(x.data, axis=-2).copy(), (x,),
                     lambda g: (np.flip(g, axis=-2),))


def final_state_read(y: Tensor) -> Tensor:
    """Summary vector of a direction-concatenated BiLSTM sequence
    y[..., T, 2H]: the forward half of the last step joined with the
    backward half of the first step (each direction's own final state)."""
    y = _tensor(y)
    two_h = y.shape[-1]
    if two_h % 2:
        raise ShapeError(f"final_state_read expects an even channel count, got {two_h}")
    h = two_h // 2
    out = np.concatenate([y.data[..., -1, :h], y.data[..., 0, h:]], axis=-1)

    def backward_fn(g):
        gy = np.zeros_like(y.data)
        gy[..., -1, :h] = g[..., :h]
        gy[..., 0, h:] = g[..., h:]
        return (gy,)

    return record_op("final_state_read", out, (y,), backward_fn)


# ---------------------------------------------------------------------------
# convolution and pooling

def _batched(xd: np.ndarray, rank: int):
    if xd.ndim == rank:
        return xd, False
    if xd.ndim == rank - 1:
        return xd[None], True
    raise ShapeError(f"expected rank {rank - 1} or {rank}, got shape {xd.shape}")


def conv1d(x: Tensor, kernels: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of x[(N,) T, Cin] with kernels[K, Cin, Cout];
    zero padding, T' = floor((T + 2 pad - K) / stride) + 1."""
    x, kernels = _tensor(x), _tensor(kernels)
    kd = kernels.data
    if kd.ndim != 3:
        raise ShapeError(f"kernels must be [K, Cin, Cout], got {kernels.shape}")
    k, c_in, c_out = kd.shape
    xb, squeezed = _batched(x.data, 3)
    n, t, c = xb.shape
    if c != c_in:
        raise ShapeError(f"conv1d channels: input {c}, kernels {c_in}")
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv1d: bad stride {stride} or pad {pad}")
    t_pad = t + 2 * pad
    if k > t_pad:
        raise ShapeError(f"kernel width {k} exceeds padded length {t_pad}")

    if pad:
        xp = np.zeros((n, t_pad, c), dtype=xb.dtype)
        xp[:, pad:pad + t] = xb
    else:
        xp = xb
    t_out = (t_pad - k) // stride + 1
    win = sliding_window_view(xp, k, axis=1)[:, ::stride]      # [N, T', C, K]
    patches = np.ascontiguousarray(win.transpose(0, 1, 3, 2))  # [N, T', K, C]
    flat = patches.reshape(n * t_out, k * c_in)
    w_mat = kd.reshape(k * c_in, c_out)
    y = (flat @ w_mat).reshape(n, t_out, c_out)

    def backward_fn(g):
        gb = g if not squeezed else g[None]
        g_flat = gb.reshape(n * t_out, c_out)
        dw = (flat.T @ g_flat).reshape(k, c_in, c_out)
        dpatch = (g_flat @ w_mat.T).reshape(n, t_out, k, c_in)
        dxp = np.zeros((n, t_pad, c_in), dtype=gb.dtype)
        for j in range(k):
            dxp[:, j:j + t_out * stride:stride] += dpatch[:, :, j]
        dx = dxp[:, pad:pad + t] if pad else dxp
        return (dx[0] if squeezed else dx), dw

    return record_op("conv1d", y[0] if squeezed else y, (x, kernels), backward_fn)


def maxpool1d(x: Tensor, window: int, stride: int | None = None) -> Tensor:
    """Per-channel max over sliding windows; the gradient routes to the
    first maximal element of each window."""
    x = _tensor(x)
    stride = window if stride is None else stride
    xb, squeezed = _batched(x.data, 3)
    n, t, c = xb.shape
    if window > t:
        raise ShapeError(f"pool window {window} exceeds length {t}")
    if window < 1 or stride < 1:
        raise ShapeError(f"maxpool1d: bad window {window} or stride {stride}")
    win = sliding_window_view(xb, window, axis=1)[:, ::stride]  # [N, T', C, W]
    idx = win.argmax(axis=-1)  # first index on ties
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    t_out = y.shape[1]

    def backward_fn(g):
        gb = g if not squeezed else g[None]
        dx = np.zeros_like(xb)
        tt = idx + (np.arange(t_out) * stride)[None, :, None]
        nn = np.broadcast_to(np.arange(n)[:, None, None], idx.shape)
        cc = np.broadcast_to(np.arange(c)[None, None, :], idx.shape)
        np.add.at(dx, (nn, tt, cc), gb)
        return (dx[0] if squeezed else dx,)

    return record_op("maxpool1d", y[0] if squeezed else y, (x,), backward_fn)


# ---------------------------------------------------------------------------
# dropout

def dropout(x: Tensor, rate: float, mode: str, rng: RngStream | None = None) -> Tensor:
    """Inverted dropout: in train mode each element is zeroed with
    probability rate and survivors scale by 1/(1-rate); eval is identity."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"dropout mode must be train or eval, got {mode!r}")
    x = _tensor(x)
    if mode == "eval" or rate == 0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs an rng stream")
    keep = rng.random(x.shape) >= rate
    factor = (keep / (1.0 - rate)).astype(x.dtype)
    return record_op("dropout", x.data * factor, (x,), lambda g: (g * factor,))


# ---------------------------------------------------------------------------
# LSTM

@dataclass
class LstmParams:
    """One direction's weights. Gate layout along the 4H axis is
    [input, forget, output, candidate] (the three sigmoid gates first,
    so a sequence step squashes them in one call)."""

    wx: Tensor  # [I, 4H]
    uh: Tensor  # [H, 4H]
    b: Tensor   # [4H]

    @property
    def hidden(self) -> int:
        return self.uh.shape[0]

    def tensors(self) -> tuple[Tensor, Tensor, Tensor]:
        return self.wx, self.uh, self.b


def init_lstm_params(input_dim: int, hidden: int, rng: RngStream,
                     forget_bias: float = 1.0) -> LstmParams:
    """Fan-in scaled uniform weights; forget-gate bias starts at +1."""
    sx = 1.0 / np.sqrt(input_dim)
    sh = 1.0 / np.sqrt(hidden)
    b = np.zeros(4 * hidden, dtype=np.float32)
    b[hidden:2 * hidden] = forget_bias
    return LstmParams(
        wx=Tensor(rng.uniform(-sx, sx, (input_dim, 4 * hidden)), requires_grad=True),
        uh=Tensor(rng.uniform(-sh, sh, (hidden, 4 * hidden)), requires_grad=True),
        b=Tensor(b, requires_grad=True),
    )


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, params: LstmParams
              ) -> tuple[Tensor, Tensor]:
    """One step of the standard LSTM gate equations, built from primitive
    ops (the fused sequence op is the fast path; this one exists for unit
    gradients and as its cross-check)."""
    x, h, c = _tensor(x), _tensor(h), _tensor(c)
    single = x.data.ndim == 1
    if single:
        x = reshape(x, (1, x.shape[0]))
        h = reshape(h, (1, h.shape[0]))
        c = reshape(c, (1, c.shape[0]))
    hid = params.hidden
    z = add(dense(x, params.wx, params.b), matmul(h, params.uh))
    i = sigmoid(slice_cols(z, 0, hid))
    f = sigmoid(slice_cols(z, hid, 2 * hid))
    o = sigmoid(slice_cols(z, 2 * hid, 3 * hid))
    g = tanh(slice_cols(z, 3 * hid, 4 * hid))
    c2 = add(mul(f, c), mul(i, g))
    h2 = mul(o, tanh(c2))
    if single:
        h2 = reshape(h2, (hid,))
        c2 = reshape(c2, (hid,))
    return h2, c2


def lstm_sequence(seq: Tensor, params: LstmParams) -> Tensor:
    """All hidden states of a left-to-right pass over seq[(N,) T, I],
    starting from zero states: one fused tape node with a BPTT backward."""
    seq = _tensor(seq)
    xb, squeezed = _batched(seq.data, 3)
    n, t, _ = xb.shape
    if t < 1:
        raise ShapeError("lstm_sequence needs at least one step")
    wx, uh, b = params.wx.data, params.uh.data, params.b.data
    hid = params.hidden
    dt = xb.dtype

    # input contribution for every step in one matmul
    xz = (xb.reshape(n * t, -1) @ wx + b).reshape(n, t, 4 * hid)

    hs = np.empty((n, t, hid), dtype=dt)
    gates_i = np.empty((t, n, hid), dtype=dt)
    gates_f = np.empty((t, n, hid), dtype=dt)
    gates_g = np.empty((t, n, hid), dtype=dt)
    gates_o = np.empty((t, n, hid), dtype=dt)
    c_prev = np.empty((t, n, hid), dtype=dt)
    h_prev = np.empty((t, n, hid), dtype=dt)
    tanh_c = np.empty((t, n, hid), dtype=dt)

    h = np.zeros((n, hid), dtype=dt)
    c = np.zeros((n, hid), dtype=dt)
    for step in range(t):
        z = xz[:, step] + h @ uh
        gates = _sigmoid(z[:, :3 * hid])
        i, f, o = gates[:, :hid], gates[:, hid:2 * hid], gates[:, 2 * hid:]
        g = np.tanh(z[:, 3 * hid:])
        gates_i[step], gates_f[step], gates_g[step], gates_o[step] = i, f, g, o
        c_prev[step], h_prev[step] = c, h
        c = f * c + i * g
        tc = np.tanh(c)
        tanh_c[step] = tc
        h = o * tc
        hs[:, step] = h

    def backward_fn(grad):
        gb = grad if not squeezed else grad[None]
        dz_all = np.empty((n, t, 4 * hid), dtype=dt)
        duh = np.zeros_like(uh)
        dh = np.zeros((n, hid), dtype=dt)
        dc = np.zeros((n, hid), dtype=dt)
        for step in range(t - 1, -1, -1):
            i, f = gates_i[step], gates_f[step]
            g, o = gates_g[step], gates_o[step]
            tc = tanh_c[step]
            dht = gb[:, step] + dh
            dc = dc + dht * o * (1 - tc * tc)
            dz = dz_all[:, step]
            dz[:, :hid] = dc * g * i * (1 - i)
            dz[:, hid:2 * hid] = dc * c_prev[step] * f * (1 - f)
            dz[:, 2 * hid:3 * hid] = dht * tc * o * (1 - o)
            dz[:, 3 * hid:] = dc * i * (1 - g * g)
            dh = dz @ uh.T
            duh += h_prev[step].T @ dz
            dc = dc * f
        flat = dz_all.reshape(n * t, 4 * hid)
        dx = (flat @ wx.T).reshape(xb.shape)
        dwx = xb.reshape(n * t, -1).T @ flat
        db = flat.sum(axis=0)
        return (dx[0] if squeezed else dx), dwx, duh, db

    out = hs[0] if squeezed else hs
    return record_op("lstm_sequence", out, (seq, params.wx, params.uh, params.b),
                     backward_fn)


def bilstm(seq: Tensor, params_fwd: LstmParams, params_bwd: LstmParams) -> Tensor:
    """Independent left-to-right and right-to-left passes, concatenated
    per step: [(N,) T, I] -> [(N,) T, 2H]."""
    fwd = lstm_sequence(seq, params_fwd)
    bwd = reverse_time(lstm_sequence(reverse_time(seq), params_bwd))
    return concat(fwd, bwd, axis=-1)


# ---------------------------------------------------------------------------
# losses

def _check_loss_shapes(p: np.ndarray, t: np.ndarray):
    if p.shape != t.shape:
        raise ShapeError(f"loss: probs {p.shape} vs targets {t.shape}")


def bce_loss(probs: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy over every (item, class) element, with
    probabilities clamped to [1e-7, 1 - 1e-7]."""
    probs = _tensor(probs)
    t = np.asarray(targets.data if isinstance(targets, Tensor) else targets,
                   dtype=probs.dtype)
    p = probs.data
    _check_loss_shapes(p, t)
    lo, hi = PROB_CLAMP, 1.0 - PROB_CLAMP
    pc = np.clip(p, lo, hi)
    val = -(t * np.log(pc) + (1 - t) * np.log(1 - pc)).mean()

    def backward_fn(g):
        inside = (p > lo) & (p < hi)  # clamp has zero gradient outside
        dp = g * inside * (pc - t) / (pc * (1 - pc)) / p.size
        return (dp.astype(p.dtype),)

    return record_op("bce_loss", np.asarray(val, dtype=p.dtype), (probs,), backward_fn)


def cce_loss(probs: Tensor, targets) -> Tensor:
    """Categorical cross-entropy -sum(t * log p) averaged over rows."""
    probs = _tensor(probs)
    t = np.asarray(targets.data if isinstance(targets, Tensor) else targets,
                   dtype=probs.dtype)
    p = probs.data
    _check_loss_shapes(p, t)
    rows = p.shape[0] if p.ndim == 2 else 1
    lo, hi = PROB_CLAMP, 1.0 - PROB_CLAMP
    pc = np.clip(p, lo, hi)
    val = -(t * np.log(pc)).sum() / rows

    def backward_fn(g):
        inside = (p > lo) & (p < hi)
        dp = -g * inside * t / pc / rows
        return (dp.astype(p.dtype),)

    return record_op("cce_loss", np.asarray(val, dtype=p.dtype), (probs,), backward_fn)
