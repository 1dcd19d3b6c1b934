"""Small dense reverse-mode autodiff engine on top of numpy.

Only the operations the tagger needs are provided.  Every operation returns a
new :class:`Tensor`; when gradient recording is enabled and any input requires
a gradient, the result remembers its parents and a closure that maps the
output gradient to the gradients of the parents.
"""

from __future__ import annotations

import contextlib
import json
import struct
from typing import Callable, Iterable, Sequence

import numpy as np

RNG_ALGORITHM = "numpy.random.PCG64"

_state = {"dtype": np.dtype(np.float32), "grad": True}

Rng = np.random.Generator


def make_rng(seed: int) -> Rng:
    """Seeded PCG64 generator; the stream is identical across platforms."""
    return np.random.Generator(np.random.PCG64(seed))


def default_dtype() -> np.dtype:
    return _state["dtype"]


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the dtype used for new tensors (e.g. float64 for
    gradient checks)."""
    old = _state["dtype"]
    _state["dtype"] = np.dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = old


@contextlib.contextmanager
def no_grad():
    old = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = old


def grad_enabled() -> bool:
    return _state["grad"]


class Tensor:
    """Dense array node of a computation graph."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False, dtype=None):
        self.values = np.ascontiguousarray(values, dtype=dtype or default_dtype())
        if self.values.ndim == 0:
            self.values = self.values.reshape(())
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def numpy(self) -> np.ndarray:
        return self.values

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        backward(self)

    __add__ = lambda self, other: add(self, other)  # noqa: E731
    __radd__ = __add__
    __sub__ = lambda self, other: sub(self, other)  # noqa: E731
    __mul__ = lambda self, other: mul(self, other)  # noqa: E731
    __rmul__ = __mul__
    __neg__ = lambda self: scale(self, -1.0)  # noqa: E731
    __matmul__ = lambda self, other: matmul(self, other)  # noqa: E731

    def __getitem__(self, index):
        return index_select(self, index)

    def sum(self) -> Tensor:
        return total(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(values, parents: Iterable[Tensor], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.values = values
    out.grad = None
    parents = tuple(parents)
    if _state["grad"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# ----------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.values + b.values, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _result(a.values - b.values, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return _result(a.values * b.values, (a, b), bw)


def scale(a: Tensor, factor: float) -> Tensor:
    return _result(a.values * factor, (a,), lambda g: (g * factor,))


def mask_mul(a: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply by a constant array (dropout masks)."""
    return _result(a.values * mask, (a,), lambda g: (_unbroadcast(g * mask, a.shape),))


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.values)
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.values)
    return _result(t, (a,), lambda g: (g * (1.0 - t * t),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def total(a: Tensor) -> Tensor:
    return _result(a.values.sum(), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


# ------------------------------------------------------------------ structure


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of ``[p, q]`` and ``[q, r]``."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    def bw(g):
        return g @ b.values.T, a.values.T @ g

    return _result(a.values @ b.values, (a, b), bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` stored as ``[out, in]``."""
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(f"linear shape mismatch: input {x.shape}, weight {weight.shape}")
    out = x.values @ weight.values.T
    if bias is not None:
        out = out + bias.values
        parents = (x, weight, bias)
    else:
        parents = (x, weight)

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.values.reshape(-1, x.shape[-1])
        grads = [(g @ weight.values), g2.T @ x2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return _result(out, parents, bw)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    arrays = [t.values for t in tensors]
    axis = axis % arrays[0].ndim
    bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]

    def bw(g):
        return np.split(g, bounds, axis=axis)

    return _result(np.concatenate(arrays, axis=axis), tensors, bw)


def stack(tensors: Sequence[Tensor]) -> Tensor:
    def bw(g):
        return [g[i] for i in range(len(tensors))]

    return _result(np.stack([t.values for t in tensors]), tensors, bw)


def reshape(a: Tensor, shape) -> Tensor:
    return _result(a.values.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def index_select(a: Tensor, index) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.values)
        np.add.at(full, index, g)
        return (full,)

    return _result(a.values[index], (a,), bw)


def take_rows(table: Tensor, ids) -> Tensor:
    """Gather rows of a 2-D table; negative ids yield zero rows (padding)."""
    ids = np.asarray(ids, dtype=np.int64)
    pad = ids < 0
    safe = np.where(pad, 0, ids)
    out = table.values[safe]
    if pad.any():
        out[pad] = 0.0

    def bw(g):
        full = np.zeros_like(table.values)
        if pad.any():
            g = g.copy()
            g[pad] = 0.0
        np.add.at(full, safe, g)
        return (full,)

    return _result(out, (table,), bw)


# --------------------------------------------------------------- probability


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max subtraction."""
    z = x.values - x.values.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _result(s, (x,), bw)


def log_softmax(x: Tensor) -> Tensor:
    z = x.values - x.values.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    s = np.exp(out)

    def bw(g):
        return (g - s * g.sum(axis=-1, keepdims=True),)

    return _result(out, (x,), bw)


def cross_entropy(logits: Tensor, gold, weights=None) -> Tensor:
    """Summed ``-log softmax(logits)[gold]``.

    ``logits`` is ``[k]`` with an integer ``gold`` or ``[n, k]`` with ``n`` gold
    indices.  Optional per-row ``weights`` scale each term (0 masks a row).
    """
    single = logits.ndim == 1
    vals = logits.values.reshape(1, -1) if single else logits.values
    gold = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    k = vals.shape[1]
    if gold.shape[0] != vals.shape[0]:
        raise ValueError(f"{gold.shape[0]} gold indices for {vals.shape[0]} rows")
    if (gold < 0).any() or (gold >= k).any():
        raise IndexError(f"gold index out of range for {k} classes: {gold}")
    z = vals - vals.max(axis=1, keepdims=True)
    e = np.exp(z)
    denom = e.sum(axis=1, keepdims=True)
    rows = np.arange(vals.shape[0])
    nll = np.log(denom[:, 0]) - z[rows, gold]
    w = None if weights is None else np.asarray(weights, dtype=vals.dtype)
    loss = (nll if w is None else nll * w).sum()

    def bw(g):
        d = e / denom
        d[rows, gold] -= 1.0
        if w is not None:
            d *= w[:, None]
        d *= g
        return (d.reshape(logits.shape),)

    return _result(np.asarray(loss, dtype=vals.dtype), (logits,), bw)


# ---------------------------------------------------------------------- LSTM


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Fused LSTM step on batched inputs; returns ``[h, c]`` packed on the last
    axis.  Gate order in ``weight`` rows: input, forget, candidate, output."""
    dh = h_prev.shape[-1]
    if weight.shape != (4 * dh, x.shape[-1] + dh) or bias.shape != (4 * dh,):
        raise ValueError(
            f"lstm shape mismatch: x {x.shape}, h {h_prev.shape}, "
            f"weight {weight.shape}, bias {bias.shape}"
        )
    if c_prev.shape != h_prev.shape:
        raise ValueError(f"lstm state mismatch: h {h_prev.shape}, c {c_prev.shape}")
    xh = np.concatenate([x.values, h_prev.values], axis=-1)
    z = xh @ weight.values.T + bias.values
    i = _sigmoid(z[:, :dh])
    f = _sigmoid(z[:, dh : 2 * dh])
    cand = np.tanh(z[:, 2 * dh : 3 * dh])
    o = _sigmoid(z[:, 3 * dh :])
    c = f * c_prev.values + i * cand
    tc = np.tanh(c)
    h = o * tc

    def bw(g):
        gh, gc = g[:, :dh], g[:, dh:]
        dc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                dc * cand * i * (1.0 - i),
                dc * c_prev.values * f * (1.0 - f),
                dc * i * (1.0 - cand * cand),
                gh * tc * o * (1.0 - o),
            ],
            axis=-1,
        )
        dxh = dz @ weight.values
        din = x.shape[-1]
        return dxh[:, :din], dxh[:, din:], dc * f, dz.T @ xh, dz.sum(axis=0)

    return _result(np.concatenate([h, c], axis=-1), (x, h_prev, c_prev, weight, bias), bw)


def lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor, weight: Tensor, bias: Tensor):
    """One LSTM step.  Accepts unbatched ``[d]`` or batched ``[b, d]`` inputs and
    returns ``(h, c)`` with the same rank as ``x``."""
    flat = x.ndim == 1
    if flat:
        x, h_prev, c_prev = (reshape(t, (1, -1)) for t in (x, h_prev, c_prev))
    dh = h_prev.shape[-1]
    packed = lstm_cell(x, h_prev, c_prev, weight, bias)
    h, c = packed[:, :dh], packed[:, dh:]
    if flat:
        h, c = reshape(h, (dh,)), reshape(c, (dh,))
    return h, c


def lstm_sequence(x: Tensor, weight: Tensor, bias: Tensor, state_mask: np.ndarray | None = None,
                  h0: Tensor | None = None, c0: Tensor | None = None) -> Tensor:
    """Run an LSTM over time-major input ``[T, B, d_in]``; returns ``[T, B, d_h]``.

    Equivalent to chaining :func:`lstm_step`, with the input projection done
    in one matrix product and backpropagation through time in one node.
    ``state_mask`` (``[B, d_h]``) multiplies the previous hidden state at every
    step (variational recurrent dropout).  Sequences shorter than ``T`` must be
    left-aligned; outputs past their end are garbage to be ignored.
    """
    T, B, din = x.shape
    dh = weight.shape[0] // 4
    if weight.shape != (4 * dh, din + dh) or bias.shape != (4 * dh,):
        raise ValueError(f"lstm shape mismatch: x {x.shape}, weight {weight.shape}, bias {bias.shape}")
    W = weight.values
    Wx, Wh = W[:, :din], W[:, din:]
    dtype = x.values.dtype
    proj = (x.values.reshape(T * B, din) @ Wx.T + bias.values).reshape(T, B, 4 * dh)
    h = np.zeros((B, dh), dtype) if h0 is None else h0.values
    c = np.zeros((B, dh), dtype) if c0 is None else c0.values
    c_init = c
    hs = np.empty((T, B, dh), dtype)
    h_in = np.empty((T, B, dh), dtype)
    gates = np.empty((T, B, 4 * dh), dtype)
    cs = np.empty((T, B, dh), dtype)
    for t in range(T):
        hp = h if state_mask is None else h * state_mask
        h_in[t] = hp
        z = proj[t] + hp @ Wh.T
        z[:, :dh] = _sigmoid(z[:, :dh])
        z[:, dh : 2 * dh] = _sigmoid(z[:, dh : 2 * dh])
        z[:, 2 * dh : 3 * dh] = np.tanh(z[:, 2 * dh : 3 * dh])
        z[:, 3 * dh :] = _sigmoid(z[:, 3 * dh :])
        gates[t] = z
        c = z[:, dh : 2 * dh] * c + z[:, :dh] * z[:, 2 * dh : 3 * dh]
        cs[t] = c
        h = z[:, 3 * dh :] * np.tanh(c)
        hs[t] = h

    def bw(g):
        dproj = np.empty((T, B, 4 * dh), dtype)
        dWh = np.zeros_like(Wh)
        dh_next = np.zeros((B, dh), dtype)
        dc_next = np.zeros((B, dh), dtype)
        for t in range(T - 1, -1, -1):
            z = gates[t]
            i, f, cand, o = z[:, :dh], z[:, dh : 2 * dh], z[:, 2 * dh : 3 * dh], z[:, 3 * dh :]
            tc = np.tanh(cs[t])
            c_prev = cs[t - 1] if t > 0 else c_init
            gh = g[t] + dh_next
            dc = dc_next + gh * o * (1.0 - tc * tc)
            dz = dproj[t]
            dz[:, :dh] = dc * cand * i * (1.0 - i)
            dz[:, dh : 2 * dh] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * dh : 3 * dh] = dc * i * (1.0 - cand * cand)
            dz[:, 3 * dh :] = gh * tc * o * (1.0 - o)
            dWh += dz.T @ h_in[t]
            dhp = dz @ Wh
            dh_next = dhp if state_mask is None else dhp * state_mask
            dc_next = dc * f
        flat = dproj.reshape(T * B, 4 * dh)
        dx = (flat @ Wx).reshape(T, B, din)
        dWx = flat.T @ x.values.reshape(T * B, din)
        grads = [dx, np.concatenate([dWx, dWh], axis=1), flat.sum(axis=0)]
        if h0 is not None:
            grads.append(dh_next)
        if c0 is not None:
            grads.append(dc_next)
        return grads

    parents = [x, weight, bias]
    if h0 is not None:
        parents.append(h0)
    if c0 is not None:
        parents.append(c0)
    return _result(hs, parents, bw)


def lstm_params(d_in: int, d_h: int, rng: Rng, forget_bias: float = 1.0):
    """Xavier-initialised LSTM weight ``[4*d_h, d_in + d_h]`` and bias."""
    weight = xavier_uniform((4 * d_h, d_in + d_h), rng)
    b = np.zeros(4 * d_h)
    b[d_h : 2 * d_h] = forget_bias
    return weight, Tensor(b, requires_grad=True)


# ----------------------------------------------------------- init & dropout


def xavier_uniform(shape, rng: Rng) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if not shape:
        raise ValueError("xavier_uniform needs at least one dimension")
    fan_in = shape[-1]
    fan_out = shape[-2] if len(shape) > 1 else 1
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    values = rng.uniform(-bound, bound, size=shape)
    return Tensor(values, requires_grad=True)


def dropout_mask(shape, rate: float, rng: Rng) -> np.ndarray:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = rng.random(shape) >= rate
    return keep.astype(default_dtype()) / (1.0 - rate)


def dropout(x: Tensor, rate: float, training: bool, rng: Rng | None = None) -> Tensor:
    """Inverted dropout; identity at inference or with rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    return mask_mul(x, dropout_mask(x.shape, rate, rng).astype(x.values.dtype))


# ------------------------------------------------------------- optimisation


def global_grad_norm(params: Iterable[Tensor]) -> float:
    sq = 0.0
    for p in params:
        if p.grad is not None:
            sq += float(np.sum(np.square(p.grad, dtype=np.float64)))
    return float(np.sqrt(sq))


def clip_grad_norm(params: Sequence[Tensor], max_norm: float | None) -> float:
    norm = global_grad_norm(params)
    if max_norm and norm > max_norm:
        factor = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= factor
    return norm


def sgd_step(params: Iterable[Tensor], lr: float) -> None:
    for p in params:
        if p.grad is not None:
            p.values -= (lr * p.grad).astype(p.values.dtype)
            p.grad = None


# ------------------------------------------------------ named tensor container

MAGIC = b"MTAGTNSR"
CONTAINER_VERSION = 1


class ContainerError(ValueError):
    pass


def save_tensors(path, tensors: dict[str, np.ndarray], metadata: dict | None = None) -> None:
    """Write arrays to the named-tensor container (layout in README)."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        data = np.ascontiguousarray(le).tobytes()
        entries.append(
            {"name": name, "dtype": arr.dtype.name, "shape": list(arr.shape),
             "offset": offset, "nbytes": len(data)}
        )
        blobs.append(data)
        offset += len(data)
    header = json.dumps(
        {"tensors": entries, "metadata": metadata or {}}, ensure_ascii=False, sort_keys=True
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", CONTAINER_VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 12 or raw[: len(MAGIC)] != MAGIC:
        raise ContainerError(f"{path}: not a tensor container")
    version, header_len = struct.unpack_from("<IQ", raw, len(MAGIC))
    if version != CONTAINER_VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    start = len(MAGIC) + 12
    if start + header_len > len(raw):
        raise ContainerError(f"{path}: truncated header")
    try:
        header = json.loads(raw[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: corrupt header") from exc
    base = start + header_len
    arrays = {}
    for entry in header["tensors"]:
        lo = base + entry["offset"]
        hi = lo + entry["nbytes"]
        if hi > len(raw):
            raise ContainerError(f"{path}: truncated data for tensor {entry['name']!r}")
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        try:
            arr = np.frombuffer(raw[lo:hi], dtype=dtype).reshape(entry["shape"])
        except ValueError as exc:
            raise ContainerError(f"{path}: tensor {entry['name']!r} does not match its shape") from exc
        arrays[entry["name"]] = arr.astype(dtype.newbyteorder("="))
    return arrays, header["metadata"]
