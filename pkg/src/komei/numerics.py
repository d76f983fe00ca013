"""Dense 2-D tensors with reverse-mode gradients, AdamW, and a gradient checker.

Everything is float64. Each differentiable operation records a backward
closure on the output node; ``backward`` replays the recorded closures in
reverse topological order from a scalar loss.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, EmptyEvidenceError


class Tensor2:
    """A rows x cols float64 matrix, optionally tracked by the autodiff tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"Tensor2 needs 0/1/2-D data, got {arr.ndim}-D")
        if not np.all(np.isfinite(arr)):
            raise ValueError("Tensor2 rejects NaN/Inf values at construction")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise DimensionError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def __repr__(self):
        return f"Tensor2(shape={self.data.shape}, requires_grad={self.requires_grad})"


def const(data) -> Tensor2:
    """A tensor outside the tape (no gradient ever flows into it)."""
    return Tensor2(data, requires_grad=False)


_GRAD_ENABLED = [True]


class no_grad:
    """Context manager suppressing tape recording (pure evaluation)."""

    def __enter__(self):
        self._prev = _GRAD_ENABLED[0]
        _GRAD_ENABLED[0] = False

    def __exit__(self, *exc):
        _GRAD_ENABLED[0] = self._prev


def _make(data: np.ndarray, parents, backward_fn) -> Tensor2:
    """Internal node constructor; keeps the tape only where gradients flow."""
    # one reduction instead of a full isfinite scan; any NaN/Inf poisons the sum
    if not math.isfinite(data.sum()):
        raise ValueError("operation produced non-finite values")
    out = Tensor2.__new__(Tensor2)
    out.data = data
    out.grad = None
    out.requires_grad = _GRAD_ENABLED[0] and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor2, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and g.shape[0] > 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] > 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def backward(loss: Tensor2) -> None:
    """Run reverse-mode accumulation from a 1x1 loss node."""
    if loss.shape != (1, 1):
        raise DimensionError(f"backward needs a scalar 1x1 loss, got {loss.shape}")
    # iterative topological sort (graphs can get deep during training)
    topo: list[Tensor2] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor2, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# primitive operations
# ---------------------------------------------------------------------------

def matmul(a: Tensor2, b: Tensor2) -> Tensor2:
    if a.cols != b.rows:
        raise DimensionError(f"matmul shapes {a.shape} x {b.shape} do not conform")

    def bw(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), bw)


def transpose(a: Tensor2) -> Tensor2:
    def bw(g):
        _accum(a, g.T)

    return _make(a.data.T.copy(), (a,), bw)


def _broadcastable(sa, sb) -> bool:
    return all(x == y or x == 1 or y == 1 for x, y in zip(sa, sb))


def _binary(a: Tensor2, b: Tensor2, fwd, da, db, name: str) -> Tensor2:
    if not _broadcastable(a.shape, b.shape):
        raise DimensionError(f"{name} shapes {a.shape} vs {b.shape} do not broadcast")

    def bw(g):
        _accum(a, _unbroadcast(da(g), a.shape))
        _accum(b, _unbroadcast(db(g), b.shape))

    return _make(fwd(a.data, b.data), (a, b), bw)


def add(a: Tensor2, b: Tensor2) -> Tensor2:
    return _binary(a, b, np.add, lambda g: g, lambda g: g, "add")


def sub(a: Tensor2, b: Tensor2) -> Tensor2:
    return _binary(a, b, np.subtract, lambda g: g, lambda g: -g, "sub")


def mul(a: Tensor2, b: Tensor2) -> Tensor2:
    return _binary(a, b, np.multiply,
                   lambda g: g * b.data, lambda g: g * a.data, "mul")


def div(a: Tensor2, b: Tensor2) -> Tensor2:
    return _binary(a, b, np.divide,
                   lambda g: g / b.data,
                   lambda g: -g * a.data / (b.data * b.data), "div")


def scale(a: Tensor2, c: float) -> Tensor2:
    def bw(g):
        _accum(a, g * c)

    return _make(a.data * c, (a,), bw)


def add_const(a: Tensor2, c: float) -> Tensor2:
    def bw(g):
        _accum(a, g)

    return _make(a.data + c, (a,), bw)


def relu(a: Tensor2) -> Tensor2:
    mask = a.data > 0  # subgradient at 0 is 0

    def bw(g):
        _accum(a, g * mask)

    return _make(np.maximum(a.data, 0.0), (a,), bw)


def sigmoid(a: Tensor2) -> Tensor2:
    s = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        _accum(a, g * s * (1.0 - s))

    return _make(s, (a,), bw)


def exp(a: Tensor2) -> Tensor2:
    e = np.exp(a.data)

    def bw(g):
        _accum(a, g * e)

    return _make(e, (a,), bw)


def log(a: Tensor2) -> Tensor2:
    def bw(g):
        _accum(a, g / a.data)

    return _make(np.log(a.data), (a,), bw)


def sqrt(a: Tensor2) -> Tensor2:
    r = np.sqrt(a.data)

    def bw(g):
        _accum(a, g * 0.5 / r)

    return _make(r, (a,), bw)


def tsum(a: Tensor2, axis=None) -> Tensor2:
    """Sum to 1x1 (axis=None), column vector (axis=1) or row (axis=0)."""
    if axis is None:
        data = a.data.sum().reshape(1, 1)
    else:
        data = a.data.sum(axis=axis, keepdims=True)

    def bw(g):
        _accum(a, np.broadcast_to(g, a.shape).copy())

    return _make(data, (a,), bw)


def tmean(a: Tensor2, axis=None) -> Tensor2:
    n = a.data.size if axis is None else a.shape[axis]
    return scale(tsum(a, axis=axis), 1.0 / n)


def row(a: Tensor2, i: int) -> Tensor2:
    def bw(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[i, :] += g[0, :]

    return _make(a.data[i:i + 1, :].copy(), (a,), bw)


def concat_rows(parts: list[Tensor2]) -> Tensor2:
    if not parts:
        raise DimensionError("concat_rows needs at least one part")
    cols = parts[0].cols
    for p in parts:
        if p.cols != cols:
            raise DimensionError("concat_rows parts differ in column count")
    offsets = np.cumsum([0] + [p.rows for p in parts])

    def bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[lo:hi, :])

    return _make(np.concatenate([p.data for p in parts], axis=0), tuple(parts), bw)


def concat_cols(parts: list[Tensor2]) -> Tensor2:
    if not parts:
        raise DimensionError("concat_cols needs at least one part")
    rows_ = parts[0].rows
    for p in parts:
        if p.rows != rows_:
            raise DimensionError("concat_cols parts differ in row count")
    offsets = np.cumsum([0] + [p.cols for p in parts])

    def bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[:, lo:hi])

    return _make(np.concatenate([p.data for p in parts], axis=1), tuple(parts), bw)


def embedding_mean(table: Tensor2, id_lists: list[list[int]]) -> Tensor2:
    """Row i = mean of table rows indexed by id_lists[i] (embedding bag)."""
    if any(len(ids) == 0 for ids in id_lists):
        raise DimensionError("embedding_mean got an empty id list")
    data = np.stack([table.data[ids].mean(axis=0) for ids in id_lists])

    def bw(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            for i, ids in enumerate(id_lists):
                np.add.at(table.grad, ids, g[i] / len(ids))

    return _make(data, (table,), bw)


# ---------------------------------------------------------------------------
# composite operations
# ---------------------------------------------------------------------------

def linear(x: Tensor2, w: Tensor2, b: Tensor2) -> Tensor2:
    """x @ w + b with b broadcast over rows."""
    if x.cols != w.rows:
        raise DimensionError(f"linear: input {x.shape} vs weight {w.shape}")
    if b.shape != (1, w.cols):
        raise DimensionError(f"linear: bias {b.shape} vs weight {w.shape}")
    return add(matmul(x, w), b)


def softmax_rows(a: Tensor2) -> Tensor2:
    """Row-wise stable softmax (max-subtraction), fused forward/backward."""
    if a.cols == 0:
        raise DimensionError("softmax of an empty row")
    e = np.exp(a.data - a.data.max(axis=1, keepdims=True))
    s = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        _accum(a, s * (g - (g * s).sum(axis=1, keepdims=True)))

    return _make(s, (a,), bw)


def softmax_row(v: Tensor2) -> Tensor2:
    if v.rows != 1:
        raise DimensionError(f"softmax_row expects a single row, got {v.shape}")
    return softmax_rows(v)


def log_softmax_rows(a: Tensor2) -> Tensor2:
    if a.cols == 0:
        raise DimensionError("softmax of an empty row")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    s = np.exp(out)

    def bw(g):
        _accum(a, g - s * g.sum(axis=1, keepdims=True))

    return _make(out, (a,), bw)


def layer_norm(x: Tensor2, gain: Tensor2, bias: Tensor2, eps: float = 1e-8) -> Tensor2:
    """Per-row standardization (population variance), then gain/bias."""
    if eps <= 0:
        raise DimensionError("layer_norm eps must be positive")
    if gain.shape != (1, x.cols) or bias.shape != (1, x.cols):
        raise DimensionError(
            f"layer_norm gain/bias must be 1x{x.cols}, got {gain.shape}/{bias.shape}")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    inv_std = 1.0 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + eps)
    xn = xc * inv_std

    def bw(g):
        _accum(gain, (g * xn).sum(axis=0, keepdims=True))
        _accum(bias, g.sum(axis=0, keepdims=True))
        dxn = g * gain.data
        _accum(x, inv_std * (dxn - dxn.mean(axis=1, keepdims=True)
                             - xn * (dxn * xn).mean(axis=1, keepdims=True)))

    return _make(xn * gain.data + bias.data, (x, gain, bias), bw)


def attention(q: Tensor2, k: Tensor2, v: Tensor2) -> Tensor2:
    """softmax(q k^T / sqrt(d)) v, single head."""
    if k.rows == 0:
        raise EmptyEvidenceError("attention over zero key/value rows")
    if k.rows != v.rows:
        raise DimensionError(f"attention: K has {k.rows} rows, V has {v.rows}")
    if q.cols != k.cols:
        raise DimensionError(f"attention: Q cols {q.cols} != K cols {k.cols}")
    scores = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(q.cols))
    return matmul(softmax_rows(scores), v)


def normalize_rows(a: Tensor2) -> Tensor2:
    """L2-normalize each row; all-zero rows become zero rows with a warning."""
    sq = tsum(mul(a, a), axis=1)
    if np.any(sq.data == 0.0):
        warnings.warn("zero-norm row in cosine similarity treated as similarity 0")
    # 1e-24 keeps exact unit norms intact in float64 and defines zero rows
    return div(a, sqrt(add_const(sq, 1e-24)))


def cosine_matrix(a: Tensor2, b: Tensor2) -> Tensor2:
    """Pairwise cosine similarities, rows of `a` against rows of `b`."""
    return matmul(normalize_rows(a), transpose(normalize_rows(b)))


# ---------------------------------------------------------------------------
# parameters, optimizer, gradient checking
# ---------------------------------------------------------------------------

@dataclass
class Parameter:
    """A named trainable (or frozen) tensor."""

    value: Tensor2
    name: str
    trainable: bool = True

    def __post_init__(self):
        self.value.requires_grad = self.trainable

    @property
    def grad(self) -> np.ndarray:
        # frozen parameters always report a zero gradient
        if not self.trainable or self.value.grad is None:
            return np.zeros_like(self.value.data)
        return self.value.grad

    def zero_grad(self):
        self.value.grad = None


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


@dataclass
class OptimState:
    """AdamW state: decoupled weight decay plus optional linear warmup/decay."""

    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    warmup_steps: int = 0
    total_steps: int | None = None
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def schedule_multiplier(self, t: int) -> float:
        mult = 1.0
        if self.warmup_steps > 0:
            mult = min(mult, t / self.warmup_steps)
        if self.total_steps is not None and self.total_steps > self.warmup_steps:
            mult = min(mult, (self.total_steps - t)
                       / (self.total_steps - self.warmup_steps))
        return max(0.0, mult)


def adamw_step(params, state: OptimState) -> None:
    """One AdamW update over all trainable parameters with populated grads."""
    state.t += 1
    lr_t = state.lr * state.schedule_multiplier(state.t)
    for p in params:
        if not p.trainable:
            continue
        g = p.grad
        m = state.m.setdefault(p.name, np.zeros_like(p.value.data))
        v = state.v.setdefault(p.name, np.zeros_like(p.value.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        mhat = m / (1.0 - state.beta1 ** state.t)
        vhat = v / (1.0 - state.beta2 ** state.t)
        theta = p.value.data
        theta -= lr_t * state.weight_decay * theta  # decoupled decay
        theta -= lr_t * mhat / (np.sqrt(vhat) + state.eps)


def grad_check(loss_fn, params, h: float = 1e-5) -> float:
    """Compare analytic gradients of loss_fn against central differences.

    Returns the worst relative error over every coordinate of every
    trainable parameter, with denominator max(|analytic|, |numeric|, 1e-8).
    """
    if h <= 0:
        raise ValueError("grad_check step h must be positive")
    zero_grads(params)
    loss = loss_fn(params)
    if not np.isfinite(loss.item()):
        raise ValueError("grad_check: loss is not finite")
    backward(loss)
    analytic = {p.name: p.grad.copy() for p in params if p.trainable}

    worst = 0.0
    with no_grad():
        for p in params:
            if not p.trainable:
                continue
            flat = p.value.data.reshape(-1)
            a_flat = analytic[p.name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                f_plus = loss_fn(params).item()
                flat[i] = orig - h
                f_minus = loss_fn(params).item()
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * h)
                err = abs(a_flat[i] - numeric) / max(abs(a_flat[i]), abs(numeric), 1e-8)
                worst = max(worst, err)
    return worst
