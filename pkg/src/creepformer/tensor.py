"""Dense tensors with reverse-mode automatic differentiation.

Small CPU-only engine carrying exactly the primitives the creep model
needs: affine maps, batched matmul, masked softmax, layer norm,
activations, dropout, concatenation and reductions. Arrays are numpy
float64 by default; float32 is accepted for training speed.

Gradient buffers accumulate across ``backward`` calls; callers zero them
between optimizer steps. A graph instance belongs to one thread.
"""

from __future__ import annotations

import contextlib

import numpy as np

MASK_NEG = -1e9  # stands in for -inf before softmax; avoids NaN from true infinities


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class MaskError(ValueError):
    """A mask leaves no valid position to attend to."""


class ConfigError(ValueError):
    """An op or model hyperparameter is out of its allowed range."""


_grad_enabled = True
_check_finite = False


def set_finite_checks(enabled: bool) -> None:
    """Toggle NaN/Inf checks after every forward op (debug profile)."""
    global _check_finite
    _check_finite = bool(enabled)


@contextlib.contextmanager
def no_grad():
    """Run forwards without recording the graph (inference/eval)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return np.ascontiguousarray(arr)


class Tensor:
    """An n-d array node in a differentiable computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every requires_grad leaf.

        self must be a scalar (size 1). Interior nodes get fresh gradient
        buffers per call; leaves accumulate across calls.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward requires a scalar loss, got shape {self.data.shape}"
            )
        order = _toposort(self)
        for node in order:
            if node._parents:
                node.grad = None
        self.grad = (np.zeros_like(self.data) if self.grad is None else self.grad) \
            + np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # Operator sugar; everything routes through the module-level ops.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def transpose(self, axes=None):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis, keepdims)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, op={self._op!r}{flag})"


def _toposort(root: Tensor) -> list[Tensor]:
    """Iterative post-order DFS; each node appears once, parents first."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _coerce(x, like=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if isinstance(like, Tensor) else None
    return Tensor(np.asarray(x, dtype=dtype))


def _coerce_pair(a, b) -> tuple[Tensor, Tensor]:
    return _coerce(a, like=b), _coerce(b, like=a)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], op: str, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward_fn = None
    if _check_finite and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by op {op!r}")
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _accumulate(t: Tensor, g: np.ndarray, own: bool = False) -> None:
    """Add g into t.grad. own=True promises g is a fresh array the caller
    will not touch again, so the first accumulation may take the buffer."""
    if not t.requires_grad:
        return
    if t.grad is None:
        if own and g.dtype == t.data.dtype:
            t.grad = g
        else:
            t.grad = np.array(g, dtype=t.data.dtype)
    else:
        t.grad += g.astype(t.data.dtype, copy=False)


def add(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)

    def backward(g):
        gb = _unbroadcast(g, b.data.shape)
        _accumulate(b, gb, own=gb is not g)
        _accumulate(a, _unbroadcast(g, a.data.shape), own=True)

    return _make(a.data + b.data, (a, b), "add", backward)


def sub(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)

    def backward(g):
        _accumulate(b, -_unbroadcast(g, b.data.shape), own=True)
        _accumulate(a, _unbroadcast(g, a.data.shape), own=True)

    return _make(a.data - b.data, (a, b), "sub", backward)


def mul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape), own=True)
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape), own=True)

    return _make(a.data * b.data, (a, b), "mul", backward)


def neg(a) -> Tensor:
    a = _coerce(a)

    def backward(g):
        _accumulate(a, -g, own=True)

    return _make(-a.data, (a,), "neg", backward)


def matmul(a, b) -> Tensor:
    """Batched matrix product of [..., m, k] @ [..., k, n] -> [..., m, n]."""
    a, b = _coerce(a), _coerce(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(
            f"matmul needs >=2-d operands, got {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul contraction mismatch: {a.data.shape} @ {b.data.shape}"
        )
    try:
        np.broadcast_shapes(a.data.shape[:-2], b.data.shape[:-2])
    except ValueError as err:
        raise ShapeError(
            f"matmul batch dims incompatible: {a.data.shape} @ {b.data.shape}"
        ) from err

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        _accumulate(a, _unbroadcast(ga, a.data.shape), own=True)
        _accumulate(b, _unbroadcast(gb, b.data.shape), own=True)

    return _make(np.matmul(a.data, b.data), (a, b), "matmul", backward)


def affine(x, w, b) -> Tensor:
    """y = x @ w.T + b with w: [n_out, n_in], broadcast over leading dims of x."""
    x, w, b = _coerce(x), _coerce(w), _coerce(b)
    if w.ndim != 2 or b.ndim != 1:
        raise ShapeError(
            f"affine expects w [n_out, n_in] and b [n_out], got {w.data.shape} / {b.data.shape}"
        )
    n_out, n_in = w.data.shape
    if x.data.shape[-1] != n_in or b.data.shape[0] != n_out:
        raise ShapeError(
            f"affine shape mismatch: x {x.data.shape}, w {w.data.shape}, b {b.data.shape}"
        )

    lead = x.data.shape[:-1]

    def backward(g):
        g2d = np.ascontiguousarray(g.reshape(-1, n_out))
        x2d = x.data.reshape(-1, n_in)
        _accumulate(x, np.matmul(g2d, w.data).reshape(x.data.shape), own=True)
        _accumulate(w, np.matmul(g2d.T, x2d), own=True)
        _accumulate(b, g2d.sum(axis=0), own=True)

    # One flat GEMM regardless of leading dims (faster than batched matmul).
    y = np.matmul(x.data.reshape(-1, n_in), w.data.T)
    y += b.data
    return _make(y.reshape(*lead, n_out), (x, w, b), "affine", backward)


def linear(x, w) -> Tensor:
    """Bias-free affine map, y = x @ w.T with w: [n_out, n_in]."""
    x, w = _coerce(x), _coerce(w)
    if w.ndim != 2 or x.data.shape[-1] != w.data.shape[1]:
        raise ShapeError(f"linear shape mismatch: x {x.data.shape}, w {w.data.shape}")
    n_out, n_in = w.data.shape
    lead = x.data.shape[:-1]

    def backward(g):
        g2d = np.ascontiguousarray(g.reshape(-1, n_out))
        _accumulate(x, np.matmul(g2d, w.data).reshape(x.data.shape), own=True)
        _accumulate(w, np.matmul(g2d.T, x.data.reshape(-1, n_in)), own=True)

    y = np.matmul(x.data.reshape(-1, n_in), w.data.T).reshape(*lead, n_out)
    return _make(y, (x, w), "linear", backward)


def relu(x) -> Tensor:
    x = _coerce(x)
    keep = x.data > 0

    def backward(g):
        _accumulate(x, g * keep, own=True)

    return _make(np.where(keep, x.data, 0.0), (x,), "relu", backward)


def tanh(x) -> Tensor:
    x = _coerce(x)
    y = np.tanh(x.data)

    def backward(g):
        _accumulate(x, g * (1.0 - y * y), own=True)

    return _make(y, (x,), "tanh", backward)


def dropout(x, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate).

    Identity when `training` is off or rate == 0.
    """
    x = _coerce(x)
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs an explicit rng")
    scale = 1.0 / (1.0 - rate)
    keep = (rng.random(x.data.shape, dtype=x.data.dtype) >= rate).astype(x.data.dtype)
    keep *= scale

    def backward(g):
        _accumulate(x, g * keep, own=True)

    return _make(x.data * keep, (x,), "dropout", backward)


def masked_softmax(logits, mask) -> Tensor:
    """Softmax over the last axis with invalid positions forced to exact zero.

    `mask` is {0,1} with 1 marking invalid positions, broadcastable to the
    shape of `logits`. Masking adds MASK_NEG to invalid logits before the
    softmax, then zeroes those slots and renormalizes, so each row is a
    probability distribution over its valid positions only.
    """
    x = _coerce(logits)
    m = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
    m = m.astype(x.data.dtype, copy=False)
    if not np.all((m == 0.0) | (m == 1.0)):
        raise ValueError("mask entries must be 0 or 1")
    try:
        bshape = np.broadcast_shapes(m.shape, x.data.shape)
    except ValueError as err:
        raise ShapeError(
            f"mask {m.shape} not broadcastable to logits {x.data.shape}"
        ) from err
    if bshape != x.data.shape:
        raise ShapeError(
            f"mask {m.shape} would broadcast logits {x.data.shape} to {bshape}"
        )
    # Broadcasting only repeats rows, so the pre-broadcast mask suffices here.
    row_min = m.min(axis=-1) if m.ndim else m
    if np.any(row_min == 1.0):
        raise MaskError("masked_softmax: at least one row has no valid position")

    probs = x.data + m * MASK_NEG
    probs -= probs.max(axis=-1, keepdims=True)
    np.exp(probs, out=probs)
    probs *= 1.0 - m
    probs /= probs.sum(axis=-1, keepdims=True)

    def backward(g):
        # dL/dz = p * (g - sum(g*p)); zeros at masked slots fall out naturally.
        tmp = g * probs
        dot = tmp.sum(axis=-1, keepdims=True)
        np.subtract(g, dot, out=tmp)
        tmp *= probs
        _accumulate(x, tmp, own=True)

    return _make(probs, (x,), "masked_softmax", backward)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize across the last axis, then scale by gamma and shift by beta."""
    x, gamma, beta = _coerce(x), _coerce(gamma), _coerce(beta)
    d = x.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ShapeError(
            f"layer_norm scale/shift must be [{d}], got {gamma.data.shape} / {beta.data.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xhat = x.data - mu
    var = np.mean(xhat * xhat, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat *= inv_std

    def backward(g):
        gx_hat = g * gamma.data
        term = gx_hat - gx_hat.mean(axis=-1, keepdims=True) \
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        term *= inv_std
        _accumulate(x, term, own=True)
        flat = (-1, d)
        _accumulate(gamma, (g * xhat).reshape(flat).sum(axis=0), own=True)
        _accumulate(beta, g.reshape(flat).sum(axis=0), own=True)

    return _make(gamma.data * xhat + beta.data, (x, gamma, beta), "layer_norm", backward)


def concat(tensors, axis: int = -1) -> Tensor:
    """Concatenate along `axis`; shapes must agree elsewhere."""
    parts = [_coerce(t) for t in tensors]
    if not parts:
        raise ShapeError("concat needs at least one tensor")
    base = list(parts[0].data.shape)
    ax = axis if axis >= 0 else len(base) + axis
    for p in parts[1:]:
        other = list(p.data.shape)
        if len(other) != len(base) or any(
            i != ax and other[i] != base[i] for i in range(len(base))
        ):
            raise ShapeError(
                f"concat shape mismatch along axis {axis}: "
                f"{[tuple(q.data.shape) for q in parts]}"
            )
    sizes = [p.data.shape[ax] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[ax] = slice(start, stop)
            _accumulate(p, np.ascontiguousarray(g[tuple(idx)]), own=True)

    return _make(
        np.concatenate([p.data for p in parts], axis=ax), tuple(parts), "concat", backward
    )


def tensor_sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _coerce(x)

    def backward(g):
        if axis is None:
            _accumulate(x, np.broadcast_to(g, x.data.shape).copy(), own=True)
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        _accumulate(x, np.broadcast_to(gg, x.data.shape).copy(), own=True)

    return _make(x.data.sum(axis=axis, keepdims=keepdims), (x,), "sum", backward)


def tensor_mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _coerce(x)
    count = x.data.size if axis is None else np.prod(
        [x.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )

    def backward(g):
        if axis is None:
            _accumulate(x, np.broadcast_to(g / count, x.data.shape).copy(), own=True)
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        _accumulate(x, np.broadcast_to(gg / count, x.data.shape).copy(), own=True)

    return _make(x.data.mean(axis=axis, keepdims=keepdims), (x,), "mean", backward)


def reshape(x, shape) -> Tensor:
    x = _coerce(x)
    shape = tuple(shape) if not isinstance(shape, int) else (shape,)

    def backward(g):
        # The upstream buffer is dead after this node's backward, so the
        # reshaped view may be handed over without copying.
        _accumulate(x, g.reshape(x.data.shape), own=True)

    return _make(x.data.reshape(shape), (x,), "reshape", backward)


def transpose(x, axes=None) -> Tensor:
    x = _coerce(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = np.argsort(axes)

    def backward(g):
        _accumulate(x, np.ascontiguousarray(g.transpose(inverse)), own=True)

    return _make(x.data.transpose(axes), (x,), "transpose", backward)


def take_per_batch(x, indices) -> Tensor:
    """Pick one time slice per batch row: out[i] = x[i, indices[i]]."""
    x = _coerce(x)
    idx = np.asarray(indices, dtype=np.int64)
    if x.ndim < 2 or idx.shape != (x.data.shape[0],):
        raise ShapeError(
            f"take_per_batch: x {x.data.shape} with indices {idx.shape}"
        )
    if np.any(idx < 0) or np.any(idx >= x.data.shape[1]):
        raise IndexError(f"take_per_batch indices out of range [0, {x.data.shape[1]})")
    rows = np.arange(x.data.shape[0])

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (rows, idx), g)
        _accumulate(x, gx, own=True)

    return _make(x.data[rows, idx].copy(), (x,), "take_per_batch", backward)
