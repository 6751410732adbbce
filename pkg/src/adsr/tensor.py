"""Dense tensors with reverse-mode automatic differentiation.

Ops executed while a :class:`Tape` is active are recorded in execution
order; ``Tape.backward`` replays them in reverse, which is a reverse
topological order of the computation graph. Without an active tape the
same ops run as plain numpy computations (inference mode).

Supported broadcasting is deliberately narrow: exact shape match, python
scalars, and numpy-style broadcasts that the backward pass undoes by
summing over the expanded axes. There is no GPU path and no fusion.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

_tls = threading.local()


def _active_tape():
    return getattr(_tls, "tape", None)


class Tape:
    """Ordered record of executed ops, replayed in reverse by backward()."""

    def __init__(self):
        self._entries = []

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("a Tape is already active on this thread")
        _tls.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _tls.tape = None
        return False

    def record(self, backward_fn):
        self._entries.append(backward_fn)

    def __len__(self):
        return len(self._entries)

    def backward(self, loss: "Tensor", seed: np.ndarray | None = None):
        """Accumulate gradients of ``loss`` into every recorded input.

        ``loss`` must be a single-element tensor unless ``seed`` supplies
        an explicit upstream gradient of matching shape.
        """
        if not loss.requires_grad:
            return
        if seed is None:
            if loss.data.size != 1:
                raise ShapeError(
                    f"backward() needs a scalar loss, got shape {loss.shape}"
                )
            seed = np.ones_like(loss.data)
        else:
            seed = np.asarray(seed, dtype=loss.data.dtype)
            if seed.shape != loss.data.shape:
                raise ShapeError(
                    f"seed shape {seed.shape} != loss shape {loss.data.shape}"
                )
        loss.grad += seed
        for fn in reversed(self._entries):
            fn()


class Tensor:
    """n-d float array plus a same-shape gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        return _binary(self, other, "add")

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, "sub")

    def __rsub__(self, other):
        return _binary(self, other, "rsub")

    def __mul__(self, other):
        return _binary(self, other, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary(self, other, "div")

    def __neg__(self):
        return self * -1.0

    def __matmul__(self, other):
        return matmul(self, other)

    # -- unary / reductions --------------------------------------------

    def sigmoid(self):
        out_data = 1.0 / (1.0 + np.exp(-self.data))
        return _unary(self, out_data, lambda g, y: g * y * (1.0 - y))

    def tanh(self):
        out_data = np.tanh(self.data)
        return _unary(self, out_data, lambda g, y: g * (1.0 - y * y))

    def relu(self):
        out_data = np.maximum(self.data, 0.0)
        return _unary(self, out_data, lambda g, y: g * (y > 0))

    def exp(self):
        out_data = np.exp(self.data)
        return _unary(self, out_data, lambda g, y: g * y)

    def log(self):
        out_data = np.log(self.data)
        x = self.data
        return _unary(self, out_data, lambda g, y: g / x)

    def sqrt(self):
        out_data = np.sqrt(self.data)
        return _unary(self, out_data, lambda g, y: g * (0.5 / y))

    def clip(self, lo: float, hi: float):
        """Clamp values; gradient is zero where the clamp is active."""
        out_data = np.clip(self.data, lo, hi)
        mask = (self.data > lo) & (self.data < hi)
        return _unary(self, out_data, lambda g, y: g * mask)

    def sum(self, axis=None, keepdims: bool = False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        out = Tensor(out_data, requires_grad=self.requires_grad)
        tape = _active_tape()
        if tape is not None and self.requires_grad:
            src = self

            def backward():
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                src.grad += np.broadcast_to(g, src.data.shape)

            tape.record(backward)
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        out = Tensor(self.data.reshape(shape), requires_grad=self.requires_grad)
        tape = _active_tape()
        if tape is not None and self.requires_grad:
            src = self

            def backward():
                src.grad += out.grad.reshape(old)

            tape.record(backward)
        return out

    def transpose(self):
        if self.data.ndim != 2:
            raise ShapeError(f"transpose expects a matrix, got shape {self.shape}")
        out = Tensor(self.data.T, requires_grad=self.requires_grad)
        tape = _active_tape()
        if tape is not None and self.requires_grad:
            src = self

            def backward():
                src.grad += out.grad.T

            tape.record(backward)
        return out

    def softmax(self, axis: int = -1):
        """Numerically stabilized softmax along ``axis``."""
        if not np.isfinite(self.data).all():
            raise NumericError("softmax input contains NaN or infinite values")
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=axis, keepdims=True)
        out = Tensor(y, requires_grad=self.requires_grad)
        tape = _active_tape()
        if tape is not None and self.requires_grad:
            src = self

            def backward():
                g = out.grad
                dot = (g * y).sum(axis=axis, keepdims=True)
                src.grad += (g - dot) * y

            tape.record(backward)
        return out


def _unary(src: Tensor, out_data: np.ndarray, grad_fn) -> Tensor:
    out = Tensor(out_data, requires_grad=src.requires_grad)
    tape = _active_tape()
    if tape is not None and src.requires_grad:
        def backward():
            src.grad += grad_fn(out.grad, out.data)

        tape.record(backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` over the axes numpy expanded to reach its shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _binary(a: Tensor, b, op: str) -> Tensor:
    if isinstance(b, (int, float)):
        return _binary_scalar(a, float(b), op)
    if not isinstance(b, Tensor):
        b = Tensor(b)
    try:
        if op == "add":
            data = a.data + b.data
        elif op == "sub":
            data = a.data - b.data
        elif op == "rsub":
            data = b.data - a.data
        elif op == "mul":
            data = a.data * b.data
        elif op == "div":
            data = a.data / b.data
        else:  # pragma: no cover
            raise AssertionError(op)
    except ValueError as exc:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not align") from exc
    out = Tensor(data, requires_grad=a.requires_grad or b.requires_grad)
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        def backward():
            g = out.grad
            if op == "add":
                ga, gb = g, g
            elif op == "sub":
                ga, gb = g, -g
            elif op == "rsub":
                ga, gb = -g, g
            elif op == "mul":
                ga, gb = g * b.data, g * a.data
            else:  # div
                ga = g / b.data
                gb = -g * a.data / (b.data * b.data)
            if a.requires_grad:
                a.grad += _unbroadcast(ga, a.data.shape)
            if b.requires_grad:
                b.grad += _unbroadcast(gb, b.data.shape)

        tape.record(backward)
    return out


def _binary_scalar(a: Tensor, s: float, op: str) -> Tensor:
    if op == "add":
        data, ga = a.data + s, 1.0
    elif op == "sub":
        data, ga = a.data - s, 1.0
    elif op == "rsub":
        data, ga = s - a.data, -1.0
    elif op == "mul":
        data, ga = a.data * s, s
    else:  # div
        data, ga = a.data / s, 1.0 / s
    out = Tensor(data, requires_grad=a.requires_grad)
    tape = _active_tape()
    if tape is not None and a.requires_grad:
        def backward():
            a.grad += ga * out.grad

        tape.record(backward)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two rank-2 tensors."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not align")
    out = Tensor(a.data @ b.data, requires_grad=a.requires_grad or b.requires_grad)
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        def backward():
            g = out.grad
            if a.requires_grad:
                a.grad += g @ b.data.T
            if b.requires_grad:
                b.grad += a.data.T @ g

        tape.record(backward)
    return out


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along ``axis``; all other dimensions must match."""
    shapes = [t.shape for t in tensors]
    base = list(shapes[0])
    ax = axis if axis >= 0 else len(base) + axis
    for s in shapes[1:]:
        if len(s) != len(base) or any(
            s[i] != base[i] for i in range(len(base)) if i != ax
        ):
            raise ShapeError(f"concat: incompatible shapes {shapes} on axis {axis}")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor(data, requires_grad=any(t.requires_grad for t in tensors))
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        sizes = [t.shape[ax] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def backward():
            g = out.grad
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    idx = [slice(None)] * g.ndim
                    idx[ax] = slice(lo, hi)
                    t.grad += g[tuple(idx)]

        tape.record(backward)
    return out


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table``; backward scatter-adds into ``table.grad``."""
    ids = np.asarray(ids)
    n = table.shape[0]
    bad = (ids < 0) | (ids >= n)
    if bad.any():
        offender = int(ids[bad].reshape(-1)[0])
        raise IndexError(f"embedding id {offender} outside table of {n} rows")
    out = Tensor(table.data[ids], requires_grad=table.requires_grad)
    tape = _active_tape()
    if tape is not None and table.requires_grad:
        flat_ids = ids.reshape(-1)
        width = table.shape[1]

        def backward():
            np.add.at(table.grad, flat_ids, out.grad.reshape(-1, width))

        tape.record(backward)
    return out


def take_per_row(x: Tensor, cols) -> Tensor:
    """Pick one entry per row of a matrix: out[i] = x[i, cols[i]]."""
    cols = np.asarray(cols)
    rows = np.arange(x.shape[0])
    out = Tensor(x.data[rows, cols].reshape(-1, 1), requires_grad=x.requires_grad)
    tape = _active_tape()
    if tape is not None and x.requires_grad:
        def backward():
            np.add.at(x.grad, (rows, cols), out.grad[:, 0])

        tape.record(backward)
    return out


def dropout(x: Tensor, p: float, training: bool, rng) -> Tensor:
    """Inverted dropout: zero with probability ``p``, scale survivors by 1/(1-p).

    Identity in eval mode, so inference never consumes randomness.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * Tensor(mask)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-feature batch normalization for (batch, features) inputs.

    Train mode normalizes by batch statistics and updates the running
    buffers in place (biased variance). Eval mode is a pure function of
    the running buffers.
    """
    if x.data.ndim != 2:
        raise ShapeError(f"batch_norm expects (batch, features), got {x.shape}")
    if training:
        if x.shape[0] < 2:
            raise ShapeError("batch_norm in train mode needs a batch of at least 2")
        mu = x.mean(axis=0, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=0, keepdims=True)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.data[0]
        running_var *= 1.0 - momentum
        running_var += momentum * var.data[0]
        normed = centered / (var + eps).sqrt()
    else:
        mu = Tensor(running_mean.reshape(1, -1).astype(x.dtype))
        sd = Tensor(np.sqrt(running_var + eps).reshape(1, -1).astype(x.dtype))
        normed = (x - mu) / sd
    return normed * gamma + beta
