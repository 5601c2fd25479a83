"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations on tensors are recorded on the tape that is active in the
current thread (see :class:`Tape`).  Outside of a tape, or when no input is
tracked, operations simply compute values, which keeps inference cheap.
"""
import threading

import numpy as np

_local = threading.local()


class Tensor:
    """Immutable float64 array that may participate in a gradient tape."""

    __slots__ = ("data", "requires_grad", "tracked", "tape", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False):
        if type(data) is np.ndarray and data.dtype == np.float64 and not data.flags.writeable:
            arr = data
        else:
            # copy so later writes by the caller cannot leak in
            arr = np.array(data, dtype=np.float64)
            arr.setflags(write=False)
        self.data = arr
        self.requires_grad = requires_grad
        self.tracked = requires_grad
        self.tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self):
        return len(self.data)

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return transpose(self)


def parameter(data):
    """A leaf tensor whose gradient is wanted."""
    return Tensor(data, requires_grad=True)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered log of recorded primitive applications.

    Use as a context manager; nested tapes shadow outer ones for the
    duration of the ``with`` block.  A tape belongs to one thread.
    """

    def __init__(self):
        self.records = []

    def __enter__(self):
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def __len__(self):
        return len(self.records)

    def gradients(self, loss, params):
        return gradients(loss, params, tape=self)


def active_tape():
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


def _wrap(value):
    arr = np.asarray(value, dtype=np.float64)
    arr.setflags(write=False)
    return Tensor(arr)


def _record(value, inputs, vjp):
    out = _wrap(value)
    stack = getattr(_local, "stack", None)
    if not stack:
        return out
    tape = stack[-1]
    for t in inputs:
        if t.tracked:
            break
    else:
        return out
    out.tracked = True
    out.tape = tape
    tape.records.append((out, inputs, vjp))
    return out


def gradients(loss, params, tape=None):
    """Reverse-mode gradients of a scalar ``loss`` w.r.t. named ``params``.

    ``params`` is a mapping ``name -> Tensor``.  Parameters that do not
    influence ``loss`` through the tape receive zero gradients.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("loss must be a Tensor")
    if loss.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    if not np.all(np.isfinite(loss.data)):
        raise FloatingPointError(f"non-finite loss: {loss.item()}")
    tape = tape if tape is not None else loss.tape
    grads = {id(loss): np.ones_like(loss.data)}
    if tape is not None:
        for out, inputs, vjp in reversed(tape.records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, vjp(g)):
                if gi is None or not inp.tracked:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
    return {
        name: Tensor(grads.get(id(p), np.zeros_like(p.data)))
        for name, p in params.items()
    }


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise ---------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def neg(a):
    a = as_tensor(a)
    return _record(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape),
                              _unbroadcast(g * a.data, b.shape)))


def sigmoid(a):
    a = as_tensor(a)
    # tanh form avoids overflow in exp for large |x|
    y = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    return _record(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _record(y, (a,), lambda g: (g * (1.0 - y * y),))


def exp(a):
    a = as_tensor(a)
    y = np.exp(a.data)
    return _record(y, (a,), lambda g: (g * y,))


def log(a):
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise FloatingPointError("log of non-positive value")
    return _record(np.log(a.data), (a,), lambda g: (g / a.data,))


# -- reductions and shape ------------------------------------------------------

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    y = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(y, (a,), vjp)


def reshape(a, shape):
    a = as_tensor(a)
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a):
    a = as_tensor(a)
    return _record(np.swapaxes(a.data, -1, -2), (a,),
                   lambda g: (np.swapaxes(g, -1, -2),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    y = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _record(y, tuple(tensors), vjp)


def getitem(a, idx):
    a = as_tensor(a)

    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _record(a.data[idx], (a,), vjp)


def take_rows(table, ids):
    """Embedding lookup: rows of a 2-D ``table`` at integer ``ids``."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError("row index out of range")

    def vjp(g):
        out = np.zeros_like(table.data)
        np.add.at(out, ids, g)
        return (out,)

    return _record(table.data[ids], (table,), vjp)


# -- linear algebra ------------------------------------------------------------

def matmul(a, b, transpose_b=False):
    """``a @ b`` (or ``a @ b^T`` for a 2-D ``b`` when ``transpose_b``)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul expects operands with ndim >= 2; reshape vectors first")
    bd = b.data.T if transpose_b else b.data
    if transpose_b and b.ndim != 2:
        raise ValueError("transpose_b needs a 2-D right operand")
    if a.shape[-1] != bd.shape[-2]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {bd.shape}")

    def vjp(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, bd.shape)
        return _unbroadcast(ga, a.shape), (gb.T if transpose_b else gb)

    return _record(a.data @ bd, (a, b), vjp)


# -- softmax family --------------------------------------------------------------

def softmax_array(x, axis=-1):
    """Max-shifted softmax on a raw array."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0 or x.shape[axis] == 0:
        raise ValueError("softmax of an empty vector")
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def log_softmax_array(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0 or x.shape[axis] == 0:
        raise ValueError("log-softmax of an empty vector")
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(a, axis=-1):
    a = as_tensor(a)
    p = softmax_array(a.data, axis)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return _record(p, (a,), vjp)


def softmax_cross_entropy(logits, targets, weights=None):
    """Per-row negative log-likelihood of integer ``targets`` under softmax(logits).

    ``logits`` has shape (B, C); the result has shape (B,).  Optional
    ``weights`` (B,) scale each row, e.g. to mask padding.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != logits.shape[:1]:
        raise ValueError("expected logits (B, C) and targets (B,)")
    logp = log_softmax_array(logits.data, axis=-1)
    rows = np.arange(len(targets))
    w = np.ones(len(targets)) if weights is None else np.asarray(weights, dtype=np.float64)
    nll = -logp[rows, targets] * w

    def vjp(g):
        d = np.exp(logp)
        d[rows, targets] -= 1.0
        return (d * (g * w)[:, None],)

    return _record(nll, (logits,), vjp)
