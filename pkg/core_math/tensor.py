"""
Dense float64 tensors with a reverse-mode computation tape.

Every op is a plain function returning a new ``Tensor``. When a ``Tape`` is
active on the current thread and any operand requires a gradient, the op
records itself together with a backward rule; ``Tape.backward`` replays the
records in exact reverse order and accumulates gradients additively, so a
tensor used twice receives the sum of both contributions.

Tapes are per thread. Distinct tapes on distinct threads share nothing.
"""
import logging
import threading

import numpy as np

from .exceptions import ConfigError, NumericalError, ShapeError

logger = logging.getLogger(__name__)

_local = threading.local()


class Tensor:
    """A dense row-major float64 array with a lazily allocated gradient."""

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def accumulate(self, grad):
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64).reshape(self.shape)
        else:
            self.grad += grad

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, key):
        return getitem(self, key)


class _Record:
    __slots__ = ('output', 'inputs', 'backward')

    def __init__(self, output, inputs, backward):
        self.output = output
        self.inputs = inputs
        self.backward = backward


class Tape:
    """
    Ordered log of the ops executed while it is active.

    Usage::

        with Tape() as tape:
            loss = f(params)
        tape.backward(loss)
    """

    def __init__(self):
        self.records = []

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _stack().pop()
        return False

    def __len__(self):
        return len(self.records)

    def record(self, output, inputs, backward):
        self.records.append(_Record(output, inputs, backward))

    def backward(self, output, seed=None):
        """Seed ``output`` (ones by default) and propagate to every recorded operand."""
        if seed is None:
            seed = np.ones(output.shape)
        output.grad = np.array(seed, dtype=np.float64).reshape(output.shape)
        for record in reversed(self.records):
            grad = record.output.grad
            if grad is None:
                continue
            for tensor, contribution in zip(record.inputs, record.backward(grad)):
                if contribution is not None and tensor.requires_grad:
                    tensor.accumulate(contribution)


def _stack():
    if not hasattr(_local, 'tapes'):
        _local.tapes = []
    return _local.tapes


def active_tape():
    tapes = _stack()
    return tapes[-1] if tapes else None


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data, inputs, backward):
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, inputs, backward)
    return out


def _unbroadcast(grad, shape):
    # Sum out the axes numpy broadcasting added or stretched.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# Elementwise ops

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('add', a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('sub', a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('mul', a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward)


def scale(a, factor):
    a = as_tensor(a)
    factor = float(factor)
    return _result(a.data * factor, (a,), lambda g: (g * factor,))


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a):
    a = as_tensor(a)
    # tanh form is stable for large |x| and exact at 0
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a):
    a = as_tensor(a)
    y = np.exp(a.data)
    return _result(y, (a,), lambda g: (g * y,))


ELEMENTWISE = {
    'add': add,
    'sub': sub,
    'mul': mul,
    'scale': scale,
    'tanh': tanh,
    'sigmoid': sigmoid,
    'exp': exp,
}


def elementwise(op, *args):
    """Dispatch by name: ``elementwise('tanh', x)``, ``elementwise('scale', x, 0.5)``."""
    try:
        fn = ELEMENTWISE[op]
    except KeyError:
        raise ConfigError(f"unknown elementwise op {op!r}; expected one of {sorted(ELEMENTWISE)}") from None
    return fn(*args)


# Linear algebra

def matmul(a, b):
    """``a`` is ``[..., k]``, ``b`` is ``[k, n]`` or ``[k]``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 1 or b.data.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        k = a.shape[-1]
        a2 = a.data.reshape(-1, k)
        if b.data.ndim == 2:
            g2 = g.reshape(-1, b.shape[1])
            grad_a = (g2 @ b.data.T).reshape(a.shape)
        else:
            g2 = g.reshape(-1)
            grad_a = np.outer(g2, b.data).reshape(a.shape)
        return grad_a, a2.T @ g2

    return _result(out, (a, b), backward)


def contract(subscripts, a, b):
    """
    Two-operand einsum, e.g. ``contract('bsn,bn->bs', H, h)``.

    Every index of an operand must appear in the output or in the other
    operand, which is what the model's batched dot products need.
    """
    a, b = as_tensor(a), as_tensor(b)
    inputs, out_idx = subscripts.replace(' ', '').split('->')
    a_idx, b_idx = inputs.split(',')
    if len(a_idx) != a.data.ndim or len(b_idx) != b.data.ndim:
        raise ShapeError(f"contract {subscripts!r}: got operands {a.shape} and {b.shape}")
    try:
        out = np.einsum(subscripts, a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"contract {subscripts!r}: {a.shape} and {b.shape}: {exc}") from None

    def backward(g):
        grad_a = np.einsum(f"{out_idx},{b_idx}->{a_idx}", g, b.data)
        grad_b = np.einsum(f"{out_idx},{a_idx}->{b_idx}", g, a.data)
        return grad_a, grad_b

    return _result(out, (a, b), backward)


def transpose(a):
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got {a.shape}")
    return _result(a.data.T, (a,), lambda g: (g.T,))


# Structure

def _is_basic_index(key):
    parts = key if isinstance(key, tuple) else (key,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis for p in parts)


def getitem(a, key):
    """Slice or gather; the backward rule scatters back (adding on repeated indices)."""
    a = as_tensor(a)
    out = a.data[key]
    basic = _is_basic_index(key)

    def backward(g):
        full = np.zeros(a.shape)
        if basic:
            full[key] += g
        else:
            np.add.at(full, key, g)
        return (full,)

    return _result(np.array(out), (a,), backward)


def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None
    return _result(out, (a,), lambda g: (g.reshape(a.shape),))


def concat(a, b, axis=-1):
    """Join two tensors along ``axis``; backward splits by the original extents."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != b.data.ndim:
        raise ShapeError(f"concat: rank mismatch {a.shape} and {b.shape}")
    ax = axis % a.data.ndim
    if a.shape[:ax] + a.shape[ax + 1:] != b.shape[:ax] + b.shape[ax + 1:]:
        raise ShapeError(f"concat: shapes {a.shape} and {b.shape} differ off axis {axis}")
    split_at = a.shape[ax]

    def backward(g):
        left, right = np.split(g, [split_at], axis=ax)
        return left, right

    return _result(np.concatenate([a.data, b.data], axis=ax), (a, b), backward)


def split(a, sizes, axis=-1):
    """Inverse of ``concat``: consecutive pieces of the given extents."""
    a = as_tensor(a)
    ax = axis % a.data.ndim
    if sum(sizes) != a.shape[ax]:
        raise ShapeError(f"split: sizes {list(sizes)} do not cover extent {a.shape[ax]}")
    pieces, start = [], 0
    for size in sizes:
        index = [slice(None)] * a.data.ndim
        index[ax] = slice(start, start + size)
        pieces.append(getitem(a, tuple(index)))
        start += size
    return pieces


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: mixed shapes {sorted(shapes)}")
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        return [np.take(g, i, axis=axis) for i in range(len(tensors))]

    return _result(out, tuple(tensors), backward)


def reduce_sum(a, axis=None):
    a = as_tensor(a)
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(out, (a,), backward)


# Normalization

def _mask_array(mask, shape):
    if mask is None:
        return None
    mask = np.asarray(mask)
    if mask.dtype != bool:
        # a collection of valid indices over a vector
        indices = mask.astype(int).ravel()
        mask = np.zeros(shape, dtype=bool)
        mask[indices] = True
    return np.broadcast_to(mask, shape)


def softmax(logits, mask=None, axis=-1):
    """
    Max-subtracted softmax. Masked-out entries get an effective logit of
    minus infinity: their output and gradient are exactly zero.
    """
    logits = as_tensor(logits)
    if logits.data.ndim == 0 or logits.shape[axis] == 0:
        raise ShapeError(f"softmax: need at least one logit, got shape {logits.shape}")
    valid = _mask_array(mask, logits.shape)
    x = logits.data
    if valid is not None:
        if not valid.any(axis=axis).all():
            raise ShapeError('softmax: mask leaves no valid entry')
        x = np.where(valid, x, -np.inf)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (logits,), backward)


def log_softmax(logits, axis=-1):
    logits = as_tensor(logits)
    x = logits.data
    shifted = x - x.max(axis=axis, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _result(y, (logits,), backward)


# Regularization

def dropout_mask(shape, p, rng, train=True):
    """
    Inverted dropout: entries are 0 with probability ``p`` and ``1/(1-p)``
    otherwise, so the expectation stays 1. Evaluation mode returns ones.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return Tensor(np.ones(shape))
    keep = rng.random(shape) >= p
    return Tensor(keep / (1.0 - p))


def ensure_finite(tensor, what):
    if not np.all(np.isfinite(tensor.data)):
        logger.error(f"Non-finite values in {what}")
        raise NumericalError(f"non-finite values in {what}")
    return tensor
