"""
Stacked LSTM step.

Each layer's pre-activations are one ``[B, 4n]`` block ordered
(input, forget, candidate, output); the saved-model manifest records the
same order. Dropout only touches non-recurrent connections: the input of
every layer.
"""
import logging
from dataclasses import dataclass

import numpy as np

from core_math import tensor as T
from core_math.exceptions import ShapeError
from core_math.tensor import Tensor

logger = logging.getLogger(__name__)

GATE_ORDER = ('input', 'forget', 'candidate', 'output')


@dataclass
class LstmLayerParams:
    w_x: Tensor   # [4n, in_dim]
    w_h: Tensor   # [4n, n]
    bias: Tensor  # [4n]

    @property
    def cells(self):
        return self.w_h.shape[1]

    @property
    def in_dim(self):
        return self.w_x.shape[1]

    def named(self, prefix):
        return {f"{prefix}.w_x": self.w_x, f"{prefix}.w_h": self.w_h, f"{prefix}.bias": self.bias}


@dataclass
class LstmState:
    h: list  # per layer, [B, n]
    c: list

    @classmethod
    def zeros(cls, layers, cells, batch=1):
        return cls(
            h=[Tensor(np.zeros((batch, cells))) for _ in range(layers)],
            c=[Tensor(np.zeros((batch, cells))) for _ in range(layers)],
        )

    @property
    def top(self):
        return self.h[-1]


def init_params(layers, cells, in_dim, rng, scale=0.1):
    """Every entry uniform in [-scale, scale]; no forget-gate offset."""
    if layers < 1:
        raise ShapeError(f"need at least one layer, got {layers}")
    params = []
    for layer in range(layers):
        width = in_dim if layer == 0 else cells
        params.append(LstmLayerParams(
            w_x=Tensor(rng.uniform(-scale, scale, size=(4 * cells, width))),
            w_h=Tensor(rng.uniform(-scale, scale, size=(4 * cells, cells))),
            bias=Tensor(rng.uniform(-scale, scale, size=4 * cells)),
        ))
    return params


def lstm_step(params, prev, x, dropout_masks=None, train=False):
    """
    One time step through every layer.

    ``x`` is ``[B, in_dim]``; ``dropout_masks`` holds one mask per layer
    input and is ignored unless ``train`` is set. Returns the new state and
    the top layer's hidden output.
    """
    if x.shape[-1] != params[0].in_dim:
        raise ShapeError(f"lstm_step: input width {x.shape[-1]} but layer 0 expects {params[0].in_dim}")
    h_out, c_out = [], []
    inp = x
    for layer, p in enumerate(params):
        if train and dropout_masks is not None:
            inp = T.mul(inp, dropout_masks[layer])
        n = p.cells
        z = T.add(
            T.add(T.matmul(inp, T.transpose(p.w_x)), T.matmul(prev.h[layer], T.transpose(p.w_h))),
            p.bias,
        )
        gates = T.sigmoid(T.getitem(z, (Ellipsis, slice(0, 2 * n))))
        i = T.getitem(gates, (Ellipsis, slice(0, n)))
        f = T.getitem(gates, (Ellipsis, slice(n, 2 * n)))
        g = T.tanh(T.getitem(z, (Ellipsis, slice(2 * n, 3 * n))))
        o = T.sigmoid(T.getitem(z, (Ellipsis, slice(3 * n, 4 * n))))
        c = T.add(T.mul(f, prev.c[layer]), T.mul(i, g))
        h = T.mul(o, T.tanh(c))
        h_out.append(h)
        c_out.append(c)
        inp = h
    return LstmState(h=h_out, c=c_out), h_out[-1]


def carry(new, old, keep):
    """
    Row-wise select: rows where ``keep`` is true take ``new``, the rest keep
    ``old``. Used so right-padded positions leave a sequence's state alone.
    """
    if keep.all():
        return new
    m = Tensor(keep.astype(np.float64)[:, None])
    inv = Tensor(1.0 - m.data)

    def pick(a, b):
        return T.add(T.mul(a, m), T.mul(b, inv))

    return LstmState(
        h=[pick(a, b) for a, b in zip(new.h, old.h)],
        c=[pick(a, b) for a, b in zip(new.c, old.c)],
    )
