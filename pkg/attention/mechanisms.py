"""
Attention over the encoder's top-layer states.

All functions work on a batch: ``h_t`` is ``[B, n]`` and the encoder
states ``[B, S, n]`` with a ``[B, S]`` validity mask; a single sentence is
the B = 1 case. Source positions are 0-based and include the terminator.
"""
import logging
from dataclasses import dataclass

import numpy as np

from core_math import tensor as T
from core_math.exceptions import ShapeError
from core_math.tensor import Tensor

from .config import Mechanism, Score

logger = logging.getLogger(__name__)


@dataclass
class AttentionParams:
    """Only the tensors the configuration asks for are present."""
    w_c: Tensor                 # [n, 2n]
    w_a: Tensor = None          # general [n, n]; concat [n_a, 2n]; location [s_max, n]
    v_a: Tensor = None          # concat [n_a]
    w_p: Tensor = None          # local-p [n_p, n]
    v_p: Tensor = None          # local-p [n_p]

    def named(self, prefix='attention'):
        return {
            f"{prefix}.{name}": tensor
            for name, tensor in (('w_c', self.w_c), ('w_a', self.w_a), ('v_a', self.v_a),
                                 ('w_p', self.w_p), ('v_p', self.v_p))
            if tensor is not None
        }

    @classmethod
    def from_named(cls, tensors, prefix='attention'):
        return cls(**{
            name: tensors.get(f"{prefix}.{name}")
            for name in ('w_c', 'w_a', 'v_a', 'w_p', 'v_p')
        })


def init_attention_params(config, cells, rng, scale=0.1):
    def uniform(*shape):
        return Tensor(rng.uniform(-scale, scale, size=shape))

    params = AttentionParams(w_c=uniform(cells, 2 * cells))
    if config.score == Score.GENERAL:
        params.w_a = uniform(cells, cells)
    elif config.score == Score.CONCAT:
        # full W_a over [h_t; h_s], inner width n_a = n
        params.w_a = uniform(cells, 2 * cells)
        params.v_a = uniform(cells)
    elif config.score == Score.LOCATION:
        params.w_a = uniform(config.s_max, cells)
    if config.mechanism == Mechanism.LOCAL_P:
        params.w_p = uniform(cells, cells)
        params.v_p = uniform(cells)
    return params


@dataclass
class EncoderMemory:
    """
    Encoder states plus per-score keys computed once per sentence.

    For ``general`` the keys are ``W_a h_s``; for ``concat`` they are the
    source half of ``W_a [h_t; h_s]``.
    """
    states: Tensor       # [B, S, n]
    mask: np.ndarray     # [B, S]
    keys: Tensor = None

    @property
    def lengths(self):
        return self.mask.sum(axis=1)

    @property
    def source_len(self):
        return self.mask.shape[1]


def prepare_memory(states, mask, params, config):
    if states.shape[1] == 0:
        raise ShapeError('attention needs at least one source state')
    memory = EncoderMemory(states=states, mask=np.asarray(mask, dtype=bool))
    if config is None:
        return memory
    n = states.shape[-1]
    if config.score == Score.GENERAL:
        memory.keys = T.matmul(states, T.transpose(params.w_a))
    elif config.score == Score.CONCAT:
        w_source = T.getitem(params.w_a, (slice(None), slice(n, 2 * n)))
        memory.keys = T.matmul(states, T.transpose(w_source))
    return memory


@dataclass
class AttentionOutput:
    weights: Tensor          # a_t, [B, S]
    context: Tensor          # c_t, [B, n]
    attentional: Tensor      # h~_t, [B, n]
    position: Tensor = None  # p_t, [B], local-p only
    support: np.ndarray = None  # [B, S] positions allowed to carry weight


def score(h_t, h_s, params, kind):
    """Content score of one target state against one source state."""
    h_t, h_s = T.as_tensor(h_t), T.as_tensor(h_s)
    if h_t.shape != h_s.shape:
        raise ShapeError(f"score: target state {h_t.shape} and source state {h_s.shape} differ")
    if kind == Score.DOT:
        return T.matmul(h_t, h_s)
    if kind == Score.GENERAL:
        return T.matmul(h_t, T.matmul(params.w_a, h_s))
    if kind == Score.CONCAT:
        return T.matmul(T.tanh(T.matmul(params.w_a, T.concat(h_t, h_s))), params.v_a)
    raise ShapeError(f"score: {kind!r} is not a content score")


def content_scores(h_t, memory, params, kind):
    """``[B, S]`` scores of ``h_t`` against every source state."""
    if kind == Score.DOT:
        return T.contract('bsn,bn->bs', memory.states, h_t)
    if kind == Score.GENERAL:
        return T.contract('bsn,bn->bs', memory.keys, h_t)
    if kind == Score.CONCAT:
        n = h_t.shape[-1]
        w_target = T.getitem(params.w_a, (slice(None), slice(0, n)))
        query = T.matmul(h_t, T.transpose(w_target))
        hidden = T.tanh(T.add(memory.keys, T.reshape(query, (query.shape[0], 1, query.shape[1]))))
        return T.matmul(hidden, params.v_a)
    raise ShapeError(f"content_scores: {kind!r} is not a content score")


def _combine(weights, h_t, memory, params):
    context = T.contract('bs,bsn->bn', weights, memory.states)
    attentional = T.tanh(T.matmul(T.concat(context, h_t), T.transpose(params.w_c)))
    return context, attentional


def global_attend(h_t, memory, params, config):
    """Attend to every valid source position (content or location scores)."""
    valid = memory.mask
    if config.score == Score.LOCATION:
        logits = T.matmul(h_t, T.transpose(params.w_a))  # [B, s_max]
        s, s_max = memory.source_len, config.s_max
        if s <= s_max:
            logits = T.getitem(logits, (slice(None), slice(0, s)))
        else:
            # positions past s_max cannot be addressed and stay masked
            logits = T.concat(logits, Tensor(np.zeros((logits.shape[0], s - s_max))), axis=1)
        valid = valid & (np.arange(s) < s_max)[None, :]
    else:
        logits = content_scores(h_t, memory, params, config.score)
    weights = T.softmax(logits, mask=valid)
    context, attentional = _combine(weights, h_t, memory, params)
    return AttentionOutput(weights=weights, context=context, attentional=attentional, support=valid)


def window_mask(centers, lengths, source_len, window):
    """Integer positions within ``window`` of each row's center, clipped to the sentence."""
    positions = np.arange(source_len)[None, :]
    centers = np.asarray(centers)[:, None]
    inside = np.abs(positions - centers) <= window
    return inside & (positions < np.asarray(lengths)[:, None])


def predict_position(h_t, lengths, params):
    """p_t = S * sigmoid(v_p^T tanh(W_p h_t)), one real position per row."""
    z = T.matmul(T.tanh(T.matmul(h_t, T.transpose(params.w_p))), params.v_p)
    return T.mul(T.sigmoid(z), Tensor(np.asarray(lengths, dtype=np.float64)))


def local_attend(h_t, memory, params, config, t):
    """
    Attend inside ``[p_t - D, p_t + D]``.

    local-m uses p_t = t. local-p predicts p_t, centres the window on
    round-half-up(p_t) and multiplies the window softmax by a Gaussian
    exp(-(s - p_t)^2 / (2 sigma^2)), sigma = D/2, without renormalizing.
    Gradients reach W_p and v_p through the Gaussian only.
    """
    lengths = memory.lengths
    scores = content_scores(h_t, memory, params, config.score)
    if config.mechanism == Mechanism.LOCAL_M:
        centers = np.clip(np.full(len(lengths), t), 0, lengths - 1)
        support = window_mask(centers, lengths, memory.source_len, config.window)
        weights = T.softmax(scores, mask=support)
        context, attentional = _combine(weights, h_t, memory, params)
        return AttentionOutput(weights=weights, context=context, attentional=attentional, support=support)

    position = predict_position(h_t, lengths, params)
    centers = np.clip(np.floor(position.data + 0.5), 0, lengths - 1).astype(int)
    support = window_mask(centers, lengths, memory.source_len, config.window)
    aligned = T.softmax(scores, mask=support)
    offsets = T.sub(
        Tensor(np.arange(memory.source_len, dtype=np.float64)[None, :]),
        T.reshape(position, (position.shape[0], 1)),
    )
    gaussian = T.exp(T.scale(T.mul(offsets, offsets), -1.0 / (2.0 * config.sigma ** 2)))
    weights = T.mul(aligned, gaussian)
    context, attentional = _combine(weights, h_t, memory, params)
    return AttentionOutput(
        weights=weights, context=context, attentional=attentional, position=position, support=support,
    )


def attend(h_t, memory, params, config, t):
    if config.is_local:
        return local_attend(h_t, memory, params, config, t)
    return global_attend(h_t, memory, params, config)
