"""
Encoder-decoder with optional attention and input feeding.

The decoder starts from the encoder's final state at every layer, reads the
end-of-sentence id as its first input and a zero feed vector as h~_{-1}.
With input feeding, layer 0 of the decoder sees ``[embedding; h~_{t-1}]``
(width 2n); without it, the embedding alone (width n).
"""
import logging
from dataclasses import dataclass

import numpy as np

from attention.config import AttentionConfig
from attention.mechanisms import AttentionParams, attend, init_attention_params, prepare_memory
from core_math import tensor as T
from core_math.exceptions import ShapeError
from core_math.tensor import Tensor
from corpus.pairs import make_batches
from corpus.vocab import EOS_ID
from lstm.cell import LstmLayerParams, LstmState, carry, init_params, lstm_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelSpec:
    layers: int
    cells: int
    src_vocab_size: int
    tgt_vocab_size: int
    attention: AttentionConfig = None
    input_feeding: bool = True
    reverse_source: bool = True
    dropout: float = 0.0

    @property
    def decoder_input_width(self):
        return 2 * self.cells if self.input_feeding else self.cells

    def as_dict(self):
        attention = None
        if self.attention is not None:
            attention = {
                'mechanism': str(self.attention.mechanism),
                'score': str(self.attention.score),
                'window': self.attention.window,
                's_max': self.attention.s_max,
            }
        return {
            'layers': self.layers,
            'cells': self.cells,
            'src_vocab_size': self.src_vocab_size,
            'tgt_vocab_size': self.tgt_vocab_size,
            'attention': attention,
            'input_feeding': self.input_feeding,
            'reverse_source': self.reverse_source,
            'dropout': self.dropout,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if data.get('attention'):
            data['attention'] = AttentionConfig(**data['attention'])
        return cls(**data)


class NmtModel:
    """Parameters live in one ordered name -> Tensor mapping; layers are views on it."""

    def __init__(self, spec, source_vocab, target_vocab, params):
        self.spec = spec
        self.source_vocab = source_vocab
        self.target_vocab = target_vocab
        self.params = dict(params)
        self._check_shapes()

    @classmethod
    def initialize(cls, spec, source_vocab, target_vocab, rng, init_scale=0.1):
        """Every parameter uniform in [-init_scale, init_scale], drawn in a fixed order."""
        n = spec.cells
        params = {
            'src_embedding': Tensor(rng.uniform(-init_scale, init_scale, size=(spec.src_vocab_size, n))),
            'tgt_embedding': Tensor(rng.uniform(-init_scale, init_scale, size=(spec.tgt_vocab_size, n))),
        }
        for layer, p in enumerate(init_params(spec.layers, n, n, rng, init_scale)):
            params.update(p.named(f"encoder.{layer}"))
        for layer, p in enumerate(init_params(spec.layers, n, spec.decoder_input_width, rng, init_scale)):
            params.update(p.named(f"decoder.{layer}"))
        if spec.attention is not None:
            params.update(init_attention_params(spec.attention, n, rng, init_scale).named())
        params['output.w_s'] = Tensor(rng.uniform(-init_scale, init_scale, size=(spec.tgt_vocab_size, n)))
        return cls(spec, source_vocab, target_vocab, params)

    def _check_shapes(self):
        n = self.spec.cells
        expected = {
            'src_embedding': (self.spec.src_vocab_size, n),
            'tgt_embedding': (self.spec.tgt_vocab_size, n),
            'decoder.0.w_x': (4 * n, self.spec.decoder_input_width),
            'output.w_s': (self.spec.tgt_vocab_size, n),
        }
        for name, shape in expected.items():
            if name not in self.params or self.params[name].shape != shape:
                found = self.params[name].shape if name in self.params else None
                raise ShapeError(f"parameter {name}: expected {shape}, found {found}")

    def _layers(self, prefix):
        return [
            LstmLayerParams(
                w_x=self.params[f"{prefix}.{layer}.w_x"],
                w_h=self.params[f"{prefix}.{layer}.w_h"],
                bias=self.params[f"{prefix}.{layer}.bias"],
            )
            for layer in range(self.spec.layers)
        ]

    @property
    def encoder(self):
        return self._layers('encoder')

    @property
    def decoder(self):
        return self._layers('decoder')

    @property
    def attention(self):
        if self.spec.attention is None:
            return None
        return AttentionParams.from_named(self.params)

    def parameters(self):
        return self.params

    def zero_grad(self):
        for tensor in self.params.values():
            tensor.zero_grad()

    def requires_grad_(self, flag=True):
        for tensor in self.params.values():
            tensor.requires_grad = flag
        return self


@dataclass
class EncoderOutput:
    memory: object   # attention.mechanisms.EncoderMemory
    final: object    # lstm.cell.LstmState


@dataclass
class StepOutput:
    log_probs: Tensor        # [B, V_tgt]
    attention: object        # AttentionOutput or None
    state: object            # LstmState
    feed: Tensor             # h~_t, [B, n]


def _dropout_masks(model, widths, batch, rng, train):
    p = model.spec.dropout
    if not train or p == 0.0:
        return None
    return [T.dropout_mask((batch, w), p, rng) for w in widths]


def encode(model, source, source_mask=None, train=False, rng=None):
    """
    Run the encoder over ``source`` ids ``[B, S]`` (terminator included).

    Returns one top-layer state per position and the final full state; on
    right-padded rows the state stops changing after the row's last token.
    """
    source = np.atleast_2d(np.asarray(source))
    if source.shape[1] == 0:
        raise ShapeError('encode: empty source')
    if source_mask is None:
        source_mask = np.ones(source.shape, dtype=bool)
    batch, n = source.shape[0], model.spec.cells
    state = LstmState.zeros(model.spec.layers, n, batch)
    layers = model.encoder
    tops = []
    for s in range(source.shape[1]):
        x = T.getitem(model.params['src_embedding'], source[:, s])
        masks = _dropout_masks(model, [n] * model.spec.layers, batch, rng, train)
        new_state, _ = lstm_step(layers, state, x, masks, train)
        state = carry(new_state, state, source_mask[:, s])
        tops.append(state.top)
    states = T.stack(tops, axis=1)
    memory = prepare_memory(states, source_mask, model.attention, model.spec.attention)
    return EncoderOutput(memory=memory, final=state)


def initial_feed(model, batch):
    return Tensor(np.zeros((batch, model.spec.cells)))


def decode_step(model, state, prev_ids, prev_feed, memory, t, train=False, rng=None):
    """One decoder step: embed, (feed), stacked LSTM, attention, log-softmax."""
    prev_ids = np.atleast_1d(np.asarray(prev_ids))
    batch, n = prev_ids.shape[0], model.spec.cells
    x = T.getitem(model.params['tgt_embedding'], prev_ids)
    if model.spec.input_feeding:
        x = T.concat(x, prev_feed, axis=-1)
    widths = [model.spec.decoder_input_width] + [n] * (model.spec.layers - 1)
    masks = _dropout_masks(model, widths, batch, rng, train)
    state, top = lstm_step(model.decoder, state, x, masks, train)
    if train and model.spec.dropout > 0.0:
        top = T.mul(top, T.dropout_mask((batch, n), model.spec.dropout, rng))
    attention_out = None
    if model.spec.attention is not None:
        attention_out = attend(top, memory, model.attention, model.spec.attention, t)
        feed = attention_out.attentional
    else:
        feed = top
    logits = T.matmul(feed, T.transpose(model.params['output.w_s']))
    return StepOutput(log_probs=T.log_softmax(logits), attention=attention_out, state=state, feed=feed)


@dataclass
class LossResult:
    loss: Tensor     # summed negative log-likelihood, scalar
    tokens: int      # predicted target tokens, terminators included
    records: list    # AttentionOutput per step (None entries without attention)

    @property
    def perplexity(self):
        return float(np.exp(self.loss.item() / self.tokens))


def sequence_loss(model, batch, train=False, rng=None):
    """
    Teacher-forced loss: step t reads gold y_{t-1} (the terminator at t=0)
    and pays -log p(y_t). Padded target positions cost nothing.
    """
    encoded = encode(model, batch.source, batch.source_mask, train, rng)
    state = encoded.final
    feed = initial_feed(model, batch.size)
    rows = np.arange(batch.size)
    step_losses, records = [], []
    for t in range(batch.target.shape[1]):
        prev = np.full(batch.size, EOS_ID) if t == 0 else batch.target[:, t - 1]
        out = decode_step(model, state, prev, feed, encoded.memory, t, train, rng)
        picked = T.getitem(out.log_probs, (rows, batch.target[:, t]))
        step_losses.append(T.reduce_sum(T.mul(picked, Tensor(batch.target_mask[:, t].astype(np.float64)))))
        records.append(out.attention)
        state, feed = out.state, out.feed
    loss = T.scale(T.reduce_sum(T.stack(step_losses)), -1.0)
    return LossResult(loss=loss, tokens=batch.token_count, records=records)


def evaluate_perplexity(model, pairs, batch_size=32, max_len=None):
    """
    Perplexity ``exp(total NLL / total target tokens)`` over ``pairs`` in
    evaluation mode; no tape is recorded.
    """
    max_len = max_len if max_len is not None else max(
        max(p.source_length, p.target_length) for p in pairs
    )
    total, tokens = 0.0, 0
    for batch in make_batches(pairs, batch_size, max_len=max_len):
        result = sequence_loss(model, batch, train=False)
        total += result.loss.item()
        tokens += result.tokens
    if tokens == 0:
        return float('nan')
    return float(np.exp(total / tokens))
