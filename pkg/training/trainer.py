"""
Plain mini-batch SGD with global-norm clipping.

The update direction is the gradient of the batch's summed loss divided by
the number of sentences in the batch, or by its number of target tokens
with ``loss_normalization='token'``. Parameter updates run on one thread
in a fixed order, so a seed fixes the run.
"""
import logging
import math
import shutil
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from core_math.exceptions import NumericalError
from core_math.tensor import Tape
from corpus.pairs import make_batches
from nmt.container import save_model
from nmt.network import evaluate_perplexity, sequence_loss

from .schedule import lr_at

logger = logging.getLogger(__name__)

LOG_COLUMNS = ('epoch', 'loss', 'ppl', 'ln_ppl', 'lr', 'seconds')


def global_norm(gradients):
    """L2 norm of all gradients taken as one vector."""
    return math.sqrt(sum(float(np.vdot(g, g)) for g in gradients.values()))


def clip_and_step(params, gradients, lr, clip_norm):
    """
    Rescale ``gradients`` jointly so their global norm is at most
    ``clip_norm``, then move every parameter by ``-lr * gradient`` in place.
    Returns ``(norm before clipping, norm after clipping)``.
    """
    for name, grad in gradients.items():
        if grad.shape != params[name].shape:
            raise NumericalError(f"gradient for {name} has shape {grad.shape}, parameter {params[name].shape}")
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite gradient for {name}")
    norm = global_norm(gradients)
    factor = clip_norm / norm if norm > clip_norm else 1.0
    for name, grad in gradients.items():
        params[name].data -= lr * factor * grad
    return norm, norm * factor


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float     # mean training loss per target token
    ppl: float      # held-out perplexity
    ln_ppl: float
    lr: float
    seconds: float

    def row(self, include_time=True):
        values = [f"{self.epoch}", f"{self.loss:.6f}", f"{self.ppl:.6f}", f"{self.ln_ppl:.6f}", f"{self.lr:g}"]
        if include_time:
            values.append(f"{self.seconds:.2f}")
        return '\t'.join(values)


@dataclass
class TrainLog:
    """Append-only; one record per completed epoch."""
    records: list = field(default_factory=list)

    def append(self, record):
        if self.records and record.epoch != self.records[-1].epoch + 1:
            raise ValueError(f"epoch {record.epoch} does not follow {self.records[-1].epoch}")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def last(self):
        return self.records[-1] if self.records else None

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    def to_tsv(self, include_time=True):
        columns = LOG_COLUMNS if include_time else LOG_COLUMNS[:-1]
        lines = ['\t'.join(columns)] + [r.row(include_time) for r in self.records]
        return '\n'.join(lines) + '\n'

    def write(self, path):
        Path(path).write_text(self.to_tsv(), encoding='utf-8')

    def as_dicts(self):
        return [asdict(r) for r in self.records]


def train_batch(model, batch, lr, clip_norm, rng, epoch=None, batch_index=None, normalization='sentence'):
    """Forward, backward and one clipped SGD step. Returns the batch's summed loss."""
    params = model.parameters()
    model.requires_grad_(True)
    model.zero_grad()
    with Tape() as tape:
        result = sequence_loss(model, batch, train=True, rng=rng)
    loss = result.loss.item()
    if not math.isfinite(loss):
        logger.error(f"Non-finite loss {loss} at epoch {epoch}, batch {batch_index}")
        raise NumericalError(
            f"non-finite loss at epoch {epoch}, batch {batch_index}", epoch=epoch, batch_index=batch_index,
        )
    divisor = result.tokens if normalization == 'token' else batch.size
    tape.backward(result.loss, seed=1.0 / divisor)
    gradients = {
        name: (t.grad if t.grad is not None else np.zeros(t.shape))
        for name, t in params.items()
    }
    try:
        clip_and_step(params, gradients, lr, clip_norm)
    except NumericalError as exc:
        logger.error(f"{exc} at epoch {epoch}, batch {batch_index}")
        raise NumericalError(f"{exc} at epoch {epoch}, batch {batch_index}",
                             epoch=epoch, batch_index=batch_index) from exc
    model.requires_grad_(False)
    return loss, result.tokens


def save_checkpoint(model, output_dir, epoch):
    output_dir = Path(output_dir)
    path = save_model(model, output_dir / f"epoch{epoch}.nmt")
    shutil.copyfile(path, output_dir / 'latest.nmt')
    return path


def train(model, train_pairs, eval_pairs, config, output_dir=None, rng=None, on_epoch=None):
    """
    Run ``config.epochs`` epochs of shuffled mini-batch SGD.

    After every epoch the held-out perplexity is measured, a record is
    appended to the returned ``TrainLog`` and, with ``output_dir``, the
    model is written to ``epoch<N>.nmt`` (and copied to ``latest.nmt``)
    next to ``train_log.tsv``. The model is trained, and saved, with
    ``config.dropout``.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    if model.spec.dropout != config.dropout:
        logger.info(f"Training with dropout {config.dropout} (model spec had {model.spec.dropout})")
        model.spec = replace(model.spec, dropout=config.dropout)
    log = TrainLog()
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        lr = lr_at(config, epoch)
        batches = make_batches(train_pairs, config.batch_size, max_len=config.max_len, rng=rng)
        total, tokens = 0.0, 0
        for index, batch in enumerate(batches):
            loss, count = train_batch(
                model, batch, lr, config.clip_norm, rng, epoch, index, config.loss_normalization,
            )
            total += loss
            tokens += count
            logger.debug(f"epoch {epoch} batch {index}: loss/token {loss / count:.4f}")
        ppl = evaluate_perplexity(model, eval_pairs, config.batch_size) if eval_pairs else float('nan')
        record = EpochRecord(
            epoch=epoch,
            loss=total / tokens if tokens else float('nan'),
            ppl=ppl,
            ln_ppl=math.log(ppl) if ppl > 0 else float('nan'),
            lr=lr,
            seconds=time.perf_counter() - started,
        )
        log.append(record)
        logger.info(
            f"Epoch {epoch}/{config.epochs}: loss {record.loss:.4f} ppl {record.ppl:.3f} "
            f"lr {lr:g} ({record.seconds:.1f}s)"
        )
        if output_dir is not None:
            save_checkpoint(model, output_dir, epoch)
            log.write(Path(output_dir) / 'train_log.tsv')
        if on_epoch is not None:
            on_epoch(record)
    return log
