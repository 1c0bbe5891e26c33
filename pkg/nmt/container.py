"""
Single-file model container.

Layout::

    b"NMTMODEL"                      8 bytes
    manifest length                  unsigned 64-bit, little-endian
    manifest                         UTF-8 JSON
    parameter data                   raw little-endian IEEE-754, in manifest order

The manifest records, for every parameter, its name, shape, scalar width
(``<f8`` or ``<f4``), byte offset relative to the start of the data block and
byte count. It also carries the gate order of the LSTM blocks, the model
hyperparameters and both vocabularies, so a container is all that decoding
needs. Parameter naming:

    src_embedding, tgt_embedding            [V, n]
    encoder.{l}.w_x / w_h / bias            [4n, in] / [4n, n] / [4n]
    decoder.{l}.w_x / w_h / bias            layer 0 input is 2n with input feeding
    attention.w_c                           [n, 2n]
    attention.w_a / v_a / w_p / v_p         when the configuration uses them
    output.w_s                              [V_tgt, n]

Nothing time- or host-dependent is written; equal models give equal bytes.
"""
import json
import logging
import struct
from pathlib import Path

import numpy as np

from core_math.exceptions import DataError
from core_math.tensor import Tensor
from corpus.vocab import Vocabulary
from lstm.cell import GATE_ORDER

from .network import ModelSpec, NmtModel

logger = logging.getLogger(__name__)

MAGIC = b'NMTMODEL'
FORMAT_VERSION = 1
DTYPES = {'<f8': np.dtype('<f8'), '<f4': np.dtype('<f4')}


def build_manifest(model, dtype='<f8'):
    if dtype not in DTYPES:
        raise DataError(f"unsupported storage width {dtype!r}; expected one of {sorted(DTYPES)}")
    width = DTYPES[dtype].itemsize
    entries, offset = [], 0
    for name, tensor in model.parameters().items():
        nbytes = tensor.size * width
        entries.append({
            'name': name,
            'shape': list(tensor.shape),
            'dtype': dtype,
            'offset': offset,
            'nbytes': nbytes,
        })
        offset += nbytes
    return {
        'format': 'nmt-container',
        'version': FORMAT_VERSION,
        'byte_order': 'little',
        'gate_order': list(GATE_ORDER),
        'spec': model.spec.as_dict(),
        'source_vocab': list(model.source_vocab.tokens),
        'target_vocab': list(model.target_vocab.tokens),
        'parameters': entries,
    }


def to_bytes(model, dtype='<f8'):
    manifest = build_manifest(model, dtype)
    header = json.dumps(manifest, sort_keys=True, separators=(',', ':')).encode('utf-8')
    chunks = [MAGIC, struct.pack('<Q', len(header)), header]
    for entry in manifest['parameters']:
        array = model.parameters()[entry['name']].data
        chunks.append(np.ascontiguousarray(array, dtype=DTYPES[dtype]).tobytes())
    return b''.join(chunks)


def save_model(model, path, dtype='<f8'):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = to_bytes(model, dtype)
    path.write_bytes(payload)
    logger.info(f"Saved model to {path} ({len(payload)} bytes, {dtype})")
    return path


def read_manifest(payload):
    if payload[:len(MAGIC)] != MAGIC:
        raise DataError('not a model container (bad magic)')
    start = len(MAGIC) + 8
    if len(payload) < start:
        raise DataError('model container is truncated')
    (length,) = struct.unpack('<Q', payload[len(MAGIC):start])
    try:
        manifest = json.loads(payload[start:start + length].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"model container manifest is unreadable: {exc}") from exc
    if manifest.get('version') != FORMAT_VERSION:
        raise DataError(f"unsupported container version {manifest.get('version')}")
    if tuple(manifest.get('gate_order', ())) != GATE_ORDER:
        raise DataError(f"container gate order {manifest.get('gate_order')} differs from {list(GATE_ORDER)}")
    return manifest, start + length


def from_bytes(payload):
    manifest, data_start = read_manifest(payload)
    params = {}
    for entry in manifest['parameters']:
        dtype = DTYPES.get(entry['dtype'])
        if dtype is None:
            raise DataError(f"parameter {entry['name']} has unsupported width {entry['dtype']}")
        begin = data_start + entry['offset']
        raw = payload[begin:begin + entry['nbytes']]
        if len(raw) != entry['nbytes']:
            raise DataError(f"model container is truncated inside {entry['name']}")
        array = np.frombuffer(raw, dtype=dtype).astype(np.float64).reshape(entry['shape'])
        params[entry['name']] = Tensor(array)
    try:
        spec = ModelSpec.from_dict(manifest['spec'])
        source_vocab = Vocabulary(manifest['source_vocab'])
        target_vocab = Vocabulary(manifest['target_vocab'])
        return NmtModel(spec, source_vocab, target_vocab, params)
    except (KeyError, TypeError) as exc:
        raise DataError(f"model container manifest is incomplete: {exc}") from exc


def load_model(path):
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    model = from_bytes(payload)
    logger.debug(f"Loaded model {path}: {model.spec}")
    return model
