"""
Resolved run configuration.

Values come from ``settings.NMT_DEFAULTS``, then an optional flat
key=value file, then command-line flags; later sources win. Every run
writes the resolved values back out so it can be repeated exactly.
"""
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import environ
from django.conf import settings

from attention.config import AttentionConfig
from core_math.exceptions import ConfigError, DataError
from nmt.network import ModelSpec
from training.schedule import TrainerConfig

logger = logging.getLogger(__name__)

NO_ATTENTION = 'none'


@dataclass
class RunConfig:
    subcommand: str
    seed: int
    layers: int
    cells: int
    vocab_size: int
    max_len: int
    batch_size: int
    epochs: int
    halve_after: int
    lr: float
    clip_norm: float
    loss_normalization: str
    dropout: float
    dropout_epochs: int
    dropout_halve_after: int
    attention: str
    score: str
    window: int
    s_max: int
    input_feeding: bool
    reverse_source: bool
    init_scale: float
    decode_max_len: int
    paths: dict = field(default_factory=dict)

    def validate(self):
        for name in ('layers', 'cells', 'vocab_size', 'max_len', 'batch_size', 'epochs', 'decode_max_len'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr <= 0 or self.clip_norm <= 0 or self.init_scale <= 0:
            raise ConfigError('lr, clip_norm and init_scale must be positive')
        if self.vocab_size < 3:
            raise ConfigError(f"vocab_size must be at least 3, got {self.vocab_size}")
        # Both of these raise ConfigError with the violated invariant spelled out.
        self.trainer_config()
        self.attention_config()
        return self

    def attention_config(self):
        if self.attention == NO_ATTENTION:
            return None
        return AttentionConfig.parse(self.attention, self.score, window=self.window, s_max=self.s_max)

    def trainer_config(self):
        return TrainerConfig(
            epochs=self.epochs,
            lr=self.lr,
            halve_after=self.halve_after,
            clip_norm=self.clip_norm,
            batch_size=self.batch_size,
            dropout=self.dropout,
            max_len=self.max_len,
            seed=self.seed,
            loss_normalization=self.loss_normalization,
        )

    def model_spec(self, src_vocab_size, tgt_vocab_size):
        return ModelSpec(
            layers=self.layers,
            cells=self.cells,
            src_vocab_size=src_vocab_size,
            tgt_vocab_size=tgt_vocab_size,
            attention=self.attention_config(),
            input_feeding=self.input_feeding,
            reverse_source=self.reverse_source,
            dropout=self.dropout,
        )

    def lines(self):
        out = [f"# subcommand={self.subcommand}"]
        out += [f"# {key}={value}" for key, value in sorted(self.paths.items())]
        for f in fields(self):
            if f.name in ('subcommand', 'paths'):
                continue
            out.append(f"{f.name}={getattr(self, f.name)}")
        return out

    def echo_to(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        return self._write(directory / 'run_config.txt')

    def echo_next_to(self, path):
        return self._write(Path(f"{path}.run_config.txt"))

    def _write(self, path):
        path.write_text('\n'.join(self.lines()) + '\n', encoding='utf-8')
        logger.debug(f"Resolved configuration written to {path}")
        return path


def _config_keys():
    return {f.name: f.type for f in fields(RunConfig) if f.name not in ('subcommand', 'paths')}


def read_config_file(path):
    """Parse a key=value file into typed values. Unknown keys are rejected."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"configuration file {path} does not exist")
    # A private Env class so nothing leaks into os.environ.
    env_cls = type('RunConfigEnv', (environ.Env,), {'ENVIRON': {}})
    env_cls.read_env(str(path), overwrite=True)
    env = env_cls()
    keys = _config_keys()
    unknown = sorted(set(env_cls.ENVIRON) - set(keys))
    if unknown:
        raise ConfigError(f"unknown keys in {path}: {', '.join(unknown)}")
    casts = {int: env.int, float: env.float, bool: env.bool, str: env.str}
    try:
        return {key: casts[keys[key]](key) for key in env_cls.ENVIRON}
    except ValueError as exc:
        raise ConfigError(f"bad value in {path}: {exc}") from exc


def resolve(subcommand, config_file=None, overrides=None, paths=None):
    values = dict(settings.NMT_DEFAULTS)
    explicit = set()
    if config_file:
        from_file = read_config_file(config_file)
        values.update(from_file)
        explicit.update(from_file)
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
            explicit.add(key)
    if values['dropout'] > 0:
        # Dropout runs train longer and start halving later.
        if 'epochs' not in explicit:
            values['epochs'] = values['dropout_epochs']
        if 'halve_after' not in explicit:
            values['halve_after'] = values['dropout_halve_after']
    values['attention'] = str(values['attention']).replace('-', '_')
    config = RunConfig(subcommand=subcommand, paths=dict(paths or {}), **values)
    return config.validate()
