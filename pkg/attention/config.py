from dataclasses import dataclass

from django.db import models

from core_math.exceptions import ConfigError


class Mechanism(models.TextChoices):
    GLOBAL = 'global', 'Global'
    LOCAL_M = 'local_m', 'Local, monotonic'
    LOCAL_P = 'local_p', 'Local, predictive'


class Score(models.TextChoices):
    DOT = 'dot', 'Dot'
    GENERAL = 'general', 'General'
    CONCAT = 'concat', 'Concat'
    LOCATION = 'location', 'Location'


CONTENT_SCORES = (Score.DOT, Score.GENERAL, Score.CONCAT)


@dataclass(frozen=True)
class AttentionConfig:
    """
    Which attention the decoder uses.

    ``window`` is the half-width D of local windows (sigma = D/2);
    ``s_max`` is the number of source positions the location score can
    address.
    """
    mechanism: str = Mechanism.GLOBAL
    score: str = Score.DOT
    window: int = 10
    s_max: int = 50

    def __post_init__(self):
        if self.mechanism not in Mechanism.values:
            raise ConfigError(f"unknown attention mechanism {self.mechanism!r}; expected one of {Mechanism.values}")
        if self.score not in Score.values:
            raise ConfigError(f"unknown score function {self.score!r}; expected one of {Score.values}")
        if self.is_local:
            if self.score == Score.LOCATION:
                raise ConfigError(
                    f"{self.mechanism} attention requires a content score (dot, general or concat); "
                    f"the location score is only defined for global attention"
                )
            if self.window < 1:
                raise ConfigError(f"local attention requires window D >= 1, got {self.window}")
        if self.score == Score.LOCATION and self.s_max < 1:
            raise ConfigError(f"location score requires s_max >= 1, got {self.s_max}")

    @classmethod
    def parse(cls, mechanism, score, window=10, s_max=50):
        return cls(
            mechanism=str(mechanism).replace('-', '_'),
            score=str(score),
            window=window,
            s_max=s_max,
        )

    @property
    def is_local(self):
        return self.mechanism in (Mechanism.LOCAL_M, Mechanism.LOCAL_P)

    @property
    def sigma(self):
        return self.window / 2.0

    @property
    def label(self):
        return f"{self.mechanism.replace('_', '-')} ({self.score})"
