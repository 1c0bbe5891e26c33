from django.apps import AppConfig


class CoreMathConfig(AppConfig):
    name = 'core_math'
    verbose_name = 'Tensor arithmetic and reverse-mode gradients'
