from django.apps import AppConfig


class NmtConfig(AppConfig):
    name = 'nmt'
    verbose_name = 'Encoder-decoder model'
