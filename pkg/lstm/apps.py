from django.apps import AppConfig


class LstmConfig(AppConfig):
    name = 'lstm'
    verbose_name = 'Stacked LSTM'
