from django.apps import AppConfig


class AttentionAppConfig(AppConfig):
    name = 'attention'
    verbose_name = 'Global and local attention'
