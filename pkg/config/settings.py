"""
Django settings for the attention NMT toolkit.

The project has no web surface: Django provides the settings layer, the
management-command runner, the template engine used for SVG heatmaps and
the test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import environ
import os
from pathlib import Path

env = environ.Env(
    # set casting, default value
    DEBUG=(bool, False),
    NMT_LOG_LEVEL=(str, 'INFO'),
    NMT_SEED=(int, 1234),
)

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Take environment variables from .env file
environ.Env.read_env(os.path.join(BASE_DIR, '.env'))

# Nothing is signed or served; Django still requires a key.
SECRET_KEY = env('SECRET_KEY', default='nmt-toolkit-local-key')

DEBUG = env('DEBUG')

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'core_math',
    'corpus',
    'lstm',
    'attention',
    'nmt',
    'training',
    'decoding',
    'evaluation',
    'cli',
]

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            # SVG output is markup we build ourselves; labels are escaped
            # by the template engine as usual.
            'context_processors': [],
        },
    },
]

# No models are stored anywhere; tests are SimpleTestCase only.
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Logging
# https://docs.djangoproject.com/en/5.2/topics/logging/

NMT_LOG_LEVEL = env('NMT_LOG_LEVEL')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '%(asctime)s %(levelname)s %(name)s %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        app: {
            'handlers': ['console'],
            'level': NMT_LOG_LEVEL,
            'propagate': False,
        }
        for app in INSTALLED_APPS
    },
}


# Toolkit defaults
# Full-scale recipe values; toy-scale overrides noted inline.

NMT_OUTPUT_DIR = Path(env('NMT_OUTPUT_DIR', default=str(BASE_DIR / 'runs')))

NMT_DEFAULTS = {
    'seed': env('NMT_SEED'),
    'layers': 2,            # full scale: 4
    'cells': 64,            # full scale: 1000
    'vocab_size': 50000,
    'max_len': 50,
    'batch_size': 32,       # full scale: 128
    'epochs': 10,
    'halve_after': 5,
    'lr': 1.0,
    'clip_norm': 5.0,
    'loss_normalization': 'token',  # full scale: sentence
    'dropout': 0.0,
    'dropout_epochs': 12,
    'dropout_halve_after': 8,
    'attention': 'global',
    'score': 'dot',
    'window': 10,
    's_max': 50,
    'input_feeding': True,
    'reverse_source': True,
    'init_scale': 0.1,
    'decode_max_len': 100,
}
