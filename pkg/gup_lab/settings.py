"""
Django settings for the gup_lab project.

The project has no HTTP surface: it is driven entirely through ``manage.py``
commands (see ``experiments/management/commands``). Environment-specific values
are read with python-decouple, so a ``.env`` file next to ``manage.py`` works too.
"""

from pathlib import Path

import dj_database_url
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config('SECRET_KEY', default='django-insecure-gup-lab-local-only')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'rest_framework',
    'core',
    'experiments',
]


# Database (run ledger only)

DATABASES = {
    'default': dj_database_url.config(
        default=f'sqlite:///{BASE_DIR / "db.sqlite3"}',
        conn_max_age=600,
    )
}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Logging

GUP_LOG_LEVEL = config('GUP_LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'core': {'handlers': ['console'], 'level': GUP_LOG_LEVEL, 'propagate': False},
        'experiments': {'handlers': ['console'], 'level': GUP_LOG_LEVEL, 'propagate': False},
    },
}


# Toolkit defaults

# Default directory for command artifacts
GUP_OUTPUT_DIR = config('GUP_OUTPUT_DIR', default=str(BASE_DIR / 'runs'))

# IoU threshold th used to derive the accepted depth drift
GUP_IOUNC_THRESHOLD = config('GUP_IOUNC_THRESHOLD', default=0.7, cast=float)

# Stop-gradient exponent of the beta-NLL loss
GUP_BETA = config('GUP_BETA', default=0.5, cast=float)

# 3D NMS IoU threshold
GUP_NMS_THRESHOLD = config('GUP_NMS_THRESHOLD', default=0.25, cast=float)

# Trend window K (epochs) of the hierarchical task scheduler
GUP_HTL_WINDOW = config('GUP_HTL_WINDOW', default=5, cast=int)
