# settings.py
"""
Django settings for the idslab project.

Only the parts of Django the experiment runner needs are enabled: the ORM
(run ledger), management commands and the test runner. There is no web
surface.
"""

try:
    from .settings_local import *
except ImportError:
    pass


from pathlib import Path
import tempfile

import dj_database_url

import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'idslab-local-only-not-a-secret')

DEBUG = os.getenv('DJANGO_DEBUG', '0') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'core',
]

# Database
# The ledger defaults to a SQLite file next to manage.py; set DATABASE_URL
# (postgres://...) to share it.

DATABASES = {
    'default': dj_database_url.config(
        default=os.environ.get("DATABASE_URL") or f"sqlite:///{BASE_DIR / 'db.sqlite3'}",
        conn_max_age=600,
    )
}

# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'
USE_TZ = True

USE_I18N = False

# Default primary key field type

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging

IDS_LOG_LEVEL = os.getenv('IDS_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        name: {'handlers': ['console'], 'level': IDS_LOG_LEVEL, 'propagate': False}
        for name in ('core', 'lattice', 'delone', 'operators', 'spectra', 'dos')
    },
}


# Experiment runner

# Artifact format version; `replay` refuses manifests from another version.
IDS_ARTIFACT_VERSION = '1.0'

# Worker count when --workers is not given
IDS_DEFAULT_WORKERS = int(os.getenv('IDS_WORKERS', '1'))

# Largest operator (in sites) that is ever diagonalized densely
IDS_DENSE_THRESHOLD = int(os.getenv('IDS_DENSE_THRESHOLD', '4096'))

# Where matrices are dumped when an eigensolver fails
IDS_DUMP_DIR = os.getenv('IDS_DUMP_DIR', tempfile.gettempdir())

# Defaults for every tolerance an experiment config may override
IDS_TOLERANCES = {
    'trace_formula': 0.02,
    'laplace_route': 0.02,
    'self_averaging_ratio': 0.2,
    'boundary_decay_factor': 1.8,
    'jump_mass_floor': 5e-3,
    'jump_compare': 5e-3,
    'jump_upper_slack': 0.01,
    'continuity_pitches': 2,
    'eigenvalue_merge': 1e-8,
    'voronoi_face': 1e-9,
    'padding_sigma': 3.0,
    'cdf_distance': 0.01,
    'laplace_agreement': 1e-4,
}
