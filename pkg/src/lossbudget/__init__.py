import os
import sys


def default_settings():
    """Minimal settings used when the console script runs outside a Django project."""
    level = os.environ.get('LOSSBUDGET_LOG_LEVEL', 'WARNING').upper()
    return {
        'INSTALLED_APPS': ['rest_framework', 'lossbudget'],
        'DATABASES': {},
        'USE_I18N': False,
        'USE_TZ': True,
        'LOGGING': {
            'version': 1,
            'disable_existing_loggers': False,
            'formatters': {
                'simple': {'format': '%(levelname)s %(name)s: %(message)s'},
            },
            'handlers': {
                'console': {'class': 'logging.StreamHandler', 'formatter': 'simple'},
            },
            'loggers': {
                'lossbudget': {'handlers': ['console'], 'level': level},
            },
        },
    }


def main(argv=None):
    """Entry point of the ``lossbudget`` console script.

    Verbs may be written with hyphens (``fit-resonance``); they map onto the
    management commands of the same name with underscores.
    """
    import django
    from django.conf import settings
    from django.core.management import execute_from_command_line

    if not os.environ.get('DJANGO_SETTINGS_MODULE') and not settings.configured:
        settings.configure(**default_settings())
    django.setup()

    argv = list(sys.argv if argv is None else argv)
    if len(argv) > 1 and not argv[1].startswith('-'):
        argv[1] = argv[1].replace('-', '_')
    execute_from_command_line(argv)
