"""Project-level defaults, overridable from the Django settings module."""
from django.conf import settings

INTERFACE_THICKNESS = 3e-9
INTERFACE_PERMITTIVITY = 10.0
SURFACE_CORRECTION = 0.21
MC_SAMPLES = 0
SEED = 0
SHARE_THRESHOLD = 0.1
SPAN_LINEWIDTHS = 20.0


def get(name):
    """Return ``LOSSBUDGET_<name>`` from settings, falling back to the module default."""
    return getattr(settings, f'LOSSBUDGET_{name}', globals()[name])
