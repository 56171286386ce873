"""
Settings for the memstate app are all namespaced in the MEMSTATE setting.
For example your project's `settings.py` file might look like this:

MEMSTATE = {
    'EXCLUSION_FRACTION': 0.3,
    'THREADS': 4,
}

This module provides the `memstate_settings` object, that is used to access
memstate settings, checking for user settings first, then falling
back to the defaults.
"""
from django.conf import settings
from django.core.signals import setting_changed

DEFAULTS = {
    # Floor on |G_m v + I_d(v)| below which a state inversion is refused (amperes).
    'DENOMINATOR_FLOOR': 1e-15,
    # Floor on |C_j| below which a current region cannot normalise errors (amperes).
    'REGION_FLOOR': 1e-15,
    # Largest exponent argument evaluated before saturating or failing.
    'EXPONENT_LIMIT': 700.0,
    # Zero-crossing candidates must lie below this fraction of the trace amplitude.
    'ALIGN_MIN_ABS_FRACTION': 0.02,
    # Largest voltage offset remove_offsets may apply (volts).
    'MAX_VOLTAGE_OFFSET': 0.05,
    # Convergence tolerance of the offset optimizer on the normalised objective.
    'OFFSET_TOLERANCE': 1e-12,
    # Offsets smaller than this fraction of the amplitude are treated as zero.
    'OFFSET_RESOLUTION': 1e-3,
    # Smallest relative reduction of the quadrant objective an offset correction must reach.
    'OFFSET_MIN_GAIN': 0.1,
    # Measurements below this fraction of max |v| or max |i| are excluded.
    'EXCLUSION_FRACTION': 0.3,
    'STATE_FIT_MAX_ITERATIONS': 100,
    # Bisection tolerance of the series circuit solver (volts).
    'CIRCUIT_XTOL': 1e-14,
    # Candidates scored per vectorised batch during grid search.
    'GRID_CHUNK_SIZE': 256,
    # Worker threads for grid search, 0 means one per CPU.
    'THREADS': 0,
    'SCHEMA_VERSION': 1,
}


class MemstateSettings:
    """
    A settings object that allows memstate settings to be accessed as
    properties. For example:

        from memstate.conf import memstate_settings
        print(memstate_settings.EXCLUSION_FRACTION)
    """
    def __init__(self, defaults=None):
        self.defaults = defaults or DEFAULTS
        self._cached_attrs = set()

    @property
    def user_settings(self):
        if not hasattr(self, '_user_settings'):
            self._user_settings = getattr(settings, 'MEMSTATE', {})
        return self._user_settings

    def __getattr__(self, attr):
        if attr not in self.defaults:
            raise AttributeError("Invalid memstate setting: '%s'" % attr)

        try:
            val = self.user_settings[attr]
        except KeyError:
            val = self.defaults[attr]

        self._cached_attrs.add(attr)
        setattr(self, attr, val)
        return val

    def reload(self):
        for attr in self._cached_attrs:
            delattr(self, attr)
        self._cached_attrs.clear()
        if hasattr(self, '_user_settings'):
            delattr(self, '_user_settings')


memstate_settings = MemstateSettings(DEFAULTS)


def reload_memstate_settings(*args, **kwargs):
    if kwargs['setting'] == 'MEMSTATE':
        memstate_settings.reload()


setting_changed.connect(reload_memstate_settings)


def resolve(value, name):
    """Return ``value`` unless it is None, in which case the configured setting ``name``."""
    return getattr(memstate_settings, name) if value is None else value
