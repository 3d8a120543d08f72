"""Access to the SPILLOVER engine defaults held in the Django settings."""
from contextlib import contextmanager

import numpy as np

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

# ===========================================================================

# Used when settings are not configured (e.g. the engine imported from a
# notebook) or a local override dropped a key
DEFAULTS = {
    'R': 10_000,
    'N_RAND': 10_000,
    'ENUMERATION_CAP': 20,
    'REJECTION_BUDGET': 1_000_000,
    'CHUNK_SIZE': 1_000,
    'SELECTION_DRAWS': 500,
    'N_CANDIDATES': 10,
    'N_CONSTRUCTIONS': 200,
    'STOUFFER_EPS': 1e-4,
    'WEIGHTED_FISHER_DRAWS': 100_000,
    'LEIDEN_RESOLUTION': 1e-3,
    'LEIDEN_BETA': 1e-2,
    'LEIDEN_ITERATIONS': 200,
    'ASSIGN_EXACT_MAX': 12,
    'ASSIGN_RESTARTS': 32,
    'THREADS': None,
}

# Values pinned for the current run, consulted before the Django settings
_pinned = {}


def setting(name, value=None):
    """Returns `value` if given, otherwise the configured default."""
    if value is not None:
        return value

    if name not in DEFAULTS:
        raise KeyError(f"Unknown engine setting {name}")

    if name in _pinned:
        return _pinned[name]

    try:
        overrides = getattr(settings, 'SPILLOVER', {})
    except ImproperlyConfigured:
        return DEFAULTS[name]

    return overrides.get(name, DEFAULTS[name])


@contextmanager
def pinned(values):
    """Within the block :func:`setting` answers from `values` ahead of the
    Django settings. Unknown keys and None values are ignored.

    Replays pin the settings stored in a report so the run does not depend
    on the local settings in effect.
    """
    previous = dict(_pinned)
    _pinned.update({name: value for name, value in values.items()
        if name in DEFAULTS and value is not None})
    try:
        yield
    finally:
        _pinned.clear()
        _pinned.update(previous)


def pins():
    """Currently pinned values, to hand to worker processes."""
    return dict(_pinned)


def call_pinned(values, func, *args, **kwargs):
    """Runs `func` with `values` pinned. Worker processes do not share this
    module's state, so process-parallel work is dispatched through here."""
    with pinned(values):
        return func(*args, **kwargs)


def effective_settings(**overrides):
    """Full engine configuration with `overrides` (None values ignored)
    applied, as embedded in reports."""
    result = {name: setting(name) for name in DEFAULTS}
    for name, value in overrides.items():
        if value is not None:
            result[name] = value

    return result


def n_jobs(threads=None):
    """joblib worker count, -1 meaning all cores."""
    threads = setting('THREADS', threads)
    if threads is None:
        return -1

    return max(1, int(threads))


def make_rng(seed):
    """Generator from an int, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed

    return np.random.default_rng(seed)


def seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed

    if isinstance(seed, np.random.Generator):
        # Draw an entropy word so the caller's stream still advances
        return np.random.SeedSequence(int(seed.integers(2**63)))

    return np.random.SeedSequence(seed)
