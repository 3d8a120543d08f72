from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent
DATA_DIR = BASE_DIR / 'data'

# Nothing here is served; the key only satisfies Django's startup checks
SECRET_KEY = 'spillover-offline-only'

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'core',
]

# No ORM models, the engine works on files
DATABASES = {}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# ---- randomization engine defaults
#
# Every key can be overridden in local_settings or by the matching
# management command flag. Effective values are written into each report.

SPILLOVER = {
    # CRT replications per contrast
    'R': 10_000,

    # sampled assignments per null exposure graph
    'N_RAND': 10_000,

    # largest module randomization set that is enumerated exactly
    'ENUMERATION_CAP': 20,

    # attempts before rejection sampling gives up
    'REJECTION_BUDGET': 1_000_000,

    # draws per CRT chunk, each chunk owns a seed substream
    'CHUNK_SIZE': 1_000,

    # design draws used to score module sets / Stouffer weights
    'SELECTION_DRAWS': 500,
    'N_CANDIDATES': 10,
    'N_CONSTRUCTIONS': 200,

    'STOUFFER_EPS': 1e-4,
    'WEIGHTED_FISHER_DRAWS': 100_000,

    # community detection
    'LEIDEN_RESOLUTION': 1e-3,
    'LEIDEN_BETA': 1e-2,
    'LEIDEN_ITERATIONS': 200,

    # exact assignment solver is used up to this many communities
    'ASSIGN_EXACT_MAX': 12,
    'ASSIGN_RESTARTS': 32,

    # joblib worker cap, None means one per core
    'THREADS': None,
}

LOGGING = {
    'version':1,
    'disable_existing_loggers':False,
    'formatters': {
        'brief': {
            'format':'%(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console':{
            'class':'logging.StreamHandler',
            'formatter':'brief',
        },
    },
    'loggers':{
        'django':{
            'handlers':['console', ],
            'level':'ERROR',
            'propagate':False,
        },
        'core':{
            'handlers':['console', ],
            'level':'WARNING',
            'propagate':False,
        },
    },
}


# ---- local settings import overrides

# redirect file names the module in local_settings to layer on top
redirect = BASE_DIR / 'Spillover/local_settings/import_redirect'
if redirect.exists():
    import_file = redirect.read_text().strip()
    if import_file:
        action = 'from Spillover.local_settings.%s import *' % import_file
        exec(action)

# local files list only the engine keys they change
SPILLOVER.update(globals().get('SPILLOVER_OVERRIDES', {}))
