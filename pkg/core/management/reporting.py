"""Plumbing shared by the test commands: data and option arguments, JSON
reports and plot-data CSVs."""
import hashlib
import json
from argparse import RawTextHelpFormatter
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management.base import BaseCommand, CommandError

from core.combine import CombinerRules, CombinerSpec
from core.conf import effective_settings, pinned
from core.design import EnumerationCapExceeded, RejectionBudgetExceeded
from core.ingest import ingest
from core.modsets import ModuleSet
from core.monotone import Directions
from core.network import ExposureSpec
from core.teststats import StatSpec

SCHEMA_VERSION = 1

# Django's own options plus the ones that must not be replayed from a report
NOT_CONFIG = {'verbosity', 'settings', 'pythonpath', 'traceback', 'no_color',
    'force_color', 'skip_checks', 'stdout', 'stderr', 'from_report', 'output',
    'histogram', 'threads', 'out'}

DEGENERATE = 3
INVALID = 2

# ===========================================================================

def digest(path):
    if path is None:
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def jsonable(value):
    """Numpy scalars and arrays to plain Python, infinities to strings."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and np.isinf(value):
        return "inf" if value > 0 else "-inf"
    if isinstance(value, float) and np.isnan(value):
        return None
    return value


def write_histogram(path, results, bins=20):
    """Binned randomization draws of every step as CSV."""
    rows = []
    for step, result in enumerate(results, start=1):
        draws = np.asarray(result.draws, dtype=float)
        draws = draws[np.isfinite(draws)]
        if not len(draws):
            continue

        counts, edges = np.histogram(draws, bins=bins)
        for count, left, right in zip(counts, edges[:-1], edges[1:]):
            rows.append({'step': step, 'bin_left': left, 'bin_right': right,
                'count': int(count), 't_obs': result.t_obs})

    pd.DataFrame(rows, columns=['step', 'bin_left', 'bin_right', 'count',
        't_obs']).to_csv(path, index=False)


def load_module_sets(path):
    """Module sets stored in a select_modulesets report."""
    try:
        stored = json.loads(Path(path).read_text())
        return [ModuleSet.from_dict(m) for m in stored['module_sets']]
    except (OSError, ValueError, KeyError, TypeError, AttributeError) as exc:
        raise CommandError(f"Cannot read module sets from {path}: {exc}",
            returncode=INVALID) from exc


class ReportCommand(BaseCommand):
    """Base for commands that read a dataset and write a JSON report.

    Subclasses implement :meth:`run`, returning the report body, and may
    raise :class:`CommandError` with returncode 3 after writing it when the
    test was degenerate everywhere.
    """
    def create_parser(self, *args, **kwargs):
        parser = super().create_parser(*args, **kwargs)
        parser.formatter_class = RawTextHelpFormatter
        return parser

    # ---- argument groups

    def add_data_arguments(self, parser):
        parser.add_argument("nodes", type=str, nargs='?',
            help="Node table CSV")
        parser.add_argument("--edges", type=str, help="Edge table CSV")
        parser.add_argument("--radius", type=float,
            help="Build edges from coordinates within this distance")
        parser.add_argument("--restrict", action='store_true',
            help="Radius mode: keep only pairs touching a randomizable unit")

    def add_test_arguments(self, parser, direction_both=False):
        parser.add_argument("--levels", type=str, default="0,1,2,>=3",
            help="Exposure levels, e.g. '0,1,2,>=3'")
        parser.add_argument("--statistic", type=str, default="dim",
            help="dim or rs<s> (Stephenson rank sum)")
        parser.add_argument("--combiner", type=str,
            default=CombinerRules.FISHER, choices=CombinerRules.values)
        directions = list(Directions.values)
        if direction_both:
            directions.append("both")
        parser.add_argument("--direction", type=str,
            default=Directions.DECREASING, choices=directions)

    def add_run_arguments(self, parser):
        parser.add_argument("--seed", type=int,
            help="Master seed, fresh entropy when omitted")
        parser.add_argument("--threads", type=int, help="Worker cap")
        parser.add_argument("--output", type=str,
            help="Report path, stdout when omitted")
        parser.add_argument("--from-report", type=str,
            help="Re-run with the configuration stored in this report")

    # ---- helpers for subclasses

    def dataset(self, options):
        if not options.get('nodes'):
            raise CommandError("A node table is required",
                returncode=INVALID)
        return ingest(options['nodes'], options.get('edges'),
            options.get('radius'), options.get('restrict', False))

    def exposure_spec(self, options):
        return ExposureSpec.from_labels(options['levels'])

    def stat(self, options):
        return StatSpec.from_name(options['statistic'])

    def combiner(self, options):
        return CombinerSpec(options['combiner'])

    def directions(self, options):
        if options['direction'] == "both":
            return [Directions.DECREASING, Directions.INCREASING]
        return [Directions(options['direction'])]

    # ---- run / report

    def config(self, options):
        return {key: value for key, value in sorted(options.items())
            if key not in NOT_CONFIG}

    def replay(self, options):
        """Options and engine settings stored in the report to replay."""
        path = Path(options['from_report'])
        try:
            stored = json.loads(path.read_text())
            config = stored['config']
        except (OSError, ValueError, KeyError) as exc:
            raise CommandError(f"Cannot replay {path}: {exc}",
                returncode=INVALID) from exc

        options.update(config)
        return options, stored.get('settings', {})

    def handle(self, *args, **options):
        stored = {}
        if options.get('from_report'):
            options, stored = self.replay(options)
        if 'seed' in options and options['seed'] is None:
            options['seed'] = int(np.random.SeedSequence().entropy)

        # stored settings win over local ones, and the resolved values
        # are pinned so worker processes see them too
        with pinned(stored):
            engine = self.engine_settings(options)

        with pinned(engine):
            try:
                body = self.run(options)
            except CommandError:
                raise
            except (ValueError, EnumerationCapExceeded,
                    RejectionBudgetExceeded) as exc:
                raise CommandError(str(exc), returncode=INVALID) from exc

        report = {
            'schema_version': SCHEMA_VERSION,
            'command': self.__module__.rsplit('.', 1)[-1],
            'config': self.config(options),
            'settings': engine,
            'inputs': {
                'nodes': digest(options.get('nodes')),
                'edges': digest(options.get('edges')),
            },
            'seed': options.get('seed'),
        }
        report.update(body)
        self.emit(options, report)

        if body.get('degenerate'):
            raise CommandError("Test is degenerate at every step",
                returncode=DEGENERATE)

    def engine_settings(self, options):
        overrides = {
            'R': options.get('R'),
            'N_RAND': options.get('N_rand'),
            'N_CONSTRUCTIONS': options.get('constructions'),
            'N_CANDIDATES': options.get('candidates'),
        }
        result = effective_settings(**overrides)
        result.pop('THREADS')
        return result

    def emit(self, options, report):
        text = json.dumps(jsonable(report), indent=2, sort_keys=True)
        if options.get('output'):
            Path(options['output']).write_text(text + "\n")
            if options['verbosity'] > 0:
                self.stdout.write(self.style.SUCCESS(
                    f"Wrote {options['output']}"))
        else:
            self.stdout.write(text)

    def run(self, options):
        raise NotImplementedError()
