import numpy as np

from core.management.reporting import ReportCommand
from core.monotone import select_module_sets, test_monotone

HELP = """\
Picks the sequence of module sets, one per contrast, with the most expected
active focal units among several seeded constructions. Only the design is
consulted, so the choice cannot peek at the observed assignment.

With --test the chosen sets are also tested, in one or both directions.
"""

class Command(ReportCommand):
    help = HELP

    def add_arguments(self, parser):
        self.add_data_arguments(parser)
        self.add_test_arguments(parser, direction_both=True)
        self.add_run_arguments(parser)
        parser.add_argument("--candidates", type=int,
            help="Number of candidate constructions")
        parser.add_argument("--M", type=int,
            help="Design draws used to score candidates")
        parser.add_argument("--generalized", action='store_true')
        parser.add_argument("--test", action='store_true',
            help="Test the selected module sets")
        parser.add_argument("--R", type=int)

    def run(self, options):
        dataset = self.dataset(options)
        spec = self.exposure_spec(options)
        # same test streams for both directions
        select_seed, test_seed = [options['seed'], 0], [options['seed'], 1]

        msets, scores = select_module_sets(dataset.net, spec, dataset.design,
            options.get('candidates'), options.get('M'), select_seed,
            generalized=options.get('generalized', False),
            threads=options.get('threads'))

        body = {
            'module_sets': [m.to_dict() for m in msets],
            'scores': scores,
            'selected': int(np.argmax(scores)),
            'ids': dataset.ids,
        }
        if not options.get('test'):
            return body

        tests = {}
        for direction in self.directions(options):
            report = test_monotone(dataset.net, spec, dataset.design,
                dataset.data.z_obs, dataset.data.y_post, self.stat(options),
                self.combiner(options), seed=test_seed, module_sets=msets,
                direction=direction, R=options.get('R'),
                threads=options.get('threads'))
            result = report.to_dict()
            result.pop('module_sets')
            tests[str(direction)] = result

        body['tests'] = tests
        return body
