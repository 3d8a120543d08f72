from django.core.management.base import CommandError

from core.biclique import test_monotone_general
from core.ingest import read_partition
from core.management.reporting import INVALID, ReportCommand
from core.partition import split_by_coordinate

HELP = """\
Monotone spillover test through biclique decompositions of null exposure
graphs, valid for any design that can be sampled. Needs a split of the
units into one part per exposure level: either a partition CSV (id, part)
as written by the partition command, or --split coordinate for quantile
bands of the x coordinate.

Exit status 3 when no step had a usable biclique.
"""

class Command(ReportCommand):
    help = HELP

    def add_arguments(self, parser):
        self.add_data_arguments(parser)
        self.add_test_arguments(parser)
        self.add_run_arguments(parser)
        parser.add_argument("--partition", type=str,
            help="CSV with id and part columns")
        parser.add_argument("--split", type=str, choices=["coordinate"],
            help="Split on the fly instead of reading a partition")
        parser.add_argument("--N-rand", dest='N_rand', type=int,
            help="Sampled assignments per null exposure graph")
        parser.add_argument("--enumerate", action='store_true',
            help="Use every assignment of the design instead of samples")

    def run(self, options):
        dataset = self.dataset(options)
        spec = self.exposure_spec(options)

        if options.get('partition'):
            parts = read_partition(options['partition'], dataset)
        elif options.get('split') == "coordinate":
            parts = split_by_coordinate(dataset.net, spec.K)
        else:
            raise CommandError("Need --partition or --split",
                returncode=INVALID)

        report = test_monotone_general(dataset.net, spec, dataset.design,
            parts, dataset.data.z_obs, dataset.data.y_post, self.stat(options),
            self.combiner(options), N_rand=options.get('N_rand'),
            seed=options['seed'],
            enumerate_design=options.get('enumerate', False),
            direction=options['direction'])

        body = report.to_dict()
        body['parts'] = parts.tolist()
        body['ids'] = dataset.ids
        body['degenerate'] = report.all_degenerate
        return body
