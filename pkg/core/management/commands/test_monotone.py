from django.core.management.base import CommandError

from core.management.reporting import INVALID, ReportCommand, \
    load_module_sets, write_histogram
from core.monotone import test_monotone

HELP = """\
Sequential monotone spillover test under the Bernoulli design of the node
table. Builds one module set per adjacent exposure contrast (or reads them
from a select_modulesets report), runs a conditional randomization test for
each and combines the step p-values.

Exit status 3 when no step had an active module.
"""

class Command(ReportCommand):
    help = HELP

    def add_arguments(self, parser):
        self.add_data_arguments(parser)
        self.add_test_arguments(parser)
        self.add_run_arguments(parser)
        parser.add_argument("--R", type=int,
            help="Randomization draws per contrast")
        parser.add_argument("--adjust", type=str, choices=["pre", "linear"],
            help="Covariate adjustment of the outcomes")
        parser.add_argument("--relax", action='store_true',
            help="Let earlier randomization units observed in control "
            "become focal units")
        parser.add_argument("--generalized", action='store_true',
            help="Build generalized module sets")
        parser.add_argument("--module-sets", type=str,
            help="select_modulesets report holding the sets to use")
        parser.add_argument("--histogram", type=str,
            help="Write binned randomization draws to this CSV")

    def run(self, options):
        dataset = self.dataset(options)
        data = dataset.data

        module_sets = None
        if options.get('module_sets'):
            module_sets = load_module_sets(options['module_sets'])

        if options.get('adjust') == "pre" and data.y_pre is None:
            raise CommandError("--adjust pre needs a y_pre column",
                returncode=INVALID)

        report = test_monotone(dataset.net, self.exposure_spec(options),
            dataset.design, data.z_obs, data.y_post, self.stat(options),
            self.combiner(options), seed=options['seed'],
            adjust=options.get('adjust'), y_pre=data.y_pre, x=data.x,
            module_sets=module_sets, direction=options['direction'],
            relax=options.get('relax', False),
            generalized=options.get('generalized', False),
            R=options.get('R'), threads=options.get('threads'))

        if options.get('histogram'):
            write_histogram(options['histogram'], report.results)

        if options['verbosity'] > 1:
            for step, result in enumerate(report.results, start=1):
                self.stderr.write(f"step {step} {result.contrast}: "
                    f"p={result.pval:.4g}")

        body = report.to_dict()
        body['ids'] = dataset.ids
        body['degenerate'] = report.all_degenerate
        return body
