import pandas as pd

from core.management.reporting import ReportCommand
from core.monotone import test_monotone_aggregate

HELP = """\
Runs the sequential monotone test over many independently seeded module set
constructions and reports twice the median combined p-value.

--histogram writes one CSV row per construction: the combined p-value and
the eligible and active focal unit counts of every step.
"""

class Command(ReportCommand):
    help = HELP

    def add_arguments(self, parser):
        self.add_data_arguments(parser)
        self.add_test_arguments(parser, direction_both=True)
        self.add_run_arguments(parser)
        parser.add_argument("--constructions", type=int,
            help="Number of constructions")
        parser.add_argument("--R", type=int,
            help="Randomization draws per contrast")
        parser.add_argument("--relax", action='store_true')
        parser.add_argument("--generalized", action='store_true')
        parser.add_argument("--histogram", type=str,
            help="Per-construction CSV")

    def run(self, options):
        dataset = self.dataset(options)
        spec = self.exposure_spec(options)

        results, rows = {}, []
        degenerate = True
        for direction in self.directions(options):
            aggregated, reports = test_monotone_aggregate(dataset.net, spec,
                dataset.design, dataset.data.z_obs, dataset.data.y_post,
                options.get('constructions'), seed=options['seed'],
                threads=options.get('threads'), stat=self.stat(options),
                combiner=self.combiner(options), direction=direction,
                relax=options.get('relax', False),
                generalized=options.get('generalized', False),
                R=options.get('R'))

            results[str(direction)] = {
                'aggregated_pval': aggregated,
                'pvals': [r.combined_pval for r in reports],
            }
            degenerate = degenerate and all(r.all_degenerate for r in reports)

            for index, report in enumerate(reports):
                row = {'direction': str(direction), 'construction': index,
                    'combined_pval': report.combined_pval}
                for step, result in enumerate(report.results, start=1):
                    row[f'eligible_{step}'] = report.eligible_counts[step - 1]
                    row[f'active_{step}'] = result.active_focal_count
                rows.append(row)

        if options.get('histogram'):
            pd.DataFrame(rows).to_csv(options['histogram'], index=False)

        return {'aggregate': results, 'degenerate': degenerate}
