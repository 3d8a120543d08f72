import numpy as np
import pandas as pd

from core.management.reporting import ReportCommand
from core.sim import aic_grouping_test


class Command(ReportCommand):
    help = ("Randomization check that exposure counts at or above --g-low "
        "can share one level, comparing AIC of count-indicator fits on the "
        "never-treated units grouped at --g-low and at --g-high.")

    def add_arguments(self, parser):
        self.add_data_arguments(parser)
        self.add_run_arguments(parser)
        parser.add_argument("--g-low", dest='g_low', type=int, default=3)
        parser.add_argument("--g-high", dest='g_high', type=int, default=10)
        parser.add_argument("--R", type=int, help="Design draws")
        parser.add_argument("--histogram", type=str,
            help="Write the binned randomization distribution here")

    def run(self, options):
        dataset = self.dataset(options)
        pval, observed, stats = aic_grouping_test(dataset.net,
            options['g_low'], options['g_high'], dataset.design,
            dataset.data.z_obs, dataset.data.y_post, options.get('R'),
            options['seed'])

        if options.get('histogram'):
            counts, edges = np.histogram(stats, bins=20)
            pd.DataFrame({'bin_left': edges[:-1], 'bin_right': edges[1:],
                'count': counts, 't_obs': observed}).to_csv(
                options['histogram'], index=False)

        return {'pval': pval, 't_obs': observed, 'R': len(stats)}
