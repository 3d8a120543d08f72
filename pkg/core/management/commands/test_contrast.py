import numpy as np
from django.core.management.base import CommandError

from core.crt import test_contrast
from core.management.reporting import INVALID, ReportCommand, \
    load_module_sets, write_histogram
from core.modsets import build_module_set
from core.monotone import Directions, flip_direction


class Command(ReportCommand):
    help = ("Conditional randomization test of one adjacent exposure "
        "contrast, without any earlier steps.")

    def add_arguments(self, parser):
        self.add_data_arguments(parser)
        self.add_test_arguments(parser)
        self.add_run_arguments(parser)
        parser.add_argument("--contrast", type=int, default=0,
            help="Index k of the contrast between levels k and k+1")
        parser.add_argument("--R", type=int,
            help="Randomization draws")
        parser.add_argument("--generalized", action='store_true')
        parser.add_argument("--module-sets", type=str,
            help="select_modulesets report, set k is used")
        parser.add_argument("--histogram", type=str)

    def run(self, options):
        dataset = self.dataset(options)
        spec = self.exposure_spec(options)
        k = options['contrast']
        if not 0 <= k < len(spec.contrasts):
            raise CommandError(f"Contrast index must lie in [0, "
                f"{len(spec.contrasts)})", returncode=INVALID)
        contrast = spec.contrasts[k]

        build_seed, test_seed = np.random.SeedSequence(
            options['seed']).spawn(2)
        if options.get('module_sets'):
            stored = load_module_sets(options['module_sets'])
            if k >= len(stored):
                raise CommandError(f"{options['module_sets']} holds "
                    f"{len(stored)} module sets, no set for contrast {k}",
                    returncode=INVALID)
            mset = stored[k]
        else:
            mset = build_module_set(dataset.net, spec, dataset.design,
                contrast, seed=build_seed,
                generalized=options.get('generalized', False))

        y = dataset.data.y_post
        if Directions(options['direction']) == Directions.INCREASING:
            y = flip_direction(y)

        result = test_contrast(dataset.net, spec, dataset.design, mset,
            dataset.data.z_obs, y, contrast, self.stat(options),
            options.get('R'), seed=test_seed, threads=options.get('threads'))

        if options.get('histogram'):
            write_histogram(options['histogram'], [result])

        return {
            'result': result.to_dict(),
            'module_set': mset.to_dict(),
            'eligible_focal_count': len(mset.focal_units),
            'ids': dataset.ids,
            'degenerate': result.degenerate,
        }
