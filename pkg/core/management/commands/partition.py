from core.ingest import write_partition
from core.management.reporting import ReportCommand
from core.partition import (AssignmentProblem, Metrics, PartitionSpec,
    assign_communities, detect_communities, informativeness_matrix,
    modularity, order_partition, split_by_coordinate)

HELP = """\
Splits the network into one part per exposure contrast for the general
design test. Communities are detected Leiden style, scored by how
informative their null exposure graphs are for each contrast, then
assigned to contrasts so the worst contrast gets as much as possible.

--method coordinate skips all that and cuts x coordinate quantile bands.
The partition is written as an (id, part, community) CSV.
"""

class Command(ReportCommand):
    help = HELP

    def add_arguments(self, parser):
        self.add_data_arguments(parser)
        parser.add_argument("--levels", type=str, default="0,1,2,>=3")
        self.add_run_arguments(parser)
        parser.add_argument("--method", type=str, default="community",
            choices=["community", "coordinate"])
        parser.add_argument("--metric", type=str, default=Metrics.DENSITY,
            choices=Metrics.values)
        parser.add_argument("--N-rand", dest='N_rand', type=int,
            help="Design draws for the informativeness scores")
        parser.add_argument("--resolution", type=float)
        parser.add_argument("--beta", type=float)
        parser.add_argument("--iterations", type=int)
        parser.add_argument("--out", type=str, required=True,
            help="Partition CSV to write")

    def run(self, options):
        dataset = self.dataset(options)
        spec = self.exposure_spec(options)
        net = dataset.net

        if options['method'] == "coordinate":
            parts = split_by_coordinate(net, spec.K)
            write_partition(options['out'], dataset, parts)
            return {'method': "coordinate", 'parts': parts.tolist()}

        detect_seed, score_seed, assign_seed = [options['seed'], 0], \
            [options['seed'], 1], [options['seed'], 2]
        partition_spec = PartitionSpec(options.get('resolution'),
            options.get('beta'), options.get('iterations'), detect_seed)
        labels = detect_communities(net, partition_spec)

        M, S = informativeness_matrix(net, spec, dataset.design, labels,
            options['metric'], options.get('N_rand'), score_seed)
        problem = AssignmentProblem(M, S)
        A = assign_communities(problem, seed=assign_seed)
        parts = order_partition(labels, A)
        write_partition(options['out'], dataset, parts, labels)

        return {
            'method': "community",
            'leiden': partition_spec.to_dict(),
            'communities': int(labels.max()) + 1,
            'modularity': modularity(net, labels,
                partition_spec.resolution),
            'metric': options['metric'],
            'assignment': problem.to_dict(),
            'parts': parts.tolist(),
        }
