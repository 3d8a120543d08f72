from pathlib import Path

import pandas as pd
from django.conf import settings
from django.core.management.base import BaseCommand

# Twelve street segments on a 4 x 3 grid, four of them hotspots
NODES = [
    # id, x, y, p_treat, z_obs, y_post, y_pre, length
    ("n01", 0.0, 0.0, 0.5, 1, 2.1, 2.6, 120.0),
    ("n02", 100.0, 0.0, 0.0, 0, 3.4, 3.1, 80.0),
    ("n03", 200.0, 0.0, 0.0, 0, 2.9, 3.3, 95.0),
    ("n04", 300.0, 0.0, 0.0, 0, 4.2, 4.0, 110.0),
    ("n05", 0.0, 100.0, 0.5, 0, 5.0, 4.4, 60.0),
    ("n06", 100.0, 100.0, 0.0, 0, 3.8, 3.9, 75.0),
    ("n07", 200.0, 100.0, 0.0, 0, 2.2, 2.8, 130.0),
    ("n08", 300.0, 100.0, 0.0, 0, 3.1, 2.7, 90.0),
    ("n09", 0.0, 200.0, 0.5, 1, 1.7, 2.5, 105.0),
    ("n10", 100.0, 200.0, 0.0, 0, 2.6, 3.0, 85.0),
    ("n11", 200.0, 200.0, 0.0, 0, 4.6, 4.1, 70.0),
    ("n12", 300.0, 200.0, 0.3, 0, 3.9, 3.6, 100.0),
]

EDGES = [
    ("n01", "n02"), ("n01", "n03"), ("n01", "n04"),
    ("n05", "n04"), ("n05", "n06"), ("n05", "n07"),
    ("n09", "n07"), ("n09", "n08"), ("n09", "n10"),
    ("n12", "n10"), ("n12", "n11"), ("n12", "n02"),
    ("n03", "n06"), ("n08", "n11"),
]


class Command(BaseCommand):
    help = "Writes the bundled 12-unit toy dataset (node and edge CSVs)."

    def add_arguments(self, parser):
        parser.add_argument("--directory", type=str,
            default=str(settings.DATA_DIR), help="Where to write the files")

    def handle(self, *args, **options):
        directory = Path(options['directory'])
        directory.mkdir(parents=True, exist_ok=True)

        nodes = pd.DataFrame(NODES, columns=['id', 'x', 'y', 'p_treat',
            'z_obs', 'y_post', 'y_pre', 'length'])
        edges = pd.DataFrame(EDGES, columns=['src', 'dst'])

        nodes.to_csv(directory / 'toy_nodes.csv', index=False)
        edges.to_csv(directory / 'toy_edges.csv', index=False)
        self.stdout.write(f"Wrote {len(nodes)} units and {len(edges)} edges "
            f"to {directory}")
