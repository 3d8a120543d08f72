import json
from argparse import RawTextHelpFormatter
from pathlib import Path

import numpy as np
from django.core.management.base import BaseCommand, CommandError

from core.ingest import ingest
from core.management.reporting import INVALID
from core.network import ExposureSpec
from core.partition import split_by_coordinate
from core.sim import (DGPConfig, StudyMethod, SimulationError,
    calibrate_gamma, run_study, synthetic_network)

HELP = """\
Runs a rejection rate study described by a JSON file and writes the table
as CSV (dgp, param, method, statistic, combiner, rejection_rate, mc_se).

{
    "network": {
        # either a synthetic preferential attachment network ...
        "n": 2000, "m": 2, "hotspot_share": 0.05, "p_hot": 0.4,
        "seed": 1,
        # ... or a dataset, edges optional when "radius" is given
        "nodes": "data/toy_nodes.csv", "edges": "data/toy_edges.csv"
    },
    "levels": "0,1,2,>=3",
    "gamma": {"alpha": 1.2, "beta": 0.8},  # or "calibrate": true to
                                            match control units with no
                                            treated neighbor
    "cells": [
        {"kind": "dgp1", "tau": 0.2},      # dgp1, dgp2: tau
        {"kind": "dgp3", "theta": 0.1},    # dgp3: theta (tau optional)
        {"kind": "dgp4", "corr_radius": 225}
    ],
    "methods": [
        {"kind": "randomization", "statistic": "dim", "combiner": "fisher"},
        {"kind": "general", "statistic": "rs5", "combiner": "stouffer"},
        {"kind": "ols"}
    ],
    "reps": 2000,
    "R": 1000,       # optional, randomization draws per contrast
    "N_rand": 1000,  # optional, for the general method
    "alpha": 0.05,   # optional
    "seed": 7        # optional
}

The general method splits the units by x coordinate quantiles.
"""

class Command(BaseCommand):
    help = HELP

    def create_parser(self, *args, **kwargs):
        parser = super().create_parser(*args, **kwargs)
        parser.formatter_class = RawTextHelpFormatter
        return parser

    def add_arguments(self, parser):
        parser.add_argument("filename", type=str, help="JSON study file")
        parser.add_argument("--out", type=str, required=True,
            help="CSV table to write")
        parser.add_argument("--reps", type=int,
            help="Override the number of replications")
        parser.add_argument("--threads", type=int)

    def network(self, content):
        description = content.get("network", {})
        if "nodes" in description:
            dataset = ingest(description["nodes"], description.get("edges"),
                description.get("radius"), description.get("restrict", False))
            return dataset.net, dataset.design, dataset.data

        kwargs = {key: description[key] for key in ["n", "m",
            "hotspot_share", "p_hot", "seed"] if key in description}
        net, design, _ = synthetic_network(**kwargs)
        return net, design, None

    def gamma(self, content, net, data):
        gamma = content.get("gamma", {})
        if gamma.get("calibrate"):
            if data is None:
                raise CommandError("Calibration needs a dataset",
                    returncode=INVALID)
            quiet = (data.z_obs == 0) & (net.counts(data.z_obs) == 0)
            return calibrate_gamma(data.y_post[quiet])

        return gamma.get("alpha", 1.0), gamma.get("beta", 1.0)

    def handle(self, *args, **options):
        path = Path(options['filename'])
        try:
            content = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise CommandError(f"Cannot read {path}: {exc}",
                returncode=INVALID) from exc

        try:
            net, design, data = self.network(content)
            spec = ExposureSpec.from_labels(content.get("levels",
                "0,1,2,>=3"))
            alpha, beta = self.gamma(content, net, data)

            cells = []
            for cell in content["cells"]:
                cell = {"alpha": alpha, "beta": beta, **cell}
                cells.append(DGPConfig.from_dict(cell))
            methods = [StudyMethod.from_dict(m) for m in content["methods"]]

            parts = None
            if any(m.kind == "general" for m in methods):
                parts = split_by_coordinate(net, spec.K)

            reps = options['reps'] or content.get("reps", 2000)
            table = run_study(net, spec, design, cells, methods, reps,
                seed=content.get("seed"), alpha=content.get("alpha", 0.05),
                threads=options['threads'], R=content.get("R"),
                N_rand=content.get("N_rand"), parts=parts)
        except KeyError as exc:
            raise CommandError(f"{path} is missing {exc}",
                returncode=INVALID) from exc
        except (SimulationError, ValueError) as exc:
            raise CommandError(str(exc), returncode=INVALID) from exc

        table.to_csv(options['out'], index=False)
        if options['verbosity'] > 0:
            self.stdout.write(self.style.SUCCESS(
                f"Wrote {len(table)} rows to {options['out']}"))
            worst = table.loc[np.argmax(table['mc_se'])]
            self.stdout.write(f"Largest MC error {worst['mc_se']:.4f} "
                f"({worst['dgp']}, {worst['method']})")
