"""Null exposure graphs, biclique decompositions and the biclique test.

The biclique path works under any design that can sample (and condition)
assignments, which is what the community split test needs.
"""
import base64
import logging
from dataclasses import dataclass, field

import numpy as np

from core.combine import CombinerSpec, combine
from core.conf import make_rng, seed_sequence, setting
from core.crt import RandomizationResult
from core.design import all_states
from core.modsets import check_contrast
from core.monotone import Directions, MonotoneReport, flip_direction
from core.network import bounded_levels
from core.teststats import StatSpec

logger = logging.getLogger(__name__)

# ===========================================================================

class NullExposureGraph:
    """Units x assignments. Unit i links to assignment z when z_i = 0 and
    i's exposure under z is one of the two contrast levels."""

    def __init__(self, units, columns, levels, contrast, weights=None,
            obs_column=None, provenance="sampled", seed=None):
        self.units = np.asarray(units, dtype=np.int64)
        self.columns = columns
        self.levels = levels
        self.contrast = contrast
        self.weights = np.ones(len(columns)) if weights is None else \
            np.asarray(weights, dtype=float)
        self.obs_column = obs_column
        self.provenance = provenance
        self.seed = seed

        low, high = contrast
        control = columns[:, self.units].T == 0
        self.adjacency = control & (levels >= low) & (levels <= high)

    def __str__(self):
        return (f"NullExposureGraph(units={len(self.units)}, "
            f"columns={self.n_columns}, edges={self.n_edges})")

    @property
    def n_columns(self):
        return len(self.columns)

    @property
    def n_edges(self):
        return int(self.adjacency.sum())

    def to_dict(self):
        bits = np.packbits(self.adjacency, axis=None)
        return {
            'units': self.units.tolist(),
            'contrast': list(self.contrast),
            'shape': list(self.adjacency.shape),
            'provenance': self.provenance,
            'seed': self.seed,
            'obs_column': self.obs_column,
            'bitmap': base64.b64encode(bits.tobytes()).decode('ascii'),
        }


def _levels(net, spec, units, columns):
    counts = net.adjacency[units] @ columns.T.astype(np.int64)
    return bounded_levels(spec, np.asarray(counts))


def _enumerated_columns(design, fixed):
    if design.n > setting('ENUMERATION_CAP'):
        raise ValueError(f"Cannot enumerate a design over {design.n} units")

    columns = all_states(design.n)
    for unit, value in fixed.items():
        columns = columns[columns[:, unit] == value]

    weights = design.prob(columns)
    keep = weights > 0
    return columns[keep], weights[keep]


def build_ne_graph(net, spec, design, contrast, units=None, N_rand=None,
        inject=None, fixed=None, seed=None, enumerate_design=False):
    """Null exposure graph over `units` (default all).

    Columns are N_rand draws from the design given `fixed`, each weighted
    1, with `inject` (the observed assignment) added as one more column.
    With `enumerate_design` the columns are instead every assignment
    consistent with `fixed`, weighted by its design probability.
    """
    contrast = check_contrast(spec, contrast)
    fixed = dict(fixed or {})
    units = np.arange(net.n) if units is None else \
        np.asarray(sorted(units), dtype=np.int64)

    obs_column = None
    if enumerate_design:
        columns, weights = _enumerated_columns(design, fixed)
        provenance = "enumerated"
        entropy = None
        if inject is not None:
            match = np.flatnonzero((columns == np.asarray(inject)).all(
                axis=1))
            if not len(match):
                raise ValueError("Observed assignment is outside the "
                    "conditional design support")
            obs_column = int(match[0])
    else:
        N_rand = setting('N_RAND', N_rand)
        if N_rand < 1:
            raise ValueError("N_rand must be >= 1")

        sequence = seed_sequence(seed)
        entropy = sequence.entropy
        columns = design.conditional_sample(fixed,
            np.random.default_rng(sequence), N_rand)
        provenance = "sampled"
        if inject is not None:
            columns = np.vstack([columns, np.asarray(inject,
                dtype=columns.dtype)[None, :]])
            obs_column = len(columns) - 1
        weights = None

    levels = _levels(net, spec, units, columns)
    ne = NullExposureGraph(units, columns, levels, contrast, weights,
        obs_column, provenance, entropy)
    logger.debug("%s", ne)
    return ne

# ===========================================================================

@dataclass
class BicliqueDecomposition:
    # (unit ids, column indices) pairs
    bicliques: list
    complete: bool = True
    column_owner: np.ndarray = field(default=None, repr=False)

    def __str__(self):
        return (f"BicliqueDecomposition(bicliques={len(self.bicliques)}, "
            f"complete={self.complete})")

    def containing(self, column):
        return int(self.column_owner[column])

    def violations(self, ne):
        """Broken partition / completeness properties, as messages."""
        problems = []
        seen = np.zeros(ne.n_columns, dtype=np.int64)
        row_of = {unit: row for row, unit in enumerate(ne.units.tolist())}
        for index, (units, columns) in enumerate(self.bicliques):
            seen[columns] += 1
            rows = [row_of[u] for u in units]
            if rows and not ne.adjacency[np.ix_(rows, columns)].all():
                problems.append(f"biclique {index} is not complete")

        if (seen != 1).any():
            problems.append(f"{int((seen != 1).sum())} columns not covered "
                "exactly once")
        return problems


def _grow(adjacency, uncovered, seed_column):
    """Local search for a biclique through `seed_column`, maximizing
    |units| x |columns| over the uncovered columns."""
    rows = np.flatnonzero(adjacency[:, seed_column])
    sub = adjacency[:, uncovered]
    cover = sub[rows].sum(axis=0)
    size = len(rows)
    best = size * int((cover == size).sum())

    while size > 1:
        full = int((cover == size).sum())
        nearly = cover == size - 1
        # columns gained by dropping each row
        gains = (~sub[rows][:, nearly]).sum(axis=1)
        pick = int(np.argmax(gains))
        score = (size - 1) * (full + int(gains[pick]))
        if score <= best:
            break

        cover = cover - sub[rows[pick]]
        rows = np.delete(rows, pick)
        size -= 1
        best = score

    columns = uncovered[cover == size]
    # any other row linked to all of them joins too
    rows = np.flatnonzero(adjacency[:, columns].all(axis=1))
    return rows, columns


def decompose(ne, seed=None, stop_at=None):
    """Greedy biclique decomposition of the columns of `ne`.

    Seed columns are visited in a random order; columns without any edge
    go to one empty-unit sink. With `stop_at`, work ends once that column
    is covered and the rest is lumped into the sink, which leaves the
    biclique holding `stop_at` unchanged.
    """
    rng = make_rng(seed)
    adjacency = ne.adjacency
    owner = np.full(ne.n_columns, -1, dtype=np.int64)
    bicliques = []

    for column in rng.permutation(ne.n_columns).tolist():
        if owner[column] != -1:
            continue

        if adjacency[:, column].any():
            uncovered = np.flatnonzero(owner == -1)
            rows, columns = _grow(adjacency, uncovered, column)
            owner[columns] = len(bicliques)
            bicliques.append((tuple(ne.units[rows].tolist()), columns))
        else:
            owner[column] = -2

        if stop_at is not None and owner[stop_at] != -1:
            break

    complete = not (owner == -1).any()
    rest = np.flatnonzero(owner < 0)
    if len(rest):
        owner[rest] = len(bicliques)
        bicliques.append(((), rest))

    return BicliqueDecomposition(bicliques, complete, owner)

# ===========================================================================

def biclique_test(ne, decomposition, y, stat=None):
    """p-value over the biclique holding the observed column, columns
    weighted by their NE graph weight. The observed column counts itself
    in the >= tail."""
    stat = stat or StatSpec()
    if ne.obs_column is None:
        raise ValueError("Observed assignment is not a column of the graph")

    index = decomposition.containing(ne.obs_column)
    units, columns = decomposition.bicliques[index]
    if not units or len(columns) == 1:
        return RandomizationResult.degenerate_result(ne.contrast)

    row_of = {unit: row for row, unit in enumerate(ne.units.tolist())}
    rows = [row_of[u] for u in units]
    y_u = np.asarray(y, dtype=float)[list(units)]
    if not np.isfinite(y_u).all():
        raise ValueError("Outcomes of focal units must be finite")

    high = (ne.levels[np.ix_(rows, columns)] == ne.contrast[1]).T
    stats = stat.batch(high, y_u, list(units))
    position = int(np.flatnonzero(columns == ne.obs_column)[0])
    t_obs = float(stats[position])

    weights = ne.weights[columns]
    pval = float(weights[stats >= t_obs].sum() / weights.sum())
    others = np.delete(stats, position)
    return RandomizationResult(min(1.0, pval), t_obs, others, len(units),
        False, 0, 1, ne.contrast)

# ===========================================================================

def closed_units(net, parts, k):
    """Units of part k whose neighbors all lie in parts <= k."""
    parts = np.asarray(parts)
    inside = np.flatnonzero(parts <= k)
    return np.flatnonzero(net.subgraph_closed(inside) & (parts == k))


def test_monotone_general(net, spec, design, parts, z_obs, y, stat=None,
        combiner=None, N_rand=None, seed=None, enumerate_design=False,
        direction=Directions.DECREASING):
    """Monotone test under a general design, one network part per contrast.

    :param parts: per-unit part index 0..K-1; part k holds the focal
        candidates of contrast k, the last part is never tested
    """
    stat = stat or StatSpec()
    combiner = combiner or CombinerSpec()
    parts = np.asarray(parts, dtype=np.int64)
    z_obs = np.asarray(z_obs)
    y = np.asarray(y, dtype=float)
    if len(parts) != net.n:
        raise ValueError("Partition must label every unit")
    if parts.min() < 0 or parts.max() >= spec.K:
        raise ValueError(f"Part labels must lie in [0, {spec.K})")
    if Directions(direction) == Directions.INCREASING:
        y = flip_direction(y)

    step_seeds = seed_sequence(seed).spawn(len(spec.contrasts) + 1)
    results, eligible = [], []
    for k, contrast in enumerate(spec.contrasts):
        ne_seed, split_seed = step_seeds[k].spawn(2)
        units = closed_units(net, parts, k)
        eligible.append(len(units))
        if not len(units):
            logger.info("Contrast %s: no closed units in part %d", contrast,
                k)
            results.append(RandomizationResult.degenerate_result(contrast))
            continue

        fixed = {int(u): int(z_obs[u]) for u in np.flatnonzero(parts < k)}
        ne = build_ne_graph(net, spec, design, contrast, units, N_rand,
            z_obs, fixed, ne_seed, enumerate_design)
        decomposition = decompose(ne, split_seed, stop_at=ne.obs_column)
        result = biclique_test(ne, decomposition, y, stat)
        results.append(result)
        logger.info("Step %d %s: %s", k + 1, contrast, result)

    combined = combine([r.pval for r in results], combiner,
        seed=step_seeds[-1])
    return MonotoneReport(results, combined, combiner, str(direction), [],
        seed if isinstance(seed, int) else None, eligible)
