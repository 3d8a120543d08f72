"""Simulation studies: potential-outcome generators, the OLS baseline, the
rejection-rate harness and the grouping check."""
import logging
import math
from dataclasses import dataclass

import networkx as nx
import numpy as np
import pandas as pd
import statsmodels.api as sm
from django.db import models
from joblib import Parallel, delayed
from scipy import sparse
from scipy.spatial import cKDTree
from scipy.stats import t as student_t

from core.biclique import test_monotone_general
from core.combine import CombinerSpec
from core.conf import (call_pinned, make_rng, n_jobs, pins, seed_sequence,
    setting)
from core.crt import pvalue
from core.design import BernoulliDesign
from core.monotone import Directions, test_monotone
from core.network import Network
from core.teststats import StatSpec

logger = logging.getLogger(__name__)

# ===========================================================================

class SimulationError(ValueError):
    pass


class DGPKinds(models.TextChoices):
    DGP1 = "dgp1", "Homogeneous spillover"
    DGP2 = "dgp2", "Sign change at one treated neighbor"
    DGP3 = "dgp3", "Degree confounding"
    DGP4 = "dgp4", "Network correlated errors"


@dataclass
class DGPConfig:
    kind: str = DGPKinds.DGP1
    tau: float = 0.0
    theta: float = 0.0
    corr_radius: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        self.kind = DGPKinds(self.kind)
        if self.alpha <= 0 or self.beta <= 0:
            raise SimulationError("Gamma parameters must be positive")
        if self.corr_radius < 0:
            raise SimulationError("Correlation radius must be >= 0")

    def __str__(self):
        return f"DGPConfig({self.kind}, {self.param_name}={self.param})"

    @property
    def param_name(self):
        if self.kind == DGPKinds.DGP3:
            return "theta"
        elif self.kind == DGPKinds.DGP4:
            return "corr_radius"
        return "tau"

    @property
    def param(self):
        return getattr(self, self.param_name)

    @classmethod
    def from_dict(cls, data):
        fields = ('kind', 'tau', 'theta', 'corr_radius', 'alpha', 'beta',
            'seed')
        return cls(**{key: data[key] for key in fields if key in data})

    def to_dict(self):
        return {
            'kind': str(self.kind),
            'tau': self.tau,
            'theta': self.theta,
            'corr_radius': self.corr_radius,
            'alpha': self.alpha,
            'beta': self.beta,
            'seed': self.seed,
        }


def calibrate_gamma(y):
    """Method of moments (shape, rate) for a positive sample, matching its
    mean and unbiased (ddof=1) variance."""
    y = np.asarray(y, dtype=float)
    if len(y) < 2:
        raise SimulationError("Need at least two outcomes to calibrate")
    if (y <= 0).any():
        raise SimulationError("Calibration outcomes must be positive")

    mean = y.mean()
    var = y.var(ddof=1)
    if var <= 0:
        raise SimulationError("Calibration outcomes have zero variance")

    return mean ** 2 / var, mean / var

# ===========================================================================

class PotentialOutcomes:
    """Closed form y_i(z_i, w_i) for one draw of the baseline outcomes. The
    exposure w is the raw treated-neighbor count."""

    def __init__(self, config, base, degree, shift=None):
        self.config = config
        self.base = base
        self.degree = degree
        self.shift = np.zeros_like(base) if shift is None else shift

    def __str__(self):
        return f"PotentialOutcomes({self.config}, n={len(self.base)})"

    def spillover(self, w):
        w = np.asarray(w, dtype=float)
        if self.config.kind == DGPKinds.DGP2:
            return w - 2 * (w == 1)
        return w

    def values(self, z, w):
        """Outcomes of every unit at treatment z and exposure count w
        (vectors, or scalars broadcast over units)."""
        z = np.asarray(z, dtype=float)
        exponent = -z + self.config.tau * self.spillover(w) * (1 - 0.5 * z)
        if self.config.kind == DGPKinds.DGP3:
            exponent = exponent + self.config.theta * self.degree

        return (self.base + self.shift) * np.exp(exponent)

    def observe(self, net, z):
        return self.values(z, net.counts(z))


def correlation_term(coords, radius, eps):
    """|G eps| / sqrt(row sums of G), G the 0/1 matrix of pairs within
    `radius` (each unit in its own ball)."""
    tree = cKDTree(coords)
    G = tree.sparse_distance_matrix(tree, radius, output_type='coo_matrix')
    n = len(coords)
    G = sparse.csr_matrix((np.ones(len(G.data)), (G.row, G.col)),
        shape=(n, n))
    G = G.maximum(sparse.identity(n, format='csr'))

    return np.abs(G @ eps) / np.sqrt(np.asarray(G.sum(axis=1)).ravel())


def make_dgp(config, net, spec=None, rng=None):
    """Potential outcome oracle for `config`. Deterministic given
    `config.seed` (or `rng` when no seed is configured)."""
    rng = make_rng(config.seed if config.seed is not None else rng)
    base = rng.gamma(config.alpha, 1 / config.beta, size=net.n)

    shift = None
    if config.kind == DGPKinds.DGP4:
        if net.coords is None:
            raise SimulationError("dgp4 needs unit coordinates")
        shift = correlation_term(net.coords, config.corr_radius,
            rng.standard_normal(net.n))

    return PotentialOutcomes(config, base, net.degree.astype(float), shift)

# ===========================================================================

def ols_baseline(z, w, y, direction=Directions.DECREASING):
    """One-sided p-value for the exposure coefficient in the least squares
    fit of log y on (1, w, z, z*w). The alternative is a positive
    coefficient, or a negative one for the increasing direction.

    z and z*w are left out when they never vary. Returns the p-value and
    the fitted coefficients, w first after the intercept.
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    y = np.asarray(y, dtype=float)
    if (y <= 0).any():
        raise SimulationError("OLS baseline needs positive outcomes")

    X = np.column_stack([np.ones_like(z), w, z, z * w])
    X = X[:, [0, 1] + [c for c in (2, 3) if np.ptp(X[:, c]) > 0]]
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise SimulationError("OLS design matrix is rank deficient")

    fit = sm.OLS(np.log(y), X).fit()
    t_w = fit.tvalues[1]
    if Directions(direction) == Directions.INCREASING:
        t_w = -t_w
    return float(student_t.sf(t_w, fit.df_resid)), fit.params

# ===========================================================================

class MethodKinds(models.TextChoices):
    RANDOMIZATION = "randomization"
    GENERAL = "general"
    OLS = "ols"


@dataclass
class StudyMethod:
    kind: str = MethodKinds.RANDOMIZATION
    statistic: str = "dim"
    combiner: str = "fisher"

    def __post_init__(self):
        self.kind = MethodKinds(self.kind)

    def __str__(self):
        return f"StudyMethod({self.kind}, {self.statistic}, {self.combiner})"

    @classmethod
    def from_dict(cls, data):
        return cls(data.get('kind', MethodKinds.RANDOMIZATION),
            data.get('statistic', "dim"), data.get('combiner', "fisher"))


def _method_pval(method, net, spec, design, z, y, seed, options):
    if method.kind == MethodKinds.OLS:
        try:
            pval, _ = ols_baseline(z, net.counts(z), y,
                options.get('direction', Directions.DECREASING))
        except SimulationError as exc:
            logger.warning("OLS skipped, counted as no rejection: %s", exc)
            return 1.0
        return pval

    stat = StatSpec.from_name(method.statistic)
    combiner = CombinerSpec(method.combiner)
    if method.kind == MethodKinds.RANDOMIZATION:
        report = test_monotone(net, spec, design, z, y, stat, combiner,
            seed=seed, R=options.get('R'), threads=1,
            direction=options.get('direction', Directions.DECREASING))
    elif method.kind == MethodKinds.GENERAL:
        if options.get('parts') is None:
            raise SimulationError("The general method needs a partition")
        report = test_monotone_general(net, spec, design, options['parts'],
            z, y, stat, combiner, N_rand=options.get('N_rand'), seed=seed,
            direction=options.get('direction', Directions.DECREASING))
    else:
        raise RuntimeError(f"{method} has invalid kind")

    return report.combined_pval


def _replicate(net, spec, design, cells, methods, seed, options):
    """p-values of every method in every cell for one experiment. One
    assignment is shared by all cells."""
    z_seed, *cell_seeds = seed.spawn(1 + len(cells))
    z = design.sample(np.random.default_rng(z_seed))

    pvals = np.zeros((len(cells), len(methods)))
    for c, (config, cell_seed) in enumerate(zip(cells, cell_seeds)):
        outcome_seed, *method_seeds = cell_seed.spawn(1 + len(methods))
        oracle = make_dgp(config, net, spec,
            np.random.default_rng(outcome_seed))
        y = oracle.observe(net, z)
        for m, method in enumerate(methods):
            pvals[c, m] = _method_pval(method, net, spec, design, z, y,
                method_seeds[m], options)

    return pvals


def run_study(net, spec, design, cells, methods, n_reps, seed=None,
        alpha=0.05, threads=None, **options):
    """Rejection rates at level `alpha` of each method over `n_reps`
    simulated experiments per DGP cell.

    :param options: R, N_rand, parts (for the general method), direction
    :returns: DataFrame with columns dgp, param, method, statistic,
        combiner, rejection_rate, mc_se
    """
    if n_reps < 1:
        raise SimulationError("Need at least one replication")

    seeds = seed_sequence(seed).spawn(n_reps)
    pvals = Parallel(n_jobs=n_jobs(threads))(
        delayed(call_pinned)(pins(), _replicate, net, spec, design, cells,
            methods, child, options) for child in seeds)
    rejected = np.stack(pvals) <= alpha

    rows = []
    for c, config in enumerate(cells):
        for m, method in enumerate(methods):
            rate = float(rejected[:, c, m].mean())
            is_ols = method.kind == MethodKinds.OLS
            rows.append({
                'dgp': str(config.kind),
                'param': config.param,
                'method': str(method.kind),
                'statistic': "" if is_ols else method.statistic,
                'combiner': "" if is_ols else method.combiner,
                'rejection_rate': rate,
                'mc_se': math.sqrt(rate * (1 - rate) / n_reps),
            })

    logger.info("Study over %d cells x %d methods, %d reps", len(cells),
        len(methods), n_reps)
    return pd.DataFrame(rows, columns=['dgp', 'param', 'method', 'statistic',
        'combiner', 'rejection_rate', 'mc_se'])

# ===========================================================================

def grouped_rss(counts, y, threshold):
    """Residual sum of squares of y on indicators of count = 0..threshold-1
    and count >= threshold, and the number of nonempty cells. Works on a
    (draws, units) stack of counts."""
    cells = np.minimum(np.asarray(counts), threshold)
    y = np.asarray(y, dtype=float)

    rss, params = [], []
    for row in np.atleast_2d(cells):
        n_cell = np.bincount(row, minlength=threshold + 1)
        total = np.bincount(row, weights=y, minlength=threshold + 1)
        means = np.divide(total, n_cell, out=np.zeros_like(total),
            where=n_cell > 0)
        rss.append(float(((y - means[row]) ** 2).sum()))
        params.append(int((n_cell > 0).sum()))

    return np.array(rss), np.array(params)


def aic(rss, n, params):
    """n log(RSS / n) + 2 (params + 1)."""
    rss = np.maximum(rss, np.finfo(float).tiny)
    return n * np.log(rss / n) + 2 * (params + 1)


def grouping_statistic(counts, y, g_low, g_high):
    n = len(y)
    rss_low, k_low = grouped_rss(counts, y, g_low)
    rss_high, k_high = grouped_rss(counts, y, g_high)
    return aic(rss_low, n, k_low) - aic(rss_high, n, k_high)


def aic_grouping_test(net, g_low, g_high, design, z_obs, y, R=None, seed=None,
        units=None):
    """Randomization p-value for grouping counts at `g_low` rather than at
    `g_high`, fitted on units the design never treats (default).

    Empty cells simply drop out of the fit.
    """
    if not 0 < g_low < g_high:
        raise SimulationError("Need 0 < g_low < g_high")

    if units is None:
        units = np.flatnonzero(design.probs == 0) if \
            isinstance(design, BernoulliDesign) else np.arange(net.n)
    units = np.asarray(units, dtype=np.int64)
    if not len(units):
        raise SimulationError("No never-treated units to fit on")

    R = int(setting('R', R))
    y_u = np.asarray(y, dtype=float)[units]
    observed = grouping_statistic(net.counts(z_obs)[units], y_u, g_low,
        g_high)[0]

    draws = design.sample(make_rng(seed), R)
    counts = np.asarray(net.adjacency[units] @ draws.T.astype(np.int64)).T
    stats = grouping_statistic(counts, y_u, g_low, g_high)

    # float noise would split exact ties
    return pvalue(observed - 1e-9, stats), float(observed), stats

# ===========================================================================

def synthetic_network(n=2000, m=2, hotspot_share=0.05, p_hot=0.4, seed=None,
        restrict=True, extent=1000.0):
    """Preferential attachment network with a random hotspot subset, the
    only units the returned design can treat.

    :param restrict: keep only edges touching a hotspot
    :param extent: coordinates come from a spring layout scaled to
        [0, extent]^2
    :returns: (Network, BernoulliDesign, hotspot ids)
    """
    rng = make_rng(seed)
    graph = nx.barabasi_albert_graph(n, m, seed=int(rng.integers(2**31)))
    layout = nx.spring_layout(graph, seed=int(rng.integers(2**31)))
    coords = np.array([layout[i] for i in range(n)])
    coords = (coords - coords.min(axis=0)) / np.ptp(coords, axis=0).max() * \
        extent

    n_hot = max(1, int(round(hotspot_share * n)))
    hotspots = np.sort(rng.choice(n, size=n_hot, replace=False))
    is_hot = np.zeros(n, dtype=bool)
    is_hot[hotspots] = True

    neighbor_lists = [set() for _ in range(n)]
    for i, j in graph.edges():
        if restrict and not (is_hot[i] or is_hot[j]):
            continue
        neighbor_lists[i].add(j)
        neighbor_lists[j].add(i)

    probs = np.where(is_hot, p_hot, 0.0)
    net = Network(n, neighbor_lists, coords)
    logger.info("Synthetic %s with %d hotspots", net, n_hot)
    return net, BernoulliDesign(probs), hotspots
