"""Brute-force reference computations for small instances. Outcomes and
exposures are recomputed unit by unit rather than through the engine's
vectorized code paths."""
import itertools

import numpy as np

from core.biclique import NullExposureGraph
from core.network import Network


def random_graph(n, p_edge, rng):
    neighbor_lists = [set() for _ in range(n)]
    for i, j in itertools.combinations(range(n), 2):
        if rng.random() < p_edge:
            neighbor_lists[i].add(j)
            neighbor_lists[j].add(i)
    return Network(n, neighbor_lists)


def count(net, z, i):
    return sum(int(z[j]) for j in net.neighbors(i))


def level(spec, c):
    if spec.terminal is not None:
        return min(c, spec.exact)
    return c if c < spec.exact else spec.K


def bernoulli_prob(probs, units, values):
    result = 1.0
    for unit, value in zip(units, values):
        result *= probs[unit] if value == 1 else 1 - probs[unit]
    return result


def difference_in_means(y, high):
    top = [v for v, h in zip(y, high) if h]
    bottom = [v for v, h in zip(y, high) if not h]
    if not top:
        return -np.inf
    if not bottom:
        return np.inf
    return sum(top) / len(top) - sum(bottom) / len(bottom)


def exact_module_pvalue(net, spec, probs, mset, z_obs, y, contrast,
        conditioning=()):
    """Exact conditional p-value of the difference in means over the
    active focal units, enumerating every state of the free units."""
    low, high = contrast
    z_obs = list(int(v) for v in z_obs)

    focal = []
    free = []
    for module in mset.modules:
        active = [i for i in module.e_foc if z_obs[i] == 0 and
            low <= level(spec, count(net, z_obs, i)) <= high]
        if not active:
            continue
        touching = set()
        for i in active:
            touching |= set(net.neighbors(i))
        focal.extend(active)
        free.extend(r for r in module.e_rand if r in touching and
            r not in set(conditioning))

    if not focal:
        return None

    def statistic(z):
        return difference_in_means([y[i] for i in focal],
            [level(spec, count(net, z, i)) == high for i in focal])

    t_obs = statistic(z_obs)
    total = tail = 0.0
    for values in itertools.product((0, 1), repeat=len(free)):
        z = list(z_obs)
        for unit, value in zip(free, values):
            z[unit] = value

        levels = [level(spec, count(net, z, i)) for i in focal]
        if not all(low <= lv <= high for lv in levels):
            continue

        weight = bernoulli_prob(probs, free, values)
        total += weight
        if statistic(z) >= t_obs - 1e-12:
            tail += weight

    return tail / total


def exact_biclique_pvalue(net, spec, probs, units, columns, obs, y, high):
    """Probability weighted share of `columns` whose difference in means
    over `units` is at least that of column `obs`."""
    def statistic(z):
        return difference_in_means([y[i] for i in units],
            [level(spec, count(net, z, i)) == high for i in units])

    t_obs = statistic(obs)
    total = tail = 0.0
    for z in columns:
        weight = bernoulli_prob(probs, range(len(z)), z)
        total += weight
        if statistic(z) >= t_obs - 1e-12:
            tail += weight
    return tail / total


def greedy_trace(net, order, randomizable):
    """Plain re-statement of the sequential module construction loop:
    (modules as (focal, rand) pairs, pool after each step)."""
    pool = set(order)
    modules, pools = [], []
    for j in order:
        if j not in pool:
            continue
        rand = tuple(k for k in net.neighbors(j) if k in randomizable)
        units = {j, *rand}
        removed = set(units)
        for u in units:
            removed |= set(net.neighbors(u))
        pool -= removed
        modules.append(((j, ), rand))
        pools.append(set(pool))
    return modules, pools


def best_assignment(values):
    """Brute-force max over assignments covering every contrast of the
    smallest per-contrast total."""
    n_comm, n_hyp = values.shape
    best = -np.inf
    for choice in itertools.product(range(n_hyp), repeat=n_comm):
        if len(set(choice)) < n_hyp:
            continue
        sums = np.zeros(n_hyp)
        for c, k in enumerate(choice):
            sums[k] += values[c, k]
        best = max(best, sums.min())
    return best


def control_graph(levels, contrast=(0, 1), weights=None, obs_column=None):
    """NE graph whose units are in control under every column, so edges
    follow `levels` alone."""
    levels = np.asarray(levels)
    n_units, n_columns = levels.shape
    columns = np.zeros((n_columns, n_units), dtype=np.int8)
    return NullExposureGraph(range(n_units), columns, levels, contrast,
        weights, obs_column)


def exact_active_count(net, spec, probs, mset, contrast):
    """Expected number of active focal units of `mset`, enumerating every
    randomizable unit of the design."""
    low, high = contrast
    free = [u for u in range(net.n) if 0 < probs[u] < 1]
    base = [1 if p >= 1 else 0 for p in probs]
    focal = sorted(mset.focal_units)

    expected = 0.0
    for values in itertools.product((0, 1), repeat=len(free)):
        z = list(base)
        for unit, value in zip(free, values):
            z[unit] = value

        active = sum(1 for i in focal if z[i] == 0 and
            low <= level(spec, count(net, z, i)) <= high)
        expected += bernoulli_prob(probs, free, values) * active
    return expected
