"""Network splitting for the general-design test: Leiden-style community
detection, community informativeness and the community to contrast
assignment."""
import logging
import math
from collections import defaultdict, deque
from dataclasses import dataclass

import numpy as np
from django.db import models
from scipy import sparse

from core.biclique import NullExposureGraph
from core.conf import make_rng, setting
from core.network import bounded_levels

logger = logging.getLogger(__name__)

# ===========================================================================

class InfeasibleAssignmentError(ValueError):
    pass


class Metrics(models.TextChoices):
    DENSITY = "density"
    ROW_SD = "row-sd"
    COL_SD = "col-sd"


class PartitionSpec:
    def __init__(self, resolution=None, beta=None, iterations=None,
            seed=None):
        self.resolution = float(setting('LEIDEN_RESOLUTION', resolution))
        self.beta = float(setting('LEIDEN_BETA', beta))
        self.iterations = int(setting('LEIDEN_ITERATIONS', iterations))
        self.seed = seed

        if self.resolution <= 0:
            raise ValueError("Resolution must be positive")
        if self.beta <= 0:
            raise ValueError("Beta must be positive")
        if self.iterations < 1:
            raise ValueError("Need at least one iteration")

    def __str__(self):
        return (f"PartitionSpec(resolution={self.resolution}, "
            f"beta={self.beta}, iterations={self.iterations})")

    def to_dict(self):
        return {'resolution': self.resolution, 'beta': self.beta,
            'iterations': self.iterations, 'seed': self.seed}

# ===========================================================================
# Community detection

class _Level:
    """One (possibly aggregated) graph: weighted neighbor lists without
    self-loops, plus node weights that include them."""

    def __init__(self, matrix):
        matrix = sparse.csr_matrix(matrix)
        self.n = matrix.shape[0]
        self.matrix = matrix
        self.node_w = np.asarray(matrix.sum(axis=1)).ravel()
        self.total = float(self.node_w.sum())

        self.nbrs = []
        for i in range(self.n):
            start, end = matrix.indptr[i], matrix.indptr[i + 1]
            self.nbrs.append([(int(j), float(w)) for j, w in
                zip(matrix.indices[start:end], matrix.data[start:end])
                if j != i])


def _move_nodes(level, comm, rng, gamma):
    """Queue based local moving, each node to the neighboring community
    with the best modularity gain."""
    n = level.n
    tot = np.bincount(comm, weights=level.node_w, minlength=n)
    size = np.bincount(comm, minlength=n)
    empty = [c for c in range(n) if size[c] == 0]

    queue = deque(rng.permutation(n).tolist())
    queued = np.ones(n, dtype=bool)
    while queue:
        i = queue.popleft()
        queued[i] = False
        old = comm[i]
        k_i = level.node_w[i]

        links = defaultdict(float)
        for j, w in level.nbrs[i]:
            links[comm[j]] += w

        tot[old] -= k_i
        size[old] -= 1
        if size[old] == 0:
            empty.append(old)

        best = old
        best_gain = links.get(old, 0.0) - gamma * k_i * tot[old] / \
            level.total
        for c, k_ic in links.items():
            gain = k_ic - gamma * k_i * tot[c] / level.total
            if gain > best_gain + 1e-12:
                best, best_gain = c, gain

        if best_gain < -1e-12:
            best = empty[-1]

        if size[best] == 0:
            empty.remove(best)
        tot[best] += k_i
        size[best] += 1
        comm[i] = best

        if best != old:
            for j, _ in level.nbrs[i]:
                if comm[j] != best and not queued[j]:
                    queue.append(j)
                    queued[j] = True

    return comm


def _refine(level, comm, rng, gamma, beta):
    """Merges singletons inside each community into well connected
    sub-communities, picking among non-negative gains at random with
    weight exp(gain / beta)."""
    n = level.n
    ref = np.arange(n)
    ref_tot = level.node_w.copy()
    singleton = np.ones(n, dtype=bool)
    comm_tot = np.bincount(comm, weights=level.node_w, minlength=n)

    # links from each refined community to the rest of its community
    ext = np.zeros(n)
    for i in range(n):
        ext[i] = sum(w for j, w in level.nbrs[i] if comm[j] == comm[i])

    for i in rng.permutation(n).tolist():
        if not singleton[i]:
            continue

        c = comm[i]
        k_i = level.node_w[i]
        if ext[i] < gamma * k_i * (comm_tot[c] - k_i) / level.total:
            continue

        links = defaultdict(float)
        for j, w in level.nbrs[i]:
            if comm[j] == c:
                links[ref[j]] += w

        options = [(i, 0.0, 0.0)]
        for t, k_it in links.items():
            if ext[t] < gamma * ref_tot[t] * (comm_tot[c] - ref_tot[t]) / \
                    level.total:
                continue
            gain = k_it - gamma * k_i * ref_tot[t] / level.total
            if gain >= 0:
                options.append((t, gain, k_it))

        gains = np.array([gain for _, gain, _ in options])
        probs = np.exp((gains - gains.max()) / beta)
        pick = rng.choice(len(options), p=probs / probs.sum())
        target, _, k_it = options[pick]
        if target == i:
            continue

        ref[i] = target
        ext[target] = ext[target] + ext[i] - 2 * k_it
        ref_tot[target] += k_i
        singleton[i] = False
        singleton[target] = False

    return ref


def _relabel(labels):
    """Labels renumbered 0.. in order of first appearance."""
    _, first, inverse = np.unique(labels, return_index=True,
        return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse]


def _aggregate(level, ref):
    ref = _relabel(ref)
    indicator = sparse.csr_matrix((np.ones(level.n), (np.arange(level.n),
        ref)), shape=(level.n, ref.max() + 1))
    return _Level(indicator.T @ level.matrix @ indicator), ref


def _leiden_pass(base, labels, rng, gamma, beta):
    level = base
    comm = _relabel(labels)
    mapping = np.arange(base.n)
    while True:
        comm = _move_nodes(level, comm, rng, gamma)
        if len(np.unique(comm)) == level.n:
            break

        ref = _refine(level, comm, rng, gamma, beta)
        aggregated, ref = _aggregate(level, ref)
        if aggregated.n == level.n:
            break

        # aggregate nodes start in the community of their members
        start = np.zeros(aggregated.n, dtype=np.int64)
        start[ref] = comm
        mapping = ref[mapping]
        level, comm = aggregated, start

    return _relabel(comm[mapping])


def detect_communities(net, spec=None):
    """Per-unit community labels 0..C-1, deterministic given spec.seed."""
    spec = spec or PartitionSpec()
    if net.n == 0:
        return np.zeros(0, dtype=np.int64)
    if net.n_edges == 0:
        return np.arange(net.n)

    rng = make_rng(spec.seed)
    base = _Level(net.adjacency.astype(float))
    labels = np.arange(net.n)
    for iteration in range(spec.iterations):
        updated = _leiden_pass(base, labels, rng, spec.resolution, spec.beta)
        if np.array_equal(updated, labels):
            logger.debug("Leiden converged after %d iterations", iteration)
            break
        labels = updated

    logger.info("Found %d communities over %d units", labels.max() + 1,
        net.n)
    return labels


def modularity(net, labels, resolution=1.0):
    """Newman modularity of the labelled partition."""
    m = net.n_edges
    if m == 0:
        return 0.0

    labels = np.asarray(labels)
    degree_sum = np.bincount(labels, weights=net.degree)
    rows, cols = net.adjacency.nonzero()
    inside = np.bincount(labels[rows][labels[rows] == labels[cols]],
        minlength=len(degree_sum)) / 2
    return float((inside / m - resolution * (degree_sum / (2 * m)) ** 2
        ).sum())

# ===========================================================================
# Informativeness

def informativeness(ne, metric=Metrics.DENSITY):
    adjacency = ne.adjacency
    if adjacency.size == 0:
        return 0.0

    metric = Metrics(metric)
    if metric == Metrics.DENSITY:
        return float(adjacency.mean())
    elif metric == Metrics.ROW_SD:
        return float(adjacency.std(axis=1).mean())
    elif metric == Metrics.COL_SD:
        return float(adjacency.std(axis=0).mean())

    raise RuntimeError(f"Invalid metric {metric}")


def informativeness_matrix(net, spec, design, labels, metric=Metrics.DENSITY,
        N_rand=None, seed=None):
    """(C, K-1) informativeness of each community's null exposure graph for
    each contrast, and the community sizes."""
    N_rand = setting('N_RAND', N_rand)
    labels = np.asarray(labels)
    n_communities = int(labels.max()) + 1
    columns = design.sample(make_rng(seed), N_rand)

    M = np.zeros((n_communities, len(spec.contrasts)))
    for c in range(n_communities):
        members = np.flatnonzero(labels == c)
        counts = net.adjacency[members] @ columns.T.astype(np.int64)
        levels = bounded_levels(spec, np.asarray(counts))
        for k, contrast in enumerate(spec.contrasts):
            ne = NullExposureGraph(members, columns, levels, contrast)
            M[c, k] = informativeness(ne, metric)

    return M, np.bincount(labels, minlength=n_communities)

# ===========================================================================
# Assignment

@dataclass
class AssignmentProblem:
    M: np.ndarray
    S: np.ndarray
    A: np.ndarray | None = None
    method: str | None = None
    objective: float | None = None

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=float)
        self.S = np.asarray(self.S, dtype=float)

    @property
    def values(self):
        return self.M * self.S[:, None]

    def to_dict(self):
        return {
            'M': self.M.tolist(),
            'S': self.S.tolist(),
            'A': None if self.A is None else self.A.astype(int).tolist(),
            'method': self.method,
            'objective': self.objective,
        }


def _sums(values, choice):
    n_hyp = values.shape[1]
    sums = np.zeros(n_hyp)
    np.add.at(sums, choice, values[np.arange(len(choice)), choice])
    return sums


def _feasible(choice, n_hyp):
    return len(np.unique(choice)) == n_hyp


def _leximin_key(sums):
    return tuple(np.sort(sums))


def _exact(values):
    n_comm, n_hyp = values.shape
    order = np.argsort(-values.max(axis=1), kind='stable')
    suffix = np.zeros((n_comm + 1, n_hyp))
    for position in range(n_comm - 1, -1, -1):
        suffix[position] = suffix[position + 1] + values[order[position]]

    best = {'objective': -math.inf, 'choice': None}
    choice = np.zeros(n_comm, dtype=np.int64)
    sums = np.zeros(n_hyp)
    used = np.zeros(n_hyp, dtype=np.int64)

    def visit(position):
        remaining = n_comm - position
        if int((used == 0).sum()) > remaining:
            return
        if (sums + suffix[position]).min() <= best['objective']:
            return
        if position == n_comm:
            best['objective'] = float(sums.min())
            best['choice'] = choice.copy()
            return

        c = order[position]
        for k in np.argsort(-values[c], kind='stable'):
            choice[c] = k
            sums[k] += values[c, k]
            used[k] += 1
            visit(position + 1)
            sums[k] -= values[c, k]
            used[k] -= 1

    visit(0)
    return best['choice']


def _greedy_seed(values):
    n_comm, n_hyp = values.shape
    choice = np.full(n_comm, -1, dtype=np.int64)
    for k in range(n_hyp):
        free = np.flatnonzero(choice < 0)
        choice[free[np.argmax(values[free, k])]] = k

    for c in np.flatnonzero(choice < 0):
        choice[c] = int(np.argmax(values[c]))
    return choice


def _local_search(values, choice):
    """Single moves and pairwise swaps, accepted while the sorted vector of
    per-contrast scores improves."""
    n_comm, n_hyp = values.shape
    counts = np.bincount(choice, minlength=n_hyp)
    key = _leximin_key(_sums(values, choice))
    improved = True
    while improved:
        improved = False
        for c in range(n_comm):
            for k in range(n_hyp):
                if k == choice[c] or counts[choice[c]] == 1:
                    continue
                trial = choice.copy()
                trial[c] = k
                trial_key = _leximin_key(_sums(values, trial))
                if trial_key > key:
                    counts[choice[c]] -= 1
                    counts[k] += 1
                    choice, key, improved = trial, trial_key, True

        for a in range(n_comm):
            for b in range(a + 1, n_comm):
                if choice[a] == choice[b]:
                    continue
                trial = choice.copy()
                trial[a], trial[b] = choice[b], choice[a]
                trial_key = _leximin_key(_sums(values, trial))
                if trial_key > key:
                    choice, key, improved = trial, trial_key, True

    return choice


def _random_start(n_comm, n_hyp, rng):
    choice = rng.integers(n_hyp, size=n_comm)
    cover = rng.permutation(n_comm)[:n_hyp]
    choice[cover] = np.arange(n_hyp)
    return choice


def assign_communities(problem, exact_max=None, restarts=None, seed=None,
        method=None):
    """Solves max_A min_k sum_c A[c,k] M[c,k] S[c] with every community
    assigned once and every contrast getting at least one community.

    Exact branch and bound up to `exact_max` communities, otherwise a greedy
    seed plus randomly restarted move / swap local search. `method` forces
    "exact" or "heuristic". Communities with no value for any contrast are
    left unassigned (zero rows of A) when their contrast keeps another one.
    """
    values = problem.values
    n_comm, n_hyp = values.shape
    if n_comm < n_hyp:
        raise InfeasibleAssignmentError(f"{n_comm} communities cannot cover "
            f"{n_hyp} contrasts")

    exact_max = setting('ASSIGN_EXACT_MAX', exact_max)
    restarts = setting('ASSIGN_RESTARTS', restarts)
    method = method or ("exact" if n_comm <= exact_max else "heuristic")

    if method == "exact":
        choice = _exact(values)
    elif method == "heuristic":
        rng = make_rng(seed)
        choice = _local_search(values, _greedy_seed(values))
        best_key = _leximin_key(_sums(values, choice))
        for _ in range(restarts):
            trial = _local_search(values, _random_start(n_comm, n_hyp, rng))
            trial_key = _leximin_key(_sums(values, trial))
            if trial_key > best_key:
                choice, best_key = trial, trial_key
    else:
        raise ValueError(f"Unknown assignment method '{method}'")

    if not _feasible(choice, n_hyp):
        raise RuntimeError("Assignment left a contrast without communities")

    A = np.zeros((n_comm, n_hyp), dtype=np.int8)
    A[np.arange(n_comm), choice] = 1
    A[_leftovers(values, choice)] = 0
    problem.A = A
    problem.method = method
    problem.objective = float(_sums(values, choice).min())
    logger.info("Assignment by %s, objective %.4g", method,
        problem.objective)
    return A


def objective(problem, A):
    choice = np.argmax(A, axis=1)
    return float(_sums(problem.values, choice).min())


def _leftovers(values, choice):
    """Communities worth nothing to any contrast, dropped from their
    contrast as long as it keeps another community."""
    kept = np.bincount(choice, minlength=values.shape[1])
    dropped = []
    for c in np.flatnonzero(values.max(axis=1) <= 0):
        if kept[choice[c]] > 1:
            kept[choice[c]] -= 1
            dropped.append(c)

    return np.asarray(dropped, dtype=np.int64)


def order_partition(labels, A):
    """Per-unit part index: communities assigned to contrast k form part k,
    unassigned communities (zero rows of A) form the last part K-1, which is
    never tested."""
    A = np.asarray(A)
    part = np.where(A.any(axis=1), np.argmax(A, axis=1), A.shape[1])
    return part[np.asarray(labels)]


def split_by_coordinate(net, K):
    """Baseline split into K parts by quantiles of the x coordinate."""
    if net.coords is None:
        raise ValueError("Coordinate split needs coordinates")

    x = net.coords[:, 0]
    cuts = np.quantile(x, np.linspace(0, 1, K + 1)[1:-1])
    return np.searchsorted(cuts, x, side='right')
