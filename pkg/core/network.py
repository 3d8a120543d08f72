"""Interference networks, neighbor-count exposures and observed data."""
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

logger = logging.getLogger(__name__)

# ===========================================================================

class NetworkError(ValueError):
    pass


class ExposureError(ValueError):
    pass

# ===========================================================================

class Network:
    """Undirected simple graph over units 0..n-1 with optional planar
    coordinates. Immutable after construction."""

    def __init__(self, n, neighbor_lists, coords=None):
        self.n = int(n)
        self.neighbor_lists = tuple(tuple(sorted(set(nbrs)))
            for nbrs in neighbor_lists)
        if len(self.neighbor_lists) != self.n:
            raise NetworkError(
                f"Expected {self.n} neighbor lists, got "
                f"{len(self.neighbor_lists)}")

        if coords is not None:
            coords = np.asarray(coords, dtype=float)
            if coords.shape != (self.n, 2):
                raise NetworkError(
                    f"Coordinates must be {self.n}x2, got {coords.shape}")
            coords.setflags(write=False)
        self.coords = coords

        self._check()

    def __str__(self):
        return f"Network(n={self.n}, edges={self.n_edges})"

    def _check(self):
        for i, nbrs in enumerate(self.neighbor_lists):
            for j in nbrs:
                if j == i:
                    raise NetworkError(f"Self-loop on unit {i}")
                if not 0 <= j < self.n:
                    raise NetworkError(f"Unit {i} has neighbor {j} out of "
                        f"range [0, {self.n})")

        adj = self.adjacency
        if (adj != adj.T).nnz:
            raise NetworkError("Neighbor lists are not symmetric")

    @cached_property
    def adjacency(self):
        """CSR 0/1 adjacency matrix (int64)."""
        rows = np.repeat(np.arange(self.n), self.degree)
        cols = np.fromiter((j for nbrs in self.neighbor_lists for j in nbrs),
            dtype=np.int64, count=int(self.degree.sum()))
        data = np.ones(len(cols), dtype=np.int64)
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def degree(self):
        return np.array([len(nbrs) for nbrs in self.neighbor_lists],
            dtype=np.int64)

    @property
    def n_edges(self):
        return int(self.degree.sum()) // 2

    def neighbors(self, i):
        return self.neighbor_lists[i]

    def neighborhood(self, units):
        """Union of the neighbor lists of `units`."""
        result = set()
        for i in units:
            result.update(self.neighbor_lists[i])
        return result

    def edges(self):
        return [(i, j) for i, nbrs in enumerate(self.neighbor_lists)
            for j in nbrs if i < j]

    def counts(self, z):
        """Raw treated-neighbor count for every unit."""
        return self.adjacency @ np.asarray(z, dtype=np.int64)

    def subgraph_closed(self, units):
        """True where every neighbor of the unit lies inside `units`."""
        inside = np.zeros(self.n, dtype=np.int64)
        inside[list(units)] = 1
        return (self.adjacency @ (1 - inside)) == 0


def hotspot_pairs(randomizable):
    """Pair restriction keeping only pairs with at least one endpoint in
    `randomizable`."""
    members = set(int(i) for i in randomizable)

    def restrict(i, j):
        return i in members or j in members

    return restrict


def build_network(n=None, edges=None, coords=None, radius=None,
        restrict_pairs=None):
    """Creates a Network either from an edge list or from coordinates.

    :param n: number of units; inferred from `coords` when omitted
    :param edges: iterable of (i, j); duplicates are dropped, self-loops and
        out of range ids raise :class:`NetworkError`
    :param coords: (n, 2) coordinates, kept on the Network either way
    :param radius: coordinate mode threshold, an edge joins units with
        distance <= radius
    :param restrict_pairs: optional predicate (i, j) -> bool applied to
        coordinate-mode pairs, see :func:`hotspot_pairs`
    """
    if coords is not None:
        coords = np.asarray(coords, dtype=float)
        if n is None:
            n = len(coords)
    if n is None:
        raise NetworkError("Number of units unknown")
    n = int(n)

    neighbor_lists = [set() for _ in range(n)]
    if edges is not None:
        for i, j in edges:
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n):
                raise NetworkError(f"Edge ({i}, {j}) out of range [0, {n})")
            if i == j:
                raise NetworkError(f"Self-loop on unit {i}")

            neighbor_lists[i].add(j)
            neighbor_lists[j].add(i)
    elif radius is not None:
        if coords is None:
            raise NetworkError("Radius mode requires coordinates")
        if radius <= 0:
            raise NetworkError(f"Radius must be positive, got {radius}")

        tree = cKDTree(coords)
        pairs = tree.query_pairs(radius, output_type='ndarray')
        for i, j in pairs:
            i, j = int(i), int(j)
            if restrict_pairs is not None and not restrict_pairs(i, j):
                continue

            neighbor_lists[i].add(j)
            neighbor_lists[j].add(i)

    net = Network(n, neighbor_lists, coords)
    logger.debug("Built %s", net)
    return net

# ===========================================================================

LABEL_RE = re.compile(r'^\s*(\[?\s*>=\s*)?(\d+)\s*\]?\s*$')


class ExposureSpec:
    """Ordered neighbor-count exposure levels.

    Exact counts run 0..m-1; an optional terminal group "[>=m]" collects
    everything from m upward. Level indices are 0..K-1.
    """
    def __init__(self, exact, terminal=None, radius=None):
        self.exact = int(exact)
        self.terminal = None if terminal is None else int(terminal)
        self.radius = radius

        if self.exact < 0:
            raise ExposureError("Number of exact levels must be >= 0")
        if self.terminal is not None and self.terminal != self.exact:
            raise ExposureError(
                f"Terminal group must start at {self.exact}, right after "
                f"the exact counts, got {self.terminal}")
        if self.K < 2:
            raise ExposureError("At least two exposure levels are needed")

    def __str__(self):
        return f"ExposureSpec({','.join(self.labels)})"

    def __eq__(self, other):
        return isinstance(other, ExposureSpec) and \
            (self.exact, self.terminal) == (other.exact, other.terminal)

    def __hash__(self):
        return hash((self.exact, self.terminal))

    @classmethod
    def from_labels(cls, text, radius=None):
        """Parses "0,1,2,>=3" (or "0,1,2,[>=3]")."""
        parts = [p for p in text.split(',') if p.strip()]
        exact = 0
        terminal = None
        for position, part in enumerate(parts):
            match = LABEL_RE.match(part)
            if not match:
                raise ExposureError(f"Cannot parse exposure level '{part}'")

            value = int(match.group(2))
            if match.group(1):
                if position != len(parts) - 1:
                    raise ExposureError("Terminal group must be last")
                terminal = value
            else:
                if value != exact:
                    raise ExposureError(
                        f"Exact levels must count up from 0, got {value}")
                exact += 1

        return cls(exact, terminal, radius)

    @property
    def K(self):
        return self.exact + (self.terminal is not None)

    @property
    def labels(self):
        result = [str(c) for c in range(self.exact)]
        if self.terminal is not None:
            result.append(f">={self.terminal}")
        return result

    @property
    def contrasts(self):
        """Adjacent level pairs (k, k+1), k = 0..K-2."""
        return [(k, k + 1) for k in range(self.K - 1)]

    def level(self, count):
        """Level index for a single raw count."""
        levels = self.levels(np.array([count]))
        return int(levels[0])

    def levels(self, counts, strict=True):
        """Vectorized count -> level index. Unmapped counts (only possible
        without a terminal group) raise, or become -1 when `strict` is
        False."""
        counts = np.asarray(counts, dtype=np.int64)
        if self.terminal is not None:
            return np.minimum(counts, self.exact)

        result = np.where(counts < self.exact, counts, -1)
        if strict and (result < 0).any():
            bad = int(counts[result < 0].max())
            raise ExposureError(f"Count {bad} has no exposure level, "
                f"add a terminal group such as >={self.exact}")

        return result

    def to_dict(self):
        return {'labels': self.labels, 'radius': self.radius}

    @classmethod
    def from_dict(cls, data):
        return cls.from_labels(','.join(data['labels']), data.get('radius'))


def exposure(net, spec, z, i):
    """Exposure level index of unit `i` under full assignment `z`."""
    z = np.asarray(z)
    count = int(z[list(net.neighbor_lists[i])].sum()) \
        if net.neighbor_lists[i] else 0
    return spec.level(count)


def exposures(net, spec, z, strict=True):
    """Exposure level index of every unit."""
    return spec.levels(net.counts(z), strict=strict)


def exposure_bounds(net, spec, i, fixed=None, randomizable=None, probs=None):
    """(w_none, w_all) level indices for unit `i`.

    Fixed neighbors keep their pinned values, randomizable neighbors vary
    freely. Any other neighbor is deterministic: treated when its design
    probability is 1, control otherwise.
    """
    fixed = fixed or {}
    randomizable = set() if randomizable is None else set(randomizable)

    low = high = 0
    for j in net.neighbor_lists[i]:
        if j in fixed:
            low += int(fixed[j])
            high += int(fixed[j])
        elif j in randomizable and \
                (probs is None or 0.0 < probs[j] < 1.0):
            high += 1
        elif probs is not None and probs[j] >= 1.0:
            low += 1
            high += 1

    low, high = bounded_levels(spec, np.array([low, high]))
    return int(low), int(high)


def exposure_bounds_all(net, spec, pinned, free):
    """Vectorized bounds for every unit.

    :param pinned: 0/1 vector of values that cannot change (fixed units and
        degenerate probabilities)
    :param free: boolean mask of neighbors that may take either value
    """
    low = net.counts(pinned)
    high = low + net.counts(np.asarray(free, dtype=np.int64))
    return bounded_levels(spec, low), bounded_levels(spec, high)


def bounded_levels(spec, counts):
    """Like :meth:`ExposureSpec.levels` but counts with no level map to K,
    above every real level."""
    levels = spec.levels(counts, strict=False)
    return np.where(levels < 0, spec.K, levels)

# ===========================================================================

@dataclass
class ObservedData:
    z_obs: np.ndarray
    y_post: np.ndarray
    y_pre: np.ndarray | None = None
    x: np.ndarray | None = None
    covariate_names: list = field(default_factory=list)

    def __post_init__(self):
        self.z_obs = np.asarray(self.z_obs, dtype=np.int8)
        self.y_post = np.asarray(self.y_post, dtype=float)
        n = len(self.z_obs)

        if not np.isin(self.z_obs, (0, 1)).all():
            raise ValueError("Treatments must be 0 or 1")
        if len(self.y_post) != n:
            raise ValueError("y_post length does not match z_obs")
        if self.y_pre is not None:
            self.y_pre = np.asarray(self.y_pre, dtype=float)
            if len(self.y_pre) != n:
                raise ValueError("y_pre length does not match z_obs")
        if self.x is not None:
            self.x = np.asarray(self.x, dtype=float)
            if self.x.ndim == 1:
                self.x = self.x[:, None]
            if len(self.x) != n:
                raise ValueError("Covariates length does not match z_obs")

    @property
    def n(self):
        return len(self.z_obs)
