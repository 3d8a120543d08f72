"""Modules and module sets for the contrast randomization test."""
import logging
from dataclasses import dataclass, field

import numpy as np

from core.conf import make_rng, setting
from core.network import bounded_levels, exposure_bounds_all

logger = logging.getLogger(__name__)

# ===========================================================================

def check_contrast(spec, contrast):
    low, high = (int(c) for c in contrast)
    if high != low + 1 or low < 0 or high >= spec.K:
        raise ValueError(f"Contrast {tuple(contrast)} is not a pair of "
            f"adjacent levels of {spec}")
    return low, high


def universe_mask(design, randomizable=None):
    """Boolean mask of units that may serve as randomization units."""
    mask = design.randomizable_mask.copy()
    if randomizable is not None:
        chosen = np.zeros(design.n, dtype=bool)
        chosen[list(randomizable)] = True
        mask &= chosen
    return mask


def pinned_and_free(design, universe, fixed):
    """Values that cannot move (fixed coordinates and degenerate
    probabilities) and the mask of units that can."""
    pinned = design.deterministic.astype(np.int64)
    free = universe.copy()
    for unit, value in fixed.items():
        pinned[unit] = int(value)
        free[unit] = False

    # a non-randomizable unit with 0 < p < 1 is held at control
    return pinned * ~free, free


def screen_candidates(net, spec, design, contrast, universe, fixed,
        excluded_focal=()):
    """Units that can be active focal units for `contrast`: able to be in
    control and with exposure bounds straddling the contrast."""
    low, high = contrast
    pinned, free = pinned_and_free(design, universe, fixed)
    w_none, w_all = exposure_bounds_all(net, spec, pinned, free)

    mask = (w_none <= low) & (w_all >= high) & (design.probs < 1)
    for unit, value in fixed.items():
        if int(value) == 1:
            mask[unit] = False
    mask[list(excluded_focal)] = False
    return mask

# ===========================================================================

@dataclass(frozen=True)
class Module:
    e_foc: tuple
    e_rand: tuple
    uniform: bool = True

    def __str__(self):
        return f"Module(focal={list(self.e_foc)}, rand={list(self.e_rand)})"

    @property
    def units(self):
        return set(self.e_foc) | set(self.e_rand)

    def to_dict(self):
        return {'focal': list(self.e_foc), 'rand': list(self.e_rand),
            'uniform': self.uniform}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(int(i) for i in data['focal']),
            tuple(int(i) for i in data['rand']), bool(data['uniform']))


@dataclass
class ModuleSet:
    modules: list
    generalized: bool = False
    contrast: tuple | None = None

    def __str__(self):
        return (f"ModuleSet(modules={len(self.modules)}, "
            f"focal={len(self.focal_units)}, generalized={self.generalized})")

    def __len__(self):
        return len(self.modules)

    @property
    def focal_units(self):
        return {i for module in self.modules for i in module.e_foc}

    @property
    def units(self):
        return {i for module in self.modules for i in module.units}

    def private_rand(self, index):
        """Randomization units of module `index` that belong to no other
        module."""
        others = set()
        for position, module in enumerate(self.modules):
            if position != index:
                others |= module.units
        return set(self.modules[index].e_rand) - others

    def to_dict(self):
        return {
            'generalized': self.generalized,
            'contrast': None if self.contrast is None else list(self.contrast),
            'modules': [module.to_dict() for module in self.modules],
        }

    @classmethod
    def from_dict(cls, data):
        contrast = data.get('contrast')
        return cls([Module.from_dict(m) for m in data['modules']],
            bool(data.get('generalized', False)),
            None if contrast is None else tuple(contrast))


@dataclass
class ActiveSets:
    a_foc: list
    a_rand: list
    active_indices: list = field(default_factory=list)

    @property
    def focal_units(self):
        return [i for index in self.active_indices for i in self.a_foc[index]]

    @property
    def count(self):
        return sum(len(self.a_foc[index]) for index in self.active_indices)

# ===========================================================================

def build_module_set(net, spec, design, contrast, randomizable=None,
        excluded_focal=(), fixed=None, seed=None, generalized=False):
    """Greedy module set for `contrast`.

    Screened focal candidates are visited in a seeded uniform random order.
    Each free candidate j starts the module {j} + randomizable N(j), and
    that module plus its neighborhood leaves the pool. Left over candidates
    with the same randomizable neighbors (and the same pinned exposure) then
    join a module as extra focal units.

    :param fixed: {unit: value} held at their observed values, e.g. the
        units of earlier module sets
    :param generalized: build a generalized set instead, where modules only
        need disjoint randomization sets with a private part
    """
    contrast = check_contrast(spec, contrast)
    fixed = dict(fixed or {})
    universe = universe_mask(design, randomizable)
    rng = make_rng(seed)

    candidates = screen_candidates(net, spec, design, contrast, universe,
        fixed, excluded_focal)
    order = rng.permutation(np.flatnonzero(candidates)).tolist()

    if generalized:
        modules = _greedy_generalized(net, universe, order)
    else:
        modules = _greedy(net, universe, order)
        pinned, _ = pinned_and_free(design, universe, fixed)
        offset = net.counts(pinned * ~universe)
        modules = _augment(net, universe, candidates, modules, offset)

    mset = ModuleSet(modules, generalized, contrast)
    logger.info("Contrast %s: %s from %d candidates", contrast, mset,
        len(order))
    return mset


def _rand_neighbors(net, universe, i):
    return tuple(j for j in net.neighbors(i) if universe[j])


def _greedy(net, universe, order):
    pool = set(order)
    modules = []
    for j in order:
        if j not in pool:
            continue

        e_rand = _rand_neighbors(net, universe, j)
        units = {j, *e_rand}
        modules.append(Module((j, ), e_rand))
        pool -= units | net.neighborhood(units)

    return modules


def _augment(net, universe, candidates, modules, offset):
    used = set()
    for module in modules:
        used |= module.units

    by_signature = {}
    for index, module in enumerate(modules):
        j = module.e_foc[0]
        by_signature[(module.e_rand, int(offset[j]))] = index

    focal = {index: list(module.e_foc) for index, module in
        enumerate(modules)}
    for u in np.flatnonzero(candidates).tolist():
        if u in used:
            continue

        key = (_rand_neighbors(net, universe, u), int(offset[u]))
        index = by_signature.get(key)
        if index is None:
            continue

        nbrs = set(net.neighbors(u))
        if nbrs.intersection(focal[index]):
            continue

        focal[index].append(u)
        used.add(u)

    return [Module(tuple(sorted(focal[index])), module.e_rand, True)
        for index, module in enumerate(modules)]


def _greedy_generalized(net, universe, order):
    focal_units = set()
    rand_owner = {}
    private = []
    modules = []
    for j in order:
        if j in focal_units:
            continue

        e_rand = _rand_neighbors(net, universe, j)
        if any(r in rand_owner for r in e_rand):
            continue

        mine = set(e_rand) - focal_units
        if not mine:
            continue

        # j may sit in another module's randomization set, as long as that
        # module keeps a private unit
        owner = rand_owner.get(j)
        if owner is not None and private[owner] <= {j}:
            continue
        if owner is not None:
            private[owner].discard(j)

        index = len(modules)
        modules.append(Module((j, ), e_rand))
        private.append(mine)
        focal_units.add(j)
        for r in e_rand:
            rand_owner[r] = index

    return modules

# ===========================================================================

def _focal_levels(net, spec, focal, draws):
    """(draws, len(focal)) exposure levels of the focal units."""
    sub = net.adjacency[focal]
    counts = (sub @ draws.T.astype(np.int64)).T
    return bounded_levels(spec, counts)


def active_sets(mset, net, spec, z, contrast):
    """Active focal and randomization units of every module under `z`."""
    low, high = contrast
    z = np.asarray(z)
    a_foc, a_rand, active = [], [], []
    for index, module in enumerate(mset.modules):
        focal = list(module.e_foc)
        levels = _focal_levels(net, spec, focal, z[None, :])[0]
        chosen = tuple(i for i, level in zip(focal, levels)
            if z[i] == 0 and low <= level <= high)

        rand = tuple(r for r in module.e_rand
            if set(net.neighbors(r)).intersection(chosen))
        a_foc.append(chosen)
        a_rand.append(rand)
        if chosen:
            active.append(index)

    return ActiveSets(a_foc, a_rand, active)


def expected_active_focal_count(mset, net, spec, design, contrast, fixed=None,
        M=None, rng=None):
    """Monte Carlo mean number of active focal units over M design draws.

    Draws come from the design given `fixed` only, the observed assignment
    never enters.
    """
    M = setting('SELECTION_DRAWS', M)
    focal = sorted(mset.focal_units)
    if not focal or M < 1:
        return 0.0

    low, high = contrast
    draws = design.conditional_sample(dict(fixed or {}), make_rng(rng), M)
    levels = _focal_levels(net, spec, focal, draws)
    active = (draws[:, focal] == 0) & (levels >= low) & (levels <= high)
    return float(active.sum(axis=1).mean())

# ===========================================================================

def validate(mset, net, randomizable):
    """Violated module / module set invariants, as messages."""
    universe = np.zeros(net.n, dtype=bool)
    universe[list(randomizable)] = True

    problems = []
    for index, module in enumerate(mset.modules):
        focal = set(module.e_foc)
        rand = set(module.e_rand)
        if not focal:
            problems.append(f"module {index} has no focal units")
        if focal & rand:
            problems.append(f"module {index}: focal and randomization "
                f"units overlap on {sorted(focal & rand)}")
        if rand - set(np.flatnonzero(universe).tolist()):
            problems.append(f"module {index}: non-randomizable units in "
                "randomization set")

        for i in focal:
            nbrs = set(net.neighbors(i))
            if nbrs & focal:
                problems.append(f"module {index}: adjacent focal units "
                    f"{i} and {sorted(nbrs & focal)}")
            missing = {j for j in nbrs if universe[j]} - rand
            if missing:
                problems.append(f"module {index}: neighbors {sorted(missing)}"
                    f" of focal {i} outside randomization set")
            if module.uniform and \
                    set(_rand_neighbors(net, universe, i)) != rand:
                problems.append(f"module {index}: flagged uniform but focal "
                    f"{i} has a different neighborhood")

    for a in range(len(mset.modules)):
        for b in range(a + 1, len(mset.modules)):
            first, second = mset.modules[a], mset.modules[b]
            if mset.generalized:
                shared = set(first.e_rand) & set(second.e_rand)
                if shared:
                    problems.append(f"randomization sets overlap: modules "
                        f"{a} and {b} share {sorted(shared)}")
            else:
                shared = first.units & second.units
                if shared:
                    problems.append(f"modules overlap: {a} and {b} share "
                        f"{sorted(shared)}")

    if mset.generalized:
        for index in range(len(mset.modules)):
            if not mset.private_rand(index):
                problems.append(
                    f"no private randomization units in module {index}")

    return problems
