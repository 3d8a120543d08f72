"""Conditional randomization test for one exposure contrast."""
import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from core.conf import make_rng, n_jobs, seed_sequence, setting
from core.design import (EnumerationCapExceeded, enumerate_sub_assignments,
    rejection_sample)
from core.modsets import active_sets, check_contrast
from core.network import bounded_levels
from core.teststats import StatSpec

logger = logging.getLogger(__name__)

# ===========================================================================

class DegenerateModuleError(RuntimeError):
    pass


def pvalue(t_obs, draws):
    """(1 + #{draws >= t_obs}) / (1 + R)."""
    draws = np.asarray(draws)
    return (1 + int(np.count_nonzero(draws >= t_obs))) / (1 + len(draws))


@dataclass
class RandomizationResult:
    pval: float
    t_obs: float
    draws: np.ndarray = field(repr=False)
    active_focal_count: int
    degenerate: bool = False
    dropped_modules: int = 0
    active_modules: int = 0
    contrast: tuple | None = None

    def __str__(self):
        flag = " degenerate" if self.degenerate else ""
        return (f"RandomizationResult(contrast={self.contrast}, "
            f"pval={self.pval:.4g}, active={self.active_focal_count}{flag})")

    @classmethod
    def degenerate_result(cls, contrast=None, dropped=0):
        return cls(1.0, float('nan'), np.empty(0), 0, True, dropped, 0,
            contrast)

    def to_dict(self):
        t_obs = None if np.isnan(self.t_obs) else _finite(self.t_obs)
        return {
            'contrast': None if self.contrast is None else
                list(self.contrast),
            'pval': self.pval,
            't_obs': t_obs,
            'R': len(self.draws),
            'active_focal_count': self.active_focal_count,
            'active_modules': self.active_modules,
            'dropped_modules': self.dropped_modules,
            'degenerate': self.degenerate,
        }


def _finite(value):
    if np.isinf(value):
        return "inf" if value > 0 else "-inf"
    return float(value)

# ===========================================================================

class ModuleDistribution:
    """Law of a module's free randomization units given the active focal
    units stay at the contrast levels and the conditioning set stays at the
    observed values."""

    def __init__(self, spec, a_foc, free, incidence, pinned, contrast,
            design, budget=None):
        self.spec = spec
        self.a_foc = list(a_foc)
        self.free = list(free)
        self.incidence = incidence
        self.pinned = pinned
        self.contrast = contrast
        self.design = design
        self.budget = budget
        self.enumeration = None

    def __str__(self):
        how = "enumerated" if self.enumerated else "rejection"
        return (f"ModuleDistribution(focal={self.a_foc}, free={self.free}, "
            f"{how})")

    @property
    def enumerated(self):
        return self.enumeration is not None

    def levels(self, states):
        """(len(states), len(a_foc)) exposure levels of the active focal
        units."""
        counts = self.pinned + np.asarray(states, dtype=np.int64) @ \
            self.incidence.T
        return bounded_levels(self.spec, counts)

    def accept(self, states):
        low, high = self.contrast
        levels = self.levels(states)
        return ((levels >= low) & (levels <= high)).all(axis=1)

    def high(self, states):
        return self.levels(states) == self.contrast[1]

    @property
    def probs(self):
        return self.enumeration.probs / self.enumeration.total

    @property
    def p_uniform(self):
        """Probability that the focal units sit at the higher level, when
        they all share one exposure (uniform module); None otherwise."""
        if not self.enumerated:
            return None
        if len(set(map(tuple, self.incidence))) != 1 or \
                len(set(self.pinned.tolist())) != 1:
            return None

        high = self.high(self.enumeration.states)[:, 0]
        return float(self.probs[high].sum())

    def sample(self, size, rng):
        """(size, len(free)) states."""
        if self.enumerated:
            index = make_rng(rng).choice(len(self.probs), size=size,
                p=self.probs)
            return self.enumeration.states[index]

        return rejection_sample(self.design, self.free, self.accept, size,
            rng, self.budget)


def module_randomization_distribution(module, net, spec, z_obs, contrast,
        design, conditioning=(), a_foc=None, cap=None, budget=None):
    """Conditional law of a module's randomization units.

    Enumerated exactly when few units are free, otherwise realized by
    rejection sampling. Raises :class:`DegenerateModuleError` when nothing
    keeps the focal units inside the contrast.
    """
    low, high = check_contrast(spec, contrast)
    z_obs = np.asarray(z_obs)
    conditioning = set(conditioning)

    if a_foc is None:
        levels = bounded_levels(spec, net.counts(z_obs))
        a_foc = [i for i in module.e_foc
            if z_obs[i] == 0 and low <= levels[i] <= high]
    a_foc = list(a_foc)
    if not a_foc:
        raise ValueError(f"{module} is not active under the observed "
            "assignment")

    touching = net.neighborhood(a_foc)
    free = [r for r in module.e_rand
        if r in touching and r not in conditioning]

    incidence = np.zeros((len(a_foc), len(free)), dtype=np.int64)
    position = {r: column for column, r in enumerate(free)}
    for row, i in enumerate(a_foc):
        for j in net.neighbors(i):
            if j in position:
                incidence[row, position[j]] = 1

    observed = net.counts(z_obs)[a_foc]
    pinned = observed - incidence @ z_obs[free].astype(np.int64)

    dist = ModuleDistribution(spec, a_foc, free, incidence, pinned,
        (low, high), design, budget)

    try:
        dist.enumeration = enumerate_sub_assignments(design, free,
            dist.accept, cap)
    except EnumerationCapExceeded:
        logger.info("%d free units, falling back to rejection sampling",
            len(free))
        return dist

    if dist.enumeration.total <= 0:
        raise DegenerateModuleError(f"{module} has no mass on contrast "
            f"{(low, high)}")

    return dist

# ===========================================================================

def _chunk_stats(dists, stat, y_u, focal, size, seed):
    rng = np.random.default_rng(seed)
    highs = [dist.high(dist.sample(size, rng)) for dist in dists]
    return stat.batch(np.concatenate(highs, axis=1), y_u, focal)


def test_contrast(net, spec, design, mset, z_obs, y, contrast, stat=None,
        R=None, conditioning=(), seed=None, cap=None, budget=None,
        chunk_size=None, threads=None):
    """Randomization p-value for the contrast between two adjacent levels.

    Modules are resampled independently. Draws are made in chunks, each
    with its own seed spawned from `seed`, so results do not depend on how
    chunks are scheduled.
    """
    contrast = check_contrast(spec, contrast)
    stat = stat or StatSpec()
    R = int(setting('R', R))
    if R < 1:
        raise ValueError("R must be >= 1")

    chunk_size = setting('CHUNK_SIZE', chunk_size)
    z_obs = np.asarray(z_obs)
    y = np.asarray(y, dtype=float)
    conditioning = set(conditioning)
    if mset.generalized:
        conditioning |= mset.focal_units

    active = active_sets(mset, net, spec, z_obs, contrast)
    dists = []
    dropped = 0
    for index in active.active_indices:
        try:
            dists.append(module_randomization_distribution(
                mset.modules[index], net, spec, z_obs, contrast, design,
                conditioning, active.a_foc[index], cap, budget))
        except DegenerateModuleError as exc:
            logger.warning("Dropping module: %s", exc)
            dropped += 1

    if not dists:
        logger.info("Contrast %s: no active modules", contrast)
        return RandomizationResult.degenerate_result(contrast, dropped)

    focal = [i for dist in dists for i in dist.a_foc]
    y_u = y[focal]
    if not np.isfinite(y_u).all():
        raise ValueError("Outcomes of active focal units must be finite")

    observed = [dist.high(z_obs[dist.free][None, :])[0] for dist in dists]
    t_obs = float(stat.batch(np.concatenate(observed)[None, :], y_u,
        focal)[0])

    sizes = [chunk_size] * (R // chunk_size)
    if R % chunk_size:
        sizes.append(R % chunk_size)
    seeds = seed_sequence(seed).spawn(len(sizes))

    jobs = n_jobs(threads) if len(sizes) > 1 else 1
    parts = Parallel(n_jobs=jobs, prefer="threads")(
        delayed(_chunk_stats)(dists, stat, y_u, focal, size, child)
        for size, child in zip(sizes, seeds))
    draws = np.concatenate(parts)

    result = RandomizationResult(pvalue(t_obs, draws), t_obs, draws,
        len(focal), False, dropped, len(dists), contrast)
    logger.info("%s", result)
    return result
