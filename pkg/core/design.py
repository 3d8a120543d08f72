"""Treatment assignment mechanisms.

Only the non-uniform Bernoulli design has exact probability arithmetic.
Other mechanisms plug in through :class:`GeneralDesign`, which only asks for
a sampler, a conditional sampler and a support check.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from core.conf import make_rng, setting

logger = logging.getLogger(__name__)

# ===========================================================================

class DesignError(ValueError):
    pass


class EnumerationCapExceeded(RuntimeError):
    pass


class RejectionBudgetExceeded(RuntimeError):
    pass

# ===========================================================================

class GeneralDesign(ABC):
    """Contract for an arbitrary assignment mechanism over n units."""
    n = 0

    @abstractmethod
    def sample(self, rng, size=None):
        """One assignment (n,) or a (size, n) stack of them."""

    @abstractmethod
    def support_check(self, z):
        """True if `z` has positive probability."""

    def conditional_sample(self, fixed, rng, size=None, budget=None):
        """Assignments drawn from the design given the `fixed` coordinates.

        The default rejects unconditional draws; designs with a cheaper
        conditional law override this.
        """
        rng = make_rng(rng)
        budget = setting('REJECTION_BUDGET', budget)
        units = np.fromiter(fixed.keys(), dtype=np.int64, count=len(fixed))
        values = np.fromiter(fixed.values(), dtype=np.int8, count=len(fixed))

        wanted = 1 if size is None else size
        kept = []
        tried = 0
        while sum(len(k) for k in kept) < wanted:
            if tried >= budget:
                raise RejectionBudgetExceeded(
                    f"{type(self).__name__}: no conditional draw after "
                    f"{tried} attempts")

            batch = min(budget - tried, max(4 * wanted, 256))
            draws = self.sample(rng, batch)
            tried += batch
            ok = (draws[:, units] == values).all(axis=1)
            kept.append(draws[ok])

        result = np.concatenate(kept)[:wanted]
        return result[0] if size is None else result


class BernoulliDesign(GeneralDesign):
    """Independent treatment with known per-unit probabilities."""

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 1:
            raise DesignError("Probabilities must be a vector")
        if ((probs < 0) | (probs > 1)).any() or np.isnan(probs).any():
            raise DesignError("Probabilities must lie in [0, 1]")

        probs.setflags(write=False)
        self.probs = probs
        self.n = len(probs)

    def __str__(self):
        return (f"BernoulliDesign(n={self.n}, "
            f"randomizable={int(self.randomizable_mask.sum())})")

    def __eq__(self, other):
        return isinstance(other, BernoulliDesign) and \
            np.array_equal(self.probs, other.probs)

    @property
    def randomizable_mask(self):
        return (self.probs > 0) & (self.probs < 1)

    @property
    def randomizable(self):
        return set(np.flatnonzero(self.randomizable_mask).tolist())

    @property
    def deterministic(self):
        """0/1 vector of the value every degenerate unit always takes."""
        return (self.probs >= 1).astype(np.int8)

    def log_prob(self, z, units=None):
        """Log probability of the full assignment `z`, or of the values `z`
        on `units`. Works on a single vector or a (m, len) stack."""
        probs = self.probs if units is None else self.probs[list(units)]
        z = np.asarray(z)
        with np.errstate(divide='ignore'):
            terms = np.where(z == 1, np.log(probs), np.log1p(-probs))
        return terms.sum(axis=-1)

    def prob(self, z, units=None):
        return np.exp(self.log_prob(z, units))

    def restrict(self, fixed):
        """Design with the `fixed` {unit: value} coordinates pinned."""
        if not fixed:
            return self

        probs = self.probs.copy()
        for unit, value in fixed.items():
            value = int(value)
            if value == 1 and probs[unit] == 0:
                raise DesignError(f"Unit {unit} fixed treated but p=0")
            if value == 0 and probs[unit] == 1:
                raise DesignError(f"Unit {unit} fixed control but p=1")

            probs[unit] = value

        return BernoulliDesign(probs)

    def sample(self, rng, size=None):
        rng = make_rng(rng)
        shape = self.n if size is None else (size, self.n)
        return (rng.random(shape) < self.probs).astype(np.int8)

    def sample_units(self, units, rng, size):
        """(size, len(units)) draws of the sub-assignment on `units`."""
        probs = self.probs[list(units)]
        return (make_rng(rng).random((size, len(probs))) < probs).astype(
            np.int8)

    def conditional_sample(self, fixed, rng, size=None, budget=None):
        # Product law, so conditioning is just pinning
        return self.restrict(fixed).sample(rng, size)

    def support_check(self, z):
        return bool(self.log_prob(z) > -np.inf)

    def to_dict(self):
        return {'kind': 'bernoulli', 'probs': self.probs.tolist()}


class CompleteRandomization(GeneralDesign):
    """Exactly `n_treated` of the `eligible` units treated, uniformly."""

    def __init__(self, n, eligible, n_treated):
        self.n = int(n)
        self.eligible = np.array(sorted(eligible), dtype=np.int64)
        self.n_treated = int(n_treated)
        if not 0 <= self.n_treated <= len(self.eligible):
            raise DesignError("n_treated must lie in [0, #eligible]")

    def __str__(self):
        return (f"CompleteRandomization(n={self.n}, "
            f"{self.n_treated}/{len(self.eligible)})")

    def _draw(self, rng, pool, count, size, base):
        result = np.repeat(base[None, :], size, axis=0)
        keys = rng.random((size, len(pool)))
        chosen = np.argsort(keys, axis=1)[:, :count]
        rows = np.repeat(np.arange(size), count)
        result[rows, pool[chosen.ravel()]] = 1
        return result

    def sample(self, rng, size=None):
        rng = make_rng(rng)
        base = np.zeros(self.n, dtype=np.int8)
        result = self._draw(rng, self.eligible, self.n_treated,
            1 if size is None else size, base)
        return result[0] if size is None else result

    def conditional_sample(self, fixed, rng, size=None, budget=None):
        rng = make_rng(rng)
        base = np.zeros(self.n, dtype=np.int8)
        for unit, value in fixed.items():
            base[unit] = value

        z_fixed = np.zeros(self.n, dtype=np.int8)
        z_fixed[list(fixed.keys())] = 1
        if any(v == 1 and u not in set(self.eligible.tolist())
                for u, v in fixed.items()):
            raise DesignError("Fixed treated unit is not eligible")

        pool = self.eligible[z_fixed[self.eligible] == 0]
        remaining = self.n_treated - int(base[self.eligible].sum())
        if not 0 <= remaining <= len(pool):
            raise DesignError("Fixed values are outside the design support")

        result = self._draw(rng, pool, remaining,
            1 if size is None else size, base)
        return result[0] if size is None else result

    def support_check(self, z):
        z = np.asarray(z)
        outside = np.ones(self.n, dtype=bool)
        outside[self.eligible] = False
        return bool(z[outside].sum() == 0 and
            z[self.eligible].sum() == self.n_treated)

# ===========================================================================

@dataclass
class Enumeration:
    """Sub-assignments of `units` that passed a predicate, with their
    probabilities under the design."""
    units: list
    states: np.ndarray
    probs: np.ndarray

    def __iter__(self):
        for state, prob in zip(self.states, self.probs):
            yield tuple(int(v) for v in state), float(prob)

    def __len__(self):
        return len(self.probs)

    @property
    def total(self):
        return float(self.probs.sum())


def all_states(m):
    """(2^m, m) array of every 0/1 vector, in itertools.product order."""
    index = np.arange(2 ** m, dtype=np.int64)[:, None]
    shifts = np.arange(m - 1, -1, -1, dtype=np.int64)
    return ((index >> shifts) & 1).astype(np.int8)


def enumerate_sub_assignments(design, units, predicate=None, cap=None):
    """Every sub-assignment of `units` satisfying `predicate`.

    :param predicate: vectorized callable taking a (S, len(units)) state
        array and returning a boolean mask; None keeps everything
    :returns: :class:`Enumeration`, zero-probability states dropped
    """
    units = list(units)
    cap = setting('ENUMERATION_CAP', cap)
    if len(units) > cap:
        raise EnumerationCapExceeded(
            f"{len(units)} units exceed enumeration cap of {cap}")

    states = all_states(len(units))
    keep = np.ones(len(states), dtype=bool) if predicate is None \
        else np.asarray(predicate(states), dtype=bool)

    states = states[keep]
    probs = design.prob(states, units) if len(units) else \
        np.ones(len(states))
    positive = probs > 0
    return Enumeration(units, states[positive], probs[positive])


def rejection_sample(design, units, predicate, size, rng, budget=None):
    """(size, len(units)) sub-assignments from the design restricted to
    `predicate`, by rejection."""
    rng = make_rng(rng)
    budget = setting('REJECTION_BUDGET', budget)

    kept = []
    n_kept = 0
    tried = 0
    while n_kept < size:
        if tried >= budget:
            raise RejectionBudgetExceeded(
                f"Accepted {n_kept} of {size} draws in {tried} attempts")

        batch = min(budget - tried, max(4 * (size - n_kept), 1024))
        draws = design.sample_units(units, rng, batch)
        tried += batch

        ok = np.asarray(predicate(draws), dtype=bool)
        kept.append(draws[ok])
        n_kept += int(ok.sum())

    logger.debug("Rejection sampling accepted %d/%d", n_kept, tried)
    return np.concatenate(kept)[:size]
