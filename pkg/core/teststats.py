"""Exposure-monotone test statistics and outcome adjustment."""
import logging

import numpy as np
import statsmodels.api as sm
from django.db import models
from scipy.special import comb

logger = logging.getLogger(__name__)

# ===========================================================================

class AdjustmentError(ValueError):
    pass


class StatKinds(models.TextChoices):
    DIM = "dim"
    RANK = "rank"


def identity(values):
    return values


def stephenson(s):
    """phi(r) = C(r-1, s-1), zero below s."""
    if s < 1:
        raise ValueError(f"Stephenson parameter must be >= 1, got {s}")

    def phi(ranks):
        return comb(np.asarray(ranks) - 1, s - 1)

    return phi


class StatSpec:
    """Test statistic over active focal units.

    Difference in means compares transformed outcomes of the units exposed
    at the higher level with those at the lower level. Rank sums add a
    non-decreasing score of each higher-exposed unit's outcome rank.
    """
    def __init__(self, kind=StatKinds.DIM, psi1=None, psi0=None, s=None,
            weights=None, name=None):
        self.kind = StatKinds(kind)
        self.psi1 = psi1 or identity
        self.psi0 = psi0 or identity
        self.s = s
        self.weights = None if weights is None else \
            np.asarray(weights, dtype=float)

        if self.kind == StatKinds.RANK:
            self.s = 1 if s is None else int(s)
            self.phi = stephenson(self.s)

        self.name = name or (f"rs{self.s}" if self.kind == StatKinds.RANK
            else "dim")
        self._check_monotone()

    def __str__(self):
        return f"StatSpec({self.name})"

    def _check_monotone(self):
        grid = np.linspace(-10, 10, 41)
        checks = [self.psi1, self.psi0]
        if self.kind == StatKinds.RANK:
            grid = np.arange(1, 42)
            checks = [self.phi]

        for func in checks:
            values = np.asarray(func(grid), dtype=float)
            if (np.diff(values) < -1e-12).any():
                raise ValueError(f"{self}: transform is not non-decreasing")

    @classmethod
    def from_name(cls, name):
        """"dim", or "rs<s>" for a Stephenson rank sum."""
        name = name.strip().lower()
        if name == "dim":
            return cls(StatKinds.DIM)
        if name.startswith("rs") and name[2:].isdigit():
            return cls(StatKinds.RANK, s=int(name[2:]))

        raise ValueError(f"Unknown statistic '{name}', use dim or rs<s>")

    def scores(self, y_u):
        """Per-unit rank score, tied values sharing the mean score of their
        positions. Positions come from a stable sort so ties resolve by unit
        order."""
        y_u = np.asarray(y_u, dtype=float)
        m = len(y_u)
        order = np.lexsort((np.arange(m), y_u))
        phi = np.asarray(self.phi(np.arange(1, m + 1)), dtype=float)

        sorted_y = y_u[order]
        starts = np.flatnonzero(np.r_[True, sorted_y[1:] != sorted_y[:-1]])
        group = np.cumsum(np.r_[True, sorted_y[1:] != sorted_y[:-1]]) - 1
        sums = np.add.reduceat(phi, starts)
        sizes = np.diff(np.r_[starts, m])

        result = np.empty(m)
        result[order] = (sums / sizes)[group]
        return result

    def batch(self, high, y_u, units=None):
        """Statistic for each row of the boolean (draws, m) matrix `high`
        marking focal units exposed at the higher contrast level.

        :param y_u: outcomes of the m focal units
        :param units: unit ids of the focal units, used to pick weights
        """
        high = np.atleast_2d(np.asarray(high, dtype=bool))
        y_u = np.asarray(y_u, dtype=float)
        if len(y_u) == 0:
            return np.zeros(len(high))

        if self.kind == StatKinds.RANK:
            return high.astype(float) @ self.scores(y_u)

        w = np.ones(len(y_u)) if self.weights is None or units is None \
            else self.weights[np.asarray(units)]
        low = ~high

        n_high = high.astype(float) @ w
        n_low = low.astype(float) @ w
        top = high.astype(float) @ (w * self.psi1(y_u))
        bottom = low.astype(float) @ (w * self.psi0(y_u))
        with np.errstate(divide='ignore', invalid='ignore'):
            result = top / n_high - bottom / n_low

        result = np.where(n_high == 0, -np.inf, result)
        result = np.where(n_low == 0, np.inf, result)
        return result

    def to_dict(self):
        result = {'name': self.name, 'kind': str(self.kind)}
        if self.weights is not None:
            result['weights'] = self.weights.tolist()
        return result


def _high_mask(exposures, contrast):
    low, high = contrast
    exposures = np.asarray(exposures)
    if not np.isin(exposures, (low, high)).all():
        raise ValueError(f"Focal exposures must lie in {tuple(contrast)}")
    return exposures == high


def dim_stat(y, focal, exposures, contrast, stat=None):
    """Difference in (transformed) means of focal outcomes, higher exposure
    minus lower. Infinite when a group is empty."""
    stat = stat or StatSpec(StatKinds.DIM)
    focal = list(focal)
    y_u = np.asarray(y, dtype=float)[focal]
    return float(stat.batch(_high_mask(exposures, contrast), y_u, focal)[0])


def rank_stat(y, focal, exposures, contrast, stat=None):
    """Sum of rank scores over the focal units at the higher exposure."""
    stat = stat or StatSpec(StatKinds.RANK, s=1)
    focal = list(focal)
    y_u = np.asarray(y, dtype=float)[focal]
    return float(stat.batch(_high_mask(exposures, contrast), y_u, focal)[0])

# ===========================================================================

def adjust_outcomes(y_post, y_pre=None, x=None, method="pre", training=None,
        scope=None, conditioning=None):
    """Outcomes with a prediction removed.

    "pre" subtracts the baseline outcome. "linear" fits y on x (with an
    intercept) by least squares over `training` and subtracts the fit. The
    training units must not be units that are randomized in the test, that
    is anything of `scope` outside `conditioning`.

    Only the `scope` units are changed, default all of them.
    """
    y_post = np.asarray(y_post, dtype=float)
    n = len(y_post)
    scope = np.arange(n) if scope is None else np.asarray(sorted(scope),
        dtype=np.int64)
    result = y_post.copy()

    if method == "pre":
        if y_pre is None:
            raise AdjustmentError("Baseline outcomes needed for 'pre'")
        result[scope] = y_post[scope] - np.asarray(y_pre, dtype=float)[scope]
        return result

    if method != "linear":
        raise AdjustmentError(f"Unknown adjustment '{method}'")
    if x is None:
        raise AdjustmentError("Covariates needed for 'linear'")
    if not training:
        raise AdjustmentError("No training units for the linear fit")

    randomized = set(scope.tolist()) - set(conditioning or ())
    overlap = set(training) & randomized
    if overlap:
        raise AdjustmentError(f"{len(overlap)} training units are part of "
            "the randomized scope")

    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]

    train = np.asarray(sorted(training), dtype=np.int64)
    design = sm.add_constant(x[train], has_constant='add')
    fit = sm.OLS(y_post[train], design).fit()
    logger.debug("Linear adjustment on %d units, params=%s", len(train),
        fit.params)

    predicted = fit.predict(sm.add_constant(x[scope], has_constant='add'))
    result[scope] = y_post[scope] - predicted
    return result
