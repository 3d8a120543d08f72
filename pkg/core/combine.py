"""Combination rules for p-values that are jointly stochastically larger
than uniform.

Every rule here is non-increasing in each coordinate, which is all the
combination step needs to stay valid.
"""
import numpy as np
from django.db import models
from scipy.special import gammaincc
from scipy.stats import norm

from core.conf import make_rng, setting
from core.network import bounded_levels

# ===========================================================================

class CombinerRules(models.TextChoices):
    FISHER = "fisher"
    STOUFFER = "stouffer"
    CAUCHY = "cauchy"
    BONFERRONI = "bonferroni"
    WEIGHTED_FISHER = "weighted-fisher"


class CombinerSpec:
    def __init__(self, rule=CombinerRules.FISHER, weights=None, eps=None):
        self.rule = CombinerRules(rule)
        self.weights = None if weights is None else \
            np.asarray(weights, dtype=float)
        self.eps = setting('STOUFFER_EPS', eps)

        if not 0 < self.eps < 0.5:
            raise ValueError(f"Truncation must lie in (0, 0.5), got "
                f"{self.eps}")
        if self.weights is not None and (self.weights < 0).any():
            raise ValueError("Combination weights must be non-negative")

    def __str__(self):
        return f"CombinerSpec({self.rule})"

    def to_dict(self):
        return {
            'rule': str(self.rule),
            'weights': None if self.weights is None else
                self.weights.tolist(),
            'eps': self.eps,
        }

# ===========================================================================

def _pvals(pvals):
    p = np.asarray(pvals, dtype=float)
    if p.ndim != 1 or len(p) == 0:
        raise ValueError("Need a non-empty sequence of p-values")
    if ((p <= 0) | (p > 1)).any():
        raise ValueError("p-values must lie in (0, 1]")
    return p


def _weights(weights, count):
    if weights is None:
        return np.ones(count)

    w = np.asarray(weights, dtype=float)
    if len(w) != count:
        raise ValueError(f"weights length ({len(w)}) != p-values length "
            f"({count})")
    if (w < 0).any():
        raise ValueError("weights must be non-negative")
    if w.sum() <= 0:
        raise ValueError("weights must not all be zero")
    return w


def fisher(pvals):
    """chi-square(2m) survival at -2 sum log p."""
    p = _pvals(pvals)
    statistic = -2 * np.log(p).sum()
    return float(gammaincc(len(p), statistic / 2))


def stouffer(pvals, weights=None, eps=None):
    eps = setting('STOUFFER_EPS', eps)
    p = np.clip(_pvals(pvals), eps, 1 - eps)
    w = _weights(weights, len(p))

    z = (w * norm.ppf(p)).sum() / np.sqrt((w ** 2).sum())
    return float(norm.cdf(z))


def cauchy(pvals, weights=None, eps=None):
    eps = setting('STOUFFER_EPS', eps)
    p = np.clip(_pvals(pvals), eps, 1 - eps)
    w = _weights(weights, len(p))
    w = w / w.sum()

    T = np.sum(w * np.tan((0.5 - p) * np.pi))
    return float(np.clip(0.5 - np.arctan(T) / np.pi, 0.0, 1.0))


def bonferroni(pvals):
    p = _pvals(pvals)
    return float(min(1.0, len(p) * p.min()))


def weighted_fisher(pvals, weights=None, draws=None, seed=None):
    """-sum w log p against its law under independent uniforms, simulated.

    Returns the upper tail share with the +1 correction."""
    p = _pvals(pvals)
    w = _weights(weights, len(p))
    draws = setting('WEIGHTED_FISHER_DRAWS', draws)
    rng = make_rng(seed)

    observed = -(w * np.log(p)).sum()
    simulated = -(np.log(rng.random((draws, len(p)))) @ w)
    return float((1 + np.count_nonzero(simulated >= observed)) /
        (1 + draws))


def combine(pvals, spec=None, seed=None):
    spec = spec or CombinerSpec()
    if spec.rule == CombinerRules.FISHER:
        return fisher(pvals)
    elif spec.rule == CombinerRules.STOUFFER:
        return stouffer(pvals, spec.weights, spec.eps)
    elif spec.rule == CombinerRules.CAUCHY:
        return cauchy(pvals, spec.weights, spec.eps)
    elif spec.rule == CombinerRules.BONFERRONI:
        return bonferroni(pvals)
    elif spec.rule == CombinerRules.WEIGHTED_FISHER:
        return weighted_fisher(pvals, spec.weights, seed=seed)

    raise RuntimeError(f"{spec} has invalid rule")

# ===========================================================================

def stouffer_weights(net, spec, design, M=None, seed=None):
    """Expected number of units exposed at either level of each contrast,
    estimated from M design draws. Uses the design only."""
    M = setting('SELECTION_DRAWS', M)
    draws = design.sample(make_rng(seed), M)
    levels = bounded_levels(spec, (net.adjacency @ draws.T.astype(
        np.int64)).T)

    weights = []
    for low, high in spec.contrasts:
        inside = (levels >= low) & (levels <= high)
        weights.append(float(inside.sum(axis=1).mean()))

    return np.array(weights)
