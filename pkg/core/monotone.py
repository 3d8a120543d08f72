"""Sequential monotone spillover test built from per-contrast tests."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from django.db import models
from joblib import Parallel, delayed

from core.combine import (CombinerRules, CombinerSpec, combine,
    stouffer_weights)
from core.conf import call_pinned, n_jobs, pins, seed_sequence, setting
from core.crt import test_contrast
from core.modsets import build_module_set, expected_active_focal_count
from core.teststats import StatSpec, adjust_outcomes

logger = logging.getLogger(__name__)

# ===========================================================================

class Directions(models.TextChoices):
    # null: control outcomes weakly decrease as exposure grows
    DECREASING = "decreasing"
    # null: control outcomes weakly increase (displacement)
    INCREASING = "increasing"


def flip_direction(y):
    """Negated outcomes, which turns a test of the decreasing null into one
    of the increasing null."""
    return -np.asarray(y, dtype=float)


@dataclass
class MonotoneReport:
    results: list
    combined_pval: float
    combiner: CombinerSpec
    direction: str = Directions.DECREASING
    module_sets: list = field(default_factory=list)
    seed: int | None = None
    eligible_counts: list = field(default_factory=list)
    combiner_weights: list | None = None

    def __str__(self):
        steps = ", ".join(f"{r.pval:.4g}" for r in self.results)
        return (f"MonotoneReport({self.direction}, steps=[{steps}], "
            f"combined={self.combined_pval:.4g})")

    @property
    def pvals(self):
        return [result.pval for result in self.results]

    @property
    def all_degenerate(self):
        return all(result.degenerate for result in self.results)

    def to_dict(self):
        steps = []
        for index, result in enumerate(self.results):
            step = result.to_dict()
            if index < len(self.eligible_counts):
                step['eligible_focal_count'] = self.eligible_counts[index]
            steps.append(step)

        return {
            'direction': str(self.direction),
            'combiner': self.combiner.to_dict(),
            'combiner_weights': self.combiner_weights,
            'combined_pval': self.combined_pval,
            'steps': steps,
            'module_sets': [m.to_dict() for m in self.module_sets],
            'seed': self.seed,
        }

# ===========================================================================

def _prior_rand_in_control(module_sets, z_obs):
    result = set()
    for mset in module_sets:
        result |= {u for u in mset.units - mset.focal_units if z_obs[u] == 0}
    return result


def _step_outcomes(y, adjust, y_pre, x, mset, conditioning):
    if adjust is None:
        return y

    if adjust == "linear" and not conditioning:
        # nothing conditioned on yet to fit with
        logger.info("No conditioned units, step left unadjusted")
        return y

    return adjust_outcomes(y, y_pre, x, adjust,
        training=conditioning if adjust == "linear" else None,
        scope=mset.focal_units, conditioning=conditioning)


def test_monotone(net, spec, design, z_obs, y, stat=None, combiner=None,
        seed=None, adjust=None, y_pre=None, x=None, module_sets=None,
        direction=Directions.DECREASING, relax=False, randomizable=None,
        generalized=False, R=None, cap=None, threads=None):
    """Tests every adjacent contrast in turn and combines the p-values.

    Module set k is built only after tests 1..k-1 have run. Its focal units
    avoid all units of the earlier sets, whose treatments are held at their
    observed values from then on.

    :param adjust: None, "pre" or "linear" (fitted on the conditioned
        units only)
    :param module_sets: prebuilt sets, one per contrast, e.g. from
        :func:`select_module_sets`
    :param relax: let earlier randomization units that were observed in
        control serve as focal units later
    """
    stat = stat or StatSpec()
    combiner = combiner or CombinerSpec()
    direction = Directions(direction)
    z_obs = np.asarray(z_obs)
    y = np.asarray(y, dtype=float)
    if direction == Directions.INCREASING:
        y = flip_direction(y)

    contrasts = spec.contrasts
    if module_sets is not None and len(module_sets) != len(contrasts):
        raise ValueError(f"Need {len(contrasts)} module sets, got "
            f"{len(module_sets)}")

    root = seed_sequence(seed)
    step_seeds = root.spawn(len(contrasts) + 1)

    conditioning = set()
    focal_so_far = set()
    built, results, eligible = [], [], []
    for k, contrast in enumerate(contrasts):
        build_seed, test_seed = step_seeds[k].spawn(2)
        fixed = {u: int(z_obs[u]) for u in conditioning}

        if module_sets is not None:
            mset = module_sets[k]
        else:
            excluded = set(conditioning)
            if relax:
                excluded -= _prior_rand_in_control(built, z_obs) - \
                    focal_so_far

            mset = build_module_set(net, spec, design, contrast,
                randomizable, excluded, fixed, build_seed, generalized)

        y_step = _step_outcomes(y, adjust, y_pre, x, mset, conditioning)
        result = test_contrast(net, spec, design, mset, z_obs, y_step,
            contrast, stat, R, conditioning, test_seed, cap=cap,
            threads=threads)

        built.append(mset)
        results.append(result)
        eligible.append(len(mset.focal_units))
        logger.info("Step %d %s: %s", k + 1, contrast, result)

        if len(mset):
            conditioning |= mset.units
            focal_so_far |= mset.focal_units

    weights = None
    if combiner.rule == CombinerRules.STOUFFER and combiner.weights is None:
        weights = stouffer_weights(net, spec, design, seed=step_seeds[-1])
        if weights.sum() <= 0:
            weights = None
        combiner = CombinerSpec(combiner.rule, weights, combiner.eps)

    combined = combine([r.pval for r in results], combiner,
        seed=step_seeds[-1])
    return MonotoneReport(results, combined, combiner, str(direction), built,
        seed if isinstance(seed, int) else None, eligible,
        None if weights is None else weights.tolist())

# ===========================================================================

def _candidate(net, spec, design, seed, randomizable, generalized):
    msets = []
    prior = set()
    for contrast, child in zip(spec.contrasts, seed.spawn(len(
            spec.contrasts))):
        mset = build_module_set(net, spec, design, contrast, randomizable,
            prior, None, child, generalized)
        msets.append(mset)
        prior |= mset.units

    return msets


def _score(msets, net, spec, design, M, seed):
    total = 0.0
    for mset, contrast in zip(msets, spec.contrasts):
        # same draws for every candidate
        rng = np.random.default_rng(seed)
        total += expected_active_focal_count(mset, net, spec, design,
            contrast, None, M, rng)
    return total


def select_module_sets(net, spec, design, n_candidates=None, M=None,
        seed=None, randomizable=None, generalized=False, threads=None):
    """Best of `n_candidates` seeded sequential constructions by expected
    number of active focal units, summed over contrasts.

    Only the design is consulted, never an observed assignment. Ties go to
    the lowest candidate.

    :returns: (module sets per contrast, candidate scores)
    """
    n_candidates = setting('N_CANDIDATES', n_candidates)
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")

    root = seed_sequence(seed)
    build_seeds = root.spawn(n_candidates)
    score_seed = root.spawn(1)[0]

    jobs = 1 if n_candidates == 1 else n_jobs(threads)
    candidates = Parallel(n_jobs=jobs)(
        delayed(call_pinned)(pins(), _candidate, net, spec, design, child,
            randomizable, generalized) for child in build_seeds)
    scores = [_score(msets, net, spec, design, M, score_seed)
        for msets in candidates]

    best = int(np.argmax(scores))
    logger.info("Selected candidate %d of %d (score %.3f)", best,
        n_candidates, scores[best])
    return candidates[best], scores

# ===========================================================================

def lower_median(values):
    values = sorted(values)
    return values[math.ceil(len(values) / 2) - 1]


def aggregate_constructions(pvals):
    """Twice the (lower) median p-value, capped at 1."""
    if len(pvals) == 0:
        raise ValueError("Need at least one construction")
    return min(1.0, 2 * lower_median(pvals))


def _one_construction(net, spec, design, z_obs, y, seed, options):
    return test_monotone(net, spec, design, z_obs, y, seed=seed, threads=1,
        **options)


def run_constructions(net, spec, design, z_obs, y, n_constructions=None,
        seed=None, threads=None, **options):
    """Reports of independently seeded constructions.

    `options` are passed on to :func:`test_monotone`.
    """
    n_constructions = setting('N_CONSTRUCTIONS', n_constructions)
    if n_constructions < 1:
        raise ValueError("n_constructions must be >= 1")

    seeds = seed_sequence(seed).spawn(n_constructions)
    return Parallel(n_jobs=n_jobs(threads))(
        delayed(call_pinned)(pins(), _one_construction, net, spec, design,
            z_obs, y, child, options) for child in seeds)


def test_monotone_aggregate(net, spec, design, z_obs, y, n_constructions=None,
        seed=None, threads=None, **options):
    """(aggregated p-value, per-construction reports)."""
    reports = run_constructions(net, spec, design, z_obs, y, n_constructions,
        seed, threads, **options)
    return aggregate_constructions([r.combined_pval for r in reports]), \
        reports
