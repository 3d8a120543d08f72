import numpy as np
from django.test import SimpleTestCase

from core.combine import (CombinerRules, CombinerSpec, bonferroni, cauchy,
    combine, fisher, stouffer, stouffer_weights, weighted_fisher)
from core.design import BernoulliDesign
from core.network import ExposureSpec, build_network


class RuleTest(SimpleTestCase):
    def test_fisher(self):
        self.assertAlmostEqual(fisher([1, 1, 1]), 1.0)
        self.assertAlmostEqual(fisher([0.5, 0.5]), 0.5966, places=4)
        self.assertAlmostEqual(fisher([0.3]), 0.3)

    def test_stouffer(self):
        self.assertAlmostEqual(stouffer([0.5, 0.5]), 0.5)
        self.assertAlmostEqual(stouffer([0.05, 0.05]), 0.01, places=4)
        self.assertAlmostEqual(stouffer([1.0, 1.0]), 1.0, places=4)

        # zero weight ignores a coordinate
        self.assertAlmostEqual(stouffer([0.2, 0.9], weights=[1, 0]), 0.2)

    def test_cauchy(self):
        self.assertAlmostEqual(cauchy([0.3]), 0.3)
        self.assertAlmostEqual(cauchy([0.2, 0.2, 0.2]), 0.2)

    def test_bonferroni(self):
        self.assertAlmostEqual(bonferroni([0.01, 0.5, 0.9]), 0.03)
        self.assertEqual(bonferroni([0.6, 0.9]), 1.0)

    def test_weighted_fisher(self):
        pvals = [0.1, 0.2, 0.3]
        result = weighted_fisher(pvals, seed=3)
        self.assertAlmostEqual(result, fisher(pvals), delta=0.01)
        self.assertEqual(result, weighted_fisher(pvals, seed=3))

    def test_monotone(self):
        rng = np.random.default_rng(12)
        rules = [fisher, stouffer, cauchy, bonferroni]
        for _ in range(500):
            m = int(rng.integers(1, 6))
            p = rng.uniform(0.001, 1, size=m)
            larger = p.copy()
            k = int(rng.integers(m))
            larger[k] = rng.uniform(p[k], 1)
            for rule in rules:
                self.assertGreaterEqual(rule(larger), rule(p) - 1e-12,
                    msg=rule.__name__)

    def test_errors(self):
        for bad in [[], [0.0, 0.5], [1.2], [[0.5]]]:
            with self.assertRaises(ValueError, msg=bad):
                fisher(bad)

        with self.assertRaises(ValueError):
            stouffer([0.5, 0.5], weights=[1])
        with self.assertRaises(ValueError):
            stouffer([0.5, 0.5], weights=[0, 0])
        with self.assertRaises(ValueError):
            CombinerSpec(eps=0.6)
        with self.assertRaises(ValueError):
            CombinerSpec("median")


class DispatchTest(SimpleTestCase):
    def test_combine(self):
        self.assertAlmostEqual(combine([0.5, 0.5]), fisher([0.5, 0.5]))
        spec = CombinerSpec(CombinerRules.BONFERRONI)
        self.assertEqual(combine([0.5, 0.5], spec), 1.0)

        spec = CombinerSpec("stouffer", weights=[1, 0])
        self.assertAlmostEqual(combine([0.2, 0.9], spec), 0.2)
        self.assertEqual(spec.to_dict()['rule'], "stouffer")

    def test_stouffer_weights(self):
        net = build_network(2, [(0, 1)])
        spec = ExposureSpec.from_labels("0,1")
        design = BernoulliDesign([0.0, 0.0])
        weights = stouffer_weights(net, spec, design, M=10, seed=1)
        self.assertEqual(weights.tolist(), [2.0])
