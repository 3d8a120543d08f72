import numpy as np
from django.test import SimpleTestCase

from core.teststats import (AdjustmentError, StatKinds, StatSpec,
    adjust_outcomes, dim_stat, rank_stat)

HIGH_LOW = (1, 2)


class DifferenceInMeansTest(SimpleTestCase):
    def test_hand_values(self):
        y = np.array([0.0, 3, 1, 2, 0])
        # exposures of focal units 1..4
        exposures = np.array([2, 2, 1, 1])
        self.assertAlmostEqual(dim_stat(y, [1, 2, 3, 4], exposures,
            HIGH_LOW), 1.0)

        constant = np.full(5, 7.0)
        self.assertAlmostEqual(dim_stat(constant, [1, 2, 3, 4], exposures,
            HIGH_LOW), 0.0)

        shifted = y.copy()
        shifted[[1, 2]] += 5
        self.assertAlmostEqual(dim_stat(shifted, [1, 2, 3, 4], exposures,
            HIGH_LOW), 6.0)

    def test_empty_groups(self):
        stat = StatSpec()
        y = np.array([1.0, 2.0])
        self.assertEqual(stat.batch([[False, False]], y)[0], -np.inf)
        self.assertEqual(stat.batch([[True, True]], y)[0], np.inf)

    def test_weights(self):
        stat = StatSpec(weights=[1, 3, 1, 1])
        y = np.array([4.0, 0.0, 2.0, 6.0])
        # high: units 0, 1 (weights 1, 3); low: units 2, 3
        result = stat.batch([[True, True, False, False]], y, [0, 1, 2, 3])
        self.assertAlmostEqual(result[0], 1.0 - 4.0)

    def test_transforms(self):
        stat = StatSpec(psi1=lambda v: 2 * v, psi0=lambda v: 2 * v)
        y = np.array([1.5, 0.5])
        self.assertAlmostEqual(stat.batch([[True, False]], y)[0], 2.0)

        with self.assertRaises(ValueError):
            StatSpec(psi1=lambda v: -v)

    def test_monotone_property(self):
        """Raising outcomes at the higher level and lowering them at the
        lower level never lowers the statistic."""
        rng = np.random.default_rng(8)
        for stat in [StatSpec.from_name(n) for n in ("dim", "rs1", "rs5")]:
            for _ in range(2_000):
                m = int(rng.integers(2, 12))
                y = rng.normal(size=m)
                high = rng.random(m) < 0.5
                eta = np.abs(rng.normal(size=m)) * high
                xi = -np.abs(rng.normal(size=m)) * ~high

                before = stat.batch(high[None, :], y)[0]
                after = stat.batch(high[None, :], y + eta + xi)[0]
                if np.isfinite(before):
                    self.assertGreaterEqual(after, before - 1e-9)


class RankSumTest(SimpleTestCase):
    def test_hand_values(self):
        y = np.array([10.0, 20, 30, 40])
        exposures = np.array([1, 2, 1, 2])
        stat = StatSpec(StatKinds.RANK, s=2)
        self.assertAlmostEqual(rank_stat(y, range(4), exposures, HIGH_LOW,
            stat), 4.0)

        none_high = np.array([1, 1, 1, 1])
        self.assertAlmostEqual(rank_stat(y, range(4), none_high, HIGH_LOW,
            stat), 0.0)

        ties = np.full(4, 3.0)
        self.assertAlmostEqual(rank_stat(ties, range(4), exposures,
            HIGH_LOW), 2.0)

    def test_tied_scores(self):
        stat = StatSpec(StatKinds.RANK, s=2)
        # ranks 1, 2.5, 2.5, 4 -> phi 0, averaged (1 + 2) / 2 twice, 3
        self.assertEqual(stat.scores([1.0, 5.0, 5.0, 9.0]).tolist(),
            [0.0, 1.5, 1.5, 3.0])

    def test_names(self):
        self.assertEqual(StatSpec.from_name("rs5").s, 5)
        self.assertEqual(StatSpec.from_name("DIM").kind, StatKinds.DIM)
        with self.assertRaises(ValueError):
            StatSpec.from_name("median")


class AdjustTest(SimpleTestCase):
    def test_pre(self):
        result = adjust_outcomes([5.0, 2.0], [3.0, 2.0], method="pre")
        self.assertEqual(result.tolist(), [2.0, 0.0])

        with self.assertRaises(AdjustmentError):
            adjust_outcomes([5.0, 2.0], method="pre")

    def test_linear(self):
        x = np.arange(6, dtype=float)
        y = 2 * x + 1
        result = adjust_outcomes(y, x=x, method="linear",
            training={0, 1, 2}, scope={3, 4, 5}, conditioning={0, 1, 2})
        np.testing.assert_allclose(result[3:], 0.0, atol=1e-9)
        # units outside scope are untouched
        np.testing.assert_allclose(result[:3], y[:3])

    def test_linear_guards(self):
        x = np.arange(4, dtype=float)
        with self.assertRaises(AdjustmentError):
            adjust_outcomes(x, x=x, method="linear", training={0, 1},
                scope={1, 2})
        with self.assertRaises(AdjustmentError):
            adjust_outcomes(x, x=x, method="linear", training=set())
        with self.assertRaises(AdjustmentError):
            adjust_outcomes(x, method="linear", training={0})
        with self.assertRaises(AdjustmentError):
            adjust_outcomes(x, method="median")
