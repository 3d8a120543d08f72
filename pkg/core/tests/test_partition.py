import networkx as nx
import numpy as np
from django.test import SimpleTestCase

from core.design import BernoulliDesign
from core.network import ExposureSpec, build_network
from core.partition import (AssignmentProblem, InfeasibleAssignmentError,
    Metrics, PartitionSpec, assign_communities, detect_communities,
    informativeness, informativeness_matrix, modularity, objective,
    order_partition, split_by_coordinate)
from core.tests.oracles import best_assignment, control_graph, random_graph

TWO_TRIANGLES = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]


class CommunityTest(SimpleTestCase):
    def test_trivial(self):
        net = build_network(1, [])
        self.assertEqual(detect_communities(net).tolist(), [0])

        net = build_network(3, [])
        self.assertEqual(detect_communities(net).tolist(), [0, 1, 2])

    def test_two_triangles(self):
        net = build_network(6, TWO_TRIANGLES)
        spec = PartitionSpec(resolution=1.0, seed=3)
        labels = detect_communities(net, spec)
        self.assertEqual(labels.tolist(), [0, 0, 0, 1, 1, 1])

        again = detect_communities(net, PartitionSpec(resolution=1.0,
            seed=3))
        self.assertEqual(labels.tolist(), again.tolist())

    def test_labels_cover(self):
        rng = np.random.default_rng(6)
        net = random_graph(40, 0.08, rng)
        labels = detect_communities(net, PartitionSpec(resolution=1.0,
            seed=1))
        self.assertEqual(len(labels), 40)
        self.assertEqual(set(labels.tolist()), set(range(labels.max() + 1)))
        # no worse than everything in one community
        self.assertGreaterEqual(modularity(net, labels), 0.0)

    def test_spec(self):
        self.assertEqual(PartitionSpec(beta=0.5).beta, 0.5)
        for bad in [{'resolution': 0}, {'beta': -1}, {'iterations': 0}]:
            with self.assertRaises(ValueError, msg=bad):
                PartitionSpec(**bad)

    def test_modularity(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            net = random_graph(15, 0.25, rng)
            labels = rng.integers(0, 3, size=15)
            graph = nx.Graph(net.edges())
            graph.add_nodes_from(range(15))
            groups = [set(np.flatnonzero(labels == c).tolist())
                for c in range(3)]
            groups = [g for g in groups if g]
            if not graph.number_of_edges():
                continue

            expected = nx.algorithms.community.modularity(graph, groups)
            self.assertAlmostEqual(modularity(net, labels), expected)

        self.assertEqual(modularity(build_network(2, []), [0, 1]), 0.0)

# ===========================================================================

class InformativenessTest(SimpleTestCase):
    def test_metrics(self):
        ne = control_graph([[0, 5], [0, 0]])
        self.assertAlmostEqual(informativeness(ne, Metrics.DENSITY), 0.75)
        self.assertAlmostEqual(informativeness(ne, Metrics.ROW_SD), 0.25)
        self.assertAlmostEqual(informativeness(ne, "col-sd"), 0.25)

        empty = control_graph(np.zeros((0, 3), dtype=int))
        self.assertEqual(informativeness(empty), 0.0)

    def test_matrix(self):
        net = build_network(6, TWO_TRIANGLES)
        spec = ExposureSpec.from_labels("0,1,>=2")
        design = BernoulliDesign([0.5] * 6)
        M, S = informativeness_matrix(net, spec, design, [0, 0, 0, 1, 1, 1],
            N_rand=200, seed=1)
        self.assertEqual(M.shape, (2, 2))
        self.assertEqual(S.tolist(), [3, 3])
        self.assertTrue(((M >= 0) & (M <= 1)).all())

        # nobody treated: every unit sits at level 0
        design = BernoulliDesign([0.0] * 6)
        M, _ = informativeness_matrix(net, spec, design, [0, 0, 0, 1, 1, 1],
            N_rand=10, seed=1)
        self.assertEqual(M.tolist(), [[1.0, 0.0], [1.0, 0.0]])

# ===========================================================================

class AssignmentTest(SimpleTestCase):
    def test_diagonal(self):
        problem = AssignmentProblem(np.eye(2), [1, 1])
        A = assign_communities(problem)
        self.assertEqual(A.tolist(), [[1, 0], [0, 1]])
        self.assertEqual(problem.method, "exact")
        self.assertEqual(problem.objective, 1.0)
        self.assertEqual(objective(problem, A), 1.0)

    def test_sizes_weigh_in(self):
        # community 2 is big enough to carry contrast 1 on its own
        problem = AssignmentProblem([[0.5, 0.4], [0.5, 0.4], [0.1, 0.2]],
            [1, 1, 10])
        A = assign_communities(problem)
        self.assertEqual(A.tolist(), [[1, 0], [1, 0], [0, 1]])
        self.assertAlmostEqual(problem.objective, 1.0)

    def test_single_contrast(self):
        problem = AssignmentProblem([[0.2], [0.3]], [1, 2])
        A = assign_communities(problem)
        self.assertEqual(A.tolist(), [[1], [1]])
        self.assertAlmostEqual(problem.objective, 0.8)

    def test_infeasible(self):
        with self.assertRaises(InfeasibleAssignmentError):
            assign_communities(AssignmentProblem([[1.0, 1.0]], [1]))

        with self.assertRaises(ValueError):
            assign_communities(AssignmentProblem(np.eye(2), [1, 1]),
                method="random")

    def test_against_brute_force(self):
        rng = np.random.default_rng(17)
        for _ in range(25):
            n_comm = int(rng.integers(2, 9))
            n_hyp = int(rng.integers(1, min(n_comm, 3) + 1))
            problem = AssignmentProblem(rng.random((n_comm, n_hyp)),
                rng.integers(1, 20, size=n_comm))
            best = best_assignment(problem.values)

            A = assign_communities(problem, method="exact")
            self.assertAlmostEqual(problem.objective, best)
            self.assertTrue((A.sum(axis=1) == 1).all())
            self.assertTrue((A.sum(axis=0) >= 1).all())

            A = assign_communities(problem, method="heuristic", seed=1)
            self.assertLessEqual(problem.objective, best + 1e-9)
            self.assertTrue((A.sum(axis=0) >= 1).all())

    def test_order_partition(self):
        A = np.array([[1, 0], [0, 1], [1, 0]])
        self.assertEqual(order_partition([0, 1, 1, 2], A).tolist(),
            [0, 1, 1, 0])

        # unassigned communities land in the last part
        A = np.array([[1, 0], [0, 1], [0, 0]])
        self.assertEqual(order_partition([2, 0, 1, 2], A).tolist(),
            [2, 0, 1, 2])

    def test_leftovers(self):
        problem = AssignmentProblem([[0.5, 0.0], [0.0, 0.4], [0.0, 0.0],
            [0.0, 0.0]], [1, 1, 1, 1])
        A = assign_communities(problem)
        self.assertEqual(A[:2].tolist(), [[1, 0], [0, 1]])
        self.assertEqual(A[2:].tolist(), [[0, 0], [0, 0]])
        self.assertAlmostEqual(problem.objective, 0.4)
        self.assertEqual(order_partition([0, 1, 2, 3], A).tolist(),
            [0, 1, 2, 2])

        # a worthless community still covers its contrast when it must
        problem = AssignmentProblem([[0.5, 0.0], [0.0, 0.0]], [1, 1])
        A = assign_communities(problem)
        self.assertEqual(A.sum(axis=0).tolist(), [1, 1])
        self.assertEqual(A.sum(axis=1).tolist(), [1, 1])


class CoordinateSplitTest(SimpleTestCase):
    def test_split(self):
        coords = [(x, 0) for x in range(10)]
        net = build_network(10, [], coords=coords)
        self.assertEqual(split_by_coordinate(net, 2).tolist(),
            [0] * 5 + [1] * 5)

        parts = split_by_coordinate(net, 3)
        self.assertEqual(sorted(set(parts.tolist())), [0, 1, 2])
        self.assertTrue((np.diff(parts) >= 0).all())

        with self.assertRaises(ValueError):
            split_by_coordinate(build_network(2, [(0, 1)]), 2)
