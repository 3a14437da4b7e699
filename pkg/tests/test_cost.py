from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose

from hjbnet.cost import (
    NotPD, NotPSD, TopologyViolation, build_cost, local_running_cost,
    performance_index, running_cost,
)
from hjbnet.dynamics import TimeGrid
from hjbnet.errors import DimensionMismatch, IndexOutOfRange
from hjbnet.graph import build_graph, laplacian


UGV_EDGES = [(1, 2, 1.0), (2, 3, 1.0), (2, 5, 1.0), (4, 5, 1.0)]


def ugv_cost():
    graph = build_graph(5, UGV_EDGES)
    Q = 2 * np.kron(laplacian(graph), np.eye(3))
    R = 0.01 * np.eye(10)
    return build_cost(Q, R, graph=graph), graph


class TestBuildCost(TestCase):

    def test_ugv(self):
        cost, _ = ugv_cost()
        self.assertEqual(cost.agent_count, 5)
        self.assertEqual((cost.state_dim, cost.control_dim), (3, 2))
        self.assertTrue(cost.block_diagonal_R)
        self.assertFalse(cost.Q.flags.writeable)

    def test_not_psd(self):
        with self.assertRaises(NotPSD):
            build_cost(-np.eye(2), np.eye(2), agent_count=2)
        with self.assertRaises(NotPSD):
            build_cost([[1, 1], [0, 1]], np.eye(2), agent_count=2)
        with self.assertRaises(NotPD):
            build_cost(np.eye(2), np.zeros((2, 2)), agent_count=2)
        with self.assertRaises(DimensionMismatch):
            build_cost(np.eye(3), np.eye(2), agent_count=2)
        with self.assertRaises(ValueError):
            build_cost(np.eye(2), np.eye(2))

    def test_topology(self):
        graph = build_graph(3, [(1, 2, 1.0), (2, 3, 1.0)])
        Q = np.eye(3)
        Q[0, 2] = Q[2, 0] = 0.1
        with self.assertRaises(TopologyViolation) as ctx:
            build_cost(Q, np.eye(3), graph=graph)
        self.assertEqual(ctx.exception.pair, (1, 3))
        R = np.eye(3)
        R[0, 1] = R[1, 0] = 0.1
        cost = build_cost(np.eye(3), R, graph=graph)
        self.assertFalse(cost.block_diagonal_R)


class TestSlices(TestCase):

    def test_average_of_slices(self):
        cost, _ = ugv_cost()
        N = cost.agent_count
        assert_allclose(sum(cost.Q_tilde(i) for i in range(1, N + 1)) / N,
                        cost.Q, atol=1e-12)
        assert_allclose(sum(cost.R_tilde(i) for i in range(1, N + 1)) / N,
                        cost.R, atol=1e-12)
        with self.assertRaises(IndexOutOfRange) as ctx:
            cost.Q_tilde(0)
        self.assertEqual(ctx.exception.upper, N)
        with self.assertRaises(IndexOutOfRange):
            cost.R_tilde(N + 1)

    def test_local_running_cost(self):
        cost, _ = ugv_cost()
        rng = np.random.default_rng(2)
        for _ in range(5):
            x = rng.normal(size=15)
            u = rng.normal(size=10)
            local = [local_running_cost(cost, i, x, u) for i in range(1, 6)]
            self.assertAlmostEqual(sum(local) / 5, running_cost(cost, x, u),
                                   delta=1e-12 * (1 + abs(sum(local))))

    def test_R_bar(self):
        """
        R_bar_i R~_i is N times the projector on agent i's controls.
        """
        cost, _ = ugv_cost()
        projector = np.zeros((10, 10))
        projector[2:4, 2:4] = np.eye(2)
        assert_allclose(cost.R_bar(2) @ cost.R_tilde(2), 5 * projector,
                        atol=1e-12)
        assert_allclose(cost.R_block_inv(1), 100 * np.eye(2))


class TestPerformanceIndex(TestCase):

    def test_scalar(self):
        cost = build_cost([[1.0]], [[1.0]], agent_count=1)
        self.assertAlmostEqual(running_cost(cost, [1.0], [1.0]), 1.0)
        values = running_cost(cost, np.ones((4, 1)), np.zeros((4, 1)))
        assert_allclose(values, 0.5 * np.ones(4))

    def test_constant(self):
        cost = build_cost([[2.0]], [[2.0]], agent_count=1)
        grid = TimeGrid(2.0, 11)
        states = np.ones((11, 1))
        controls = np.zeros((11, 1))
        self.assertAlmostEqual(
            performance_index(cost, states, controls, grid), 2.0, places=12
        )
        with self.assertRaises(DimensionMismatch):
            performance_index(cost, states[:5], controls, grid)
