import math
from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose

from hjbnet.dynamics import (
    TimeGrid, lift_drift, lift_initial, lift_input, linear_model, rollout,
    stack_initial, state_bounds, unicycle_model,
)
from hjbnet.errors import (
    DimensionMismatch, IndexOutOfRange, NonFiniteState, ValidationError,
)


def zero_control(models):
    m = sum(model.control_dim for model in models)
    return lambda t, x: np.zeros(m)


class TestAgentModel(TestCase):

    def test_unicycle(self):
        model = unicycle_model([0.0, 0.0, math.pi / 2])
        self.assertEqual((model.state_dim, model.control_dim), (3, 2))
        x = np.array([1.0, 2.0, math.pi / 2])
        assert_allclose(model.drift(x), np.zeros(3))
        G = model.input_map(x)
        assert_allclose(G, [[0, 0], [1, 0], [0, 1]], atol=1e-15)
        assert_allclose(model.vector_field(x, [2.0, -1.0]), [0, 2, -1],
                        atol=1e-15)
        # Vectorized over leading axes
        batch = np.zeros((4, 7, 3))
        self.assertEqual(model.input_map(batch).shape, (4, 7, 3, 2))
        with self.assertRaises(DimensionMismatch):
            model.drift(np.zeros(2))
        with self.assertRaises(DimensionMismatch):
            unicycle_model([0.0, 0.0])

    def test_linear(self):
        model = linear_model([[0, 1], [0, 0]], [[0], [1]], [1.0, 0.0])
        assert_allclose(model.drift([1.0, 2.0]), [2.0, 0.0])
        assert_allclose(model.vector_field([1.0, 2.0], [3.0]), [2.0, 3.0])
        assert_allclose(model.params['B'], [[0], [1]])
        with self.assertRaises(DimensionMismatch):
            linear_model([[0, 1]], [[1]], [0.0])
        with self.assertRaises(DimensionMismatch):
            linear_model([[0]], [[1], [1]], [0.0])

    def test_smoothness_check(self):
        model = unicycle_model([0.0, 0.0, 0.0])
        bound = model.smoothness_check([-1, -1, -3], [1, 1, 3])
        self.assertTrue(0 < bound <= 1.0 + 1e-6)
        linear = linear_model([[2.0]], [[1.0]], [0.0])
        self.assertAlmostEqual(linear.smoothness_check([-1], [1]), 2.0,
                               places=5)


class TestLifts(TestCase):

    def test_lift_drift(self):
        assert_allclose(lift_drift(2, 3, [1.0, 2.0]), [0, 0, 3, 6, 0, 0])
        assert_allclose(lift_initial(1, 2, [1.0]), [2.0, 0.0])
        with self.assertRaises(IndexOutOfRange):
            lift_drift(0, 3, [1.0])
        with self.assertRaises(IndexOutOfRange):
            lift_drift(4, 3, [1.0])

    def test_lift_input(self):
        G = np.array([[1.0], [2.0]])
        lifted = lift_input(2, 2, G)
        self.assertEqual(lifted.shape, (4, 2))
        assert_allclose(lifted[2:, 1], [2.0, 4.0])
        self.assertEqual(np.count_nonzero(lifted), 2)
        with self.assertRaises(DimensionMismatch):
            lift_input(1, 2, [1.0])

    def test_averaging_identity(self):
        """
        The mean of the lifted blocks is the stacked vector.
        """
        rng = np.random.default_rng(5)
        N, n = 4, 3
        blocks = rng.normal(size=(N, n))
        mean = sum(lift_drift(i, N, blocks[i - 1])
                   for i in range(1, N + 1)) / N
        assert_allclose(mean, blocks.reshape(-1), rtol=1e-14)

        models = [unicycle_model(blocks[i]) for i in range(N)]
        mean = sum(lift_initial(i, N, models[i - 1].x0)
                   for i in range(1, N + 1)) / N
        assert_allclose(mean, stack_initial(models), rtol=1e-14)


class TestTimeGrid(TestCase):

    def test_grid(self):
        grid = TimeGrid(1.0, 11)
        self.assertAlmostEqual(grid.dt, 0.1)
        self.assertEqual(grid.nodes.shape, (11,))
        self.assertEqual(grid.locate(0.0), (0, 0.0))
        n, w = grid.locate(1.0)
        self.assertEqual(n, 9)
        self.assertAlmostEqual(w, 1.0)
        values = grid.nodes ** 1
        self.assertAlmostEqual(grid.interpolate(values, 0.37), 0.37)

    def test_errors(self):
        with self.assertRaises(ValidationError):
            TimeGrid(0.0, 10)
        with self.assertRaises(ValidationError):
            TimeGrid(1.0, 1)
        grid = TimeGrid(1.0, 3)
        with self.assertRaises(DimensionMismatch):
            grid.check_field(np.zeros(4), 'F')


class TestRollout(TestCase):

    def test_constant_trajectory(self):
        models = [unicycle_model([1.0, -2.0, 0.3]),
                  unicycle_model([0.0, 5.0, 1.0])]
        states = rollout(models, zero_control(models), TimeGrid(2.0, 21))
        assert_allclose(states, np.tile(stack_initial(models), (21, 1)))

    def test_integrator(self):
        model = linear_model([[0.0]], [[1.0]], [0.5])
        states = rollout([model], lambda t, x: np.ones(1), TimeGrid(1.0, 11))
        self.assertAlmostEqual(states[-1, 0], 1.5, places=12)

    def test_unicycle_straight_line(self):
        model = unicycle_model([2.0, 1.0, 0.0])
        grid = TimeGrid(3.0, 31)
        states = rollout([model], lambda t, x: np.array([1.0, 0.0]), grid)
        assert_allclose(states[:, 0], 2.0 + grid.nodes, atol=1e-6)
        assert_allclose(states[:, 1], 1.0, atol=1e-6)

    def test_fourth_order(self):
        model = linear_model([[-1.0]], [[1.0]], [1.0])

        def error(nodes):
            states = rollout([model], lambda t, x: np.zeros(1),
                             TimeGrid(1.0, nodes))
            return abs(states[-1, 0] - math.exp(-1.0))

        self.assertGreaterEqual(error(11) / error(21), 8.0)

    def test_stiff_feedback(self):
        """
        u = -200 x on a grid with 200 dt = 20, far outside the stability
        region of a single RK4 step: the intervals are halved instead.
        """
        model = linear_model([[0.0]], [[1.0]], [1.0])
        grid = TimeGrid(1.0, 11)
        states = rollout([model], lambda t, x: -200.0 * x, grid)
        self.assertTrue(np.all(np.abs(states[:, 0]) <= 1.0))
        assert_allclose(states[:, 0], np.exp(-200.0 * grid.nodes),
                        rtol=1e-3, atol=1e-10)

    def test_blow_up(self):
        model = linear_model([[1.0]], [[1.0]], [1.0])
        with self.assertRaises(NonFiniteState):
            rollout([model], lambda t, x: 1e200 * x ** 2, TimeGrid(1.0, 11))


class TestStateBounds(TestCase):

    def test_bounds(self):
        models = [linear_model([[0.0]], [[1.0]], [x]) for x in (-1.0, 1.0)]
        lo, hi = state_bounds(models)
        assert_allclose(lo, [-1.5, -1.5])
        assert_allclose(hi, [1.5, 1.5])
        lo, hi = state_bounds([linear_model([[0.0]], [[1.0]], [2.0])])
        assert_allclose(lo, [1.5])
        assert_allclose(hi, [2.5])
