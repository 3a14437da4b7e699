import math
import os
from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose

import hjbnet
from hjbnet.config import load_config
from hjbnet.cost import build_cost
from hjbnet.dynamics import TimeGrid, linear_model, unicycle_model
from hjbnet.errors import DimensionMismatch, ValidationError
from hjbnet.hjb_central import (
    GlobalSystem, ViState, centralized_run, hjb_residual, linear_matrices,
    optimal_control, riccati_solve, value_iteration,
)
from hjbnet.rbf import RbfBasis, sample_centers


SCENARIOS = os.path.join(os.path.dirname(hjbnet.__file__), 'scenarios')
ORACLE_TOL = 5e-2


def unicycles():
    return [unicycle_model([0.0, 0.0, 0.3]),
            unicycle_model([1.0, -1.0, 2.0])]


class TestGlobalSystem(TestCase):

    def test_lifted_identities(self):
        sys = GlobalSystem(unicycles())
        self.assertEqual((sys.agent_count, sys.state_dim, sys.control_dim),
                         (2, 3, 2))
        rng = np.random.default_rng(0)
        x = rng.normal(size=(4, 6))
        assert_allclose(sys.lifted_drift(x), sys.drift(x), atol=1e-15)
        assert_allclose(sys.lifted_input_map(x), sys.input_map(x),
                        atol=1e-15)
        p = rng.normal(size=(4, 6))
        assert_allclose(sys.input_transpose(x, p),
                        np.einsum('knm,kn->km', sys.input_map(x), p),
                        atol=1e-14)
        # g is block diagonal
        G = sys.input_map(x[0])
        self.assertFalse(np.any(G[:3, 2:]))
        self.assertFalse(np.any(G[3:, :2]))
        assert_allclose(sys.x0, [0.0, 0.0, 0.3, 1.0, -1.0, 2.0])

    def test_mixed_dimensions(self):
        with self.assertRaises(DimensionMismatch):
            GlobalSystem([unicycle_model([0, 0, 0]),
                          linear_model([[0.0]], [[1.0]], [0.0])])
        with self.assertRaises(ValueError):
            GlobalSystem([])

    def test_linear_matrices(self):
        models = [linear_model([[1.0]], [[2.0]], [0.0]),
                  linear_model([[3.0]], [[4.0]], [0.0])]
        A, B = linear_matrices(GlobalSystem(models))
        assert_allclose(A, np.diag([1.0, 3.0]))
        assert_allclose(B, np.diag([2.0, 4.0]))
        with self.assertRaises(ValidationError):
            linear_matrices(GlobalSystem(unicycles()))


class TestRiccati(TestCase):

    def test_scalar(self):
        grid = TimeGrid(1.0, 51)
        P = riccati_solve([[0.0]], [[1.0]], [[1.0]], [[1.0]], grid)
        self.assertEqual(P.shape, (51, 1, 1))
        assert_allclose(P[:, 0, 0], np.tanh(1.0 - grid.nodes), atol=1e-8)

    def test_zero_weight(self):
        grid = TimeGrid(1.0, 11)
        P = riccati_solve(np.eye(2), np.eye(2), np.zeros((2, 2)), np.eye(2),
                          grid)
        assert_allclose(P, 0.0)

    def test_symmetric(self):
        rng = np.random.default_rng(6)
        A = rng.normal(size=(3, 3))
        B = rng.normal(size=(3, 2))
        Q = np.eye(3)
        grid = TimeGrid(1.0, 41)
        P = riccati_solve(A, B, Q, np.eye(2), grid)
        assert_allclose(P, np.transpose(P, (0, 2, 1)), atol=1e-14)
        self.assertGreater(np.min(np.linalg.eigvalsh(P[0])), 0.0)


class TestValueIteration(TestCase):

    def setUp(self):
        self.grid = TimeGrid(1.0, 21)
        centers = sample_centers('grid', ([-2.0], [2.0]), 30, 0)
        self.basis = RbfBasis(centers, 0.5)
        self.sys = GlobalSystem([linear_model([[0.0]], [[1.0]], [1.0])])

    def test_no_iterations(self):
        cost = build_cost([[1.0]], [[1.0]], agent_count=1)
        with self.assertRaises(ValidationError):
            value_iteration(self.sys, cost, self.basis, self.grid, 0)

    def test_initial_controller(self):
        cost = build_cost([[1.0]], [[1.0]], agent_count=1)
        state = ViState.initial(self.basis, self.grid)
        self.assertEqual(state.index, 0)
        for n in (0, 10, 20):
            assert_allclose(optimal_control(self.sys, cost, state.value, n,
                                            [0.7]), [0.0])

    def test_zero_state_weight(self):
        cost = build_cost([[0.0]], [[1.0]], agent_count=1)
        result = centralized_run(self.sys, cost, self.basis, self.grid, 3)
        self.assertEqual(result.J, 0.0)
        assert_allclose(result.value.coefficients, 0.0)
        assert_allclose(result.controls, 0.0)
        # V^1 = V^0 = 0 stops the iteration right away
        self.assertEqual(len(result.iterations), 1)

    def test_decoupled_agents(self):
        """
        With diagonal weights each agent's control depends only on its own
        state.
        """
        sys = GlobalSystem([linear_model([[0.0]], [[1.0]], [1.0]),
                            linear_model([[0.0]], [[1.0]], [-0.5])])
        cost = build_cost(np.eye(2), np.eye(2), agent_count=2)
        basis = RbfBasis(sample_centers('halton-box',
                                        ([-1.5, -1.5], [1.5, 1.5]), 40, 0),
                         1.0)
        states = value_iteration(sys, cost, basis, TimeGrid(1.0, 11), 2)
        self.assertEqual(len(states), 2)
        va = states[-1].value
        G = np.zeros((2, 2))
        for k, e in enumerate(np.eye(2)):
            G[:, k] = va.gradient(0, e) - va.gradient(0, np.zeros(2))
        # The cross terms of the gradient are small next to the diagonal
        self.assertLess(abs(G[0, 1]) + abs(G[1, 0]),
                        0.2 * (abs(G[0, 0]) + abs(G[1, 1])))


class TestScalarLq(TestCase):

    """
    x' = u, J = 1/2 int x^2 + u^2 over [0, 1]: V(t, x) = tanh(1 - t) x^2 / 2.
    """

    @classmethod
    def setUpClass(cls):
        config = load_config(os.path.join(SCENARIOS, 'lq1.json'))
        cls.scenario = config.build()
        cls.sys = GlobalSystem(cls.scenario.models)
        cls.result = centralized_run(cls.sys, cls.scenario.cost,
                                     cls.scenario.basis, cls.scenario.grid,
                                     config.K)

    def test_value(self):
        grid = self.scenario.grid
        x = self.scenario.basis.centers[:, 0]
        inner = np.abs(x) <= 2.0
        values = self.result.value.collocation_values()
        for n in (0, 10, 25, 40):
            exact = 0.5 * math.tanh(1.0 - grid.nodes[n]) * x ** 2
            error = np.abs(values[n] - exact) / (1.0 + np.abs(exact))
            self.assertLess(np.max(error[inner]), ORACLE_TOL)

    def test_value_against_riccati(self):
        scenario = self.scenario
        A, B = linear_matrices(self.sys)
        P = riccati_solve(A, B, scenario.cost.Q, scenario.cost.R,
                          scenario.grid)
        x = scenario.basis.centers[:, 0]
        inner = np.abs(x) <= 2.0
        exact = 0.5 * P[0, 0, 0] * x ** 2
        error = (np.abs(self.result.value.collocation_values()[0] - exact) /
                 (1.0 + np.abs(exact)))
        self.assertLess(np.max(error[inner]), ORACLE_TOL)

    def test_cost(self):
        J_exact = 0.5 * math.tanh(1.0)
        self.assertLess(abs(self.result.J - J_exact) / J_exact, ORACLE_TOL)
        self.assertEqual(self.result.states.shape, (51, 1))
        self.assertAlmostEqual(self.result.states[0, 0], 1.0)
        # The closed loop drives the state toward the origin
        self.assertLess(self.result.states[-1, 0], self.result.states[0, 0])

    def test_history(self):
        report = self.result.report()
        self.assertEqual(report['iterations'], len(self.result.iterations))
        self.assertLessEqual(report['iterations'], 20)
        self.assertLess(report['changes'][-1], report['changes'][0])
        self.assertLess(hjb_residual(self.sys, self.scenario.cost,
                                     self.result.value),
                        report['hjb_residuals'][0])


class TestTimeConvergence(TestCase):

    """
    Implicit Euler in time: halving dt about halves the distance between the
    converged value and the Riccati solution.
    """

    def _error(self, time_steps):
        config = load_config(os.path.join(SCENARIOS, 'lq1.json'),
                             overrides={'time_steps': time_steps})
        scenario = config.build()
        sys = GlobalSystem(scenario.models)
        states = value_iteration(sys, scenario.cost, scenario.basis,
                                 scenario.grid, config.K,
                                 tol=float(config.iterations['vi_tol']))
        A, B = linear_matrices(sys)
        P = riccati_solve(A, B, scenario.cost.Q, scenario.cost.R,
                          scenario.grid)
        x = scenario.basis.centers[:, 0]
        inner = np.abs(x) <= 1.5
        exact = 0.5 * P[0, 0, 0] * x ** 2
        values = states[-1].value.collocation_values()[0]
        return float(np.max(np.abs(values - exact)[inner]))

    def test_first_order(self):
        coarse = self._error(51)
        fine = self._error(101)
        self.assertGreater(coarse, 0.0)
        self.assertGreaterEqual(coarse / fine, 1.8)
        self.assertLess(fine, ORACLE_TOL)
