"""
Centralized oracle: value iteration on the augmented system, the global
optimal controller u = -R^-1 g(x)' grad V, and a Riccati reference for linear
instances.
"""
import logging

import numpy as np
from scipy.linalg import block_diag

from hjbnet.cost import performance_index, running_cost
from hjbnet.dynamics import (
    lift_drift, lift_input, rollout, stack_initial, state_slices,
)
from hjbnet.errors import (
    DimensionMismatch, NonFiniteField, NonFiniteState, ValidationError,
)
from hjbnet.rbf import ValueApprox, solve_linear_pde


log = logging.getLogger(__name__)

VI_TOL = 1e-6


class GlobalSystem:

    """
    The augmented system x' = f(x) + g(x) u stacking N agents of identical
    state and control dimensions.
    """

    __slots__ = ('models', '_x_slices', '_u_slices')

    def __init__(self, models):
        if not models:
            raise ValueError('a system needs at least one agent')
        if len({(m.state_dim, m.control_dim) for m in models}) != 1:
            raise DimensionMismatch(
                'agents', 'identical dimensions',
                [(m.state_dim, m.control_dim) for m in models]
            )
        self.models = list(models)
        self._x_slices, self._u_slices = state_slices(self.models)

    @property
    def agent_count(self):
        return len(self.models)

    @property
    def state_dim(self):
        return self.models[0].state_dim

    @property
    def control_dim(self):
        return self.models[0].control_dim

    @property
    def x0(self):
        return stack_initial(self.models)

    def drift(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        for model, xs in zip(self.models, self._x_slices):
            out[..., xs] = model.drift(x[..., xs])
        return out

    def input_map(self, x):
        """
        Block-diagonal g(x): shape (..., nN, mN).
        """
        x = np.asarray(x, dtype=float)
        N, n, m = self.agent_count, self.state_dim, self.control_dim
        out = np.zeros(x.shape[:-1] + (n * N, m * N))
        for model, xs, us in zip(self.models, self._x_slices, self._u_slices):
            out[..., xs, us] = model.input_map(x[..., xs])
        return out

    def lifted_drift(self, x):
        """
        (1/N) sum_i lift_drift(i, N, f_i(x_i)), equal to `drift(x)`.
        """
        N = self.agent_count
        return sum(
            lift_drift(i, N, model.drift(x[..., xs]))
            for i, (model, xs) in enumerate(zip(self.models, self._x_slices),
                                            start=1)
        ) / N

    def lifted_input_map(self, x):
        N = self.agent_count
        return sum(
            lift_input(i, N, model.input_map(x[..., xs]))
            for i, (model, xs) in enumerate(zip(self.models, self._x_slices),
                                            start=1)
        ) / N

    def input_transpose(self, x, p):
        """
        g(x)' p, blockwise: (..., nN), (..., nN) -> (..., mN).
        """
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        out = np.empty(p.shape[:-1] + (self.control_dim * self.agent_count,))
        for model, xs, us in zip(self.models, self._x_slices, self._u_slices):
            out[..., us] = np.einsum('...nm,...n->...m',
                                     model.input_map(x[..., xs]), p[..., xs])
        return out

    def vector_field(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        out = np.empty(x.shape)
        for model, xs, us in zip(self.models, self._x_slices, self._u_slices):
            out[..., xs] = model.vector_field(x[..., xs], u[..., us])
        return out


def control_from_gradient(sys, R_inv, x, grad):
    """
    u = -R^-1 g(x)' grad
    """
    return -sys.input_transpose(x, grad) @ R_inv.T


def optimal_control(sys, cost, va, n, x):
    return control_from_gradient(sys, cost.R_inv, x, va.gradient(n, x))


class ViState:

    """
    One value-iteration iterate: V^{k}, and the fields u^{k-1}, F^{k-1},
    l^{k-1} at every (t_n, x_j) it was solved from. `change` is the sup-norm
    change over the collocation points with respect to the previous value.
    """

    __slots__ = ('index', 'value', 'control', 'dynamics', 'running', 'change')

    def __init__(self, index, value, control=None, dynamics=None,
                 running=None, change=np.inf):
        self.index = index
        self.value = value
        self.control = control
        self.dynamics = dynamics
        self.running = running
        self.change = change

    @classmethod
    def initial(cls, basis, grid):
        return cls(0, ValueApprox.zeros(basis, grid))

    def __str__(self):
        return '<ViState k={}, change={:.3e}>'.format(self.index, self.change)


def vi_step(sys, cost, state, basis, grid):
    """
    One value-iteration step: u^k, F^k = f + g u^k and l^k at every
    collocation pair, then V^{k+1} from the linear PDE.
    """
    grads = state.value.collocation_gradients()
    points = np.broadcast_to(basis.centers, grads.shape)
    control = control_from_gradient(sys, cost.R_inv, points, grads)
    dynamics = sys.vector_field(points, control)
    running = running_cost(cost, points, control)
    if not (np.all(np.isfinite(dynamics)) and np.all(np.isfinite(running))):
        raise NonFiniteField('F^{}'.format(state.index))
    value = solve_linear_pde(basis, dynamics, running, grid)
    change = float(np.max(np.abs(
        value.collocation_values() - state.value.collocation_values()
    )))
    log.debug('value iteration k=%d: change %.3e', state.index + 1, change)
    return ViState(state.index + 1, value, control, dynamics, running, change)


def value_iteration(sys, cost, basis, grid, K, tol=VI_TOL):
    """
    Up to K value-iteration steps from V^0 = 0, stopping early once the
    sup-norm change drops below `tol`. Returns the iterates V^1..V^k.
    """
    if K < 1:
        raise ValidationError('K', 'at least one iteration is required')
    state = ViState.initial(basis, grid)
    states = []
    for _ in range(K):
        previous = state.change
        state = vi_step(sys, cost, state, basis, grid)
        states.append(state)
        if state.change > previous:
            log.warning('value iteration change grew at k=%d (%.3e > %.3e)',
                        state.index, state.change, previous)
        if state.change < tol:
            log.info('value iteration converged at k=%d', state.index)
            break
    return states


def riccati_solve(A, B, Q, R, grid):
    """
    Backward RK4 integration of -P' = A'P + PA - PBR^-1B'P + Q, P(T) = 0.
    Returns P at every grid node, shape (N_t, n, n).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    S = B @ np.linalg.solve(R, B.T)

    def derivative(P):
        return -(A.T @ P + P @ A - P @ S @ P + Q)

    h = -grid.dt
    P = np.zeros_like(A)
    out = np.empty((grid.node_count,) + A.shape)
    out[-1] = P
    for n in range(grid.node_count - 2, -1, -1):
        k1 = derivative(P)
        k2 = derivative(P + h / 2 * k1)
        k3 = derivative(P + h / 2 * k2)
        k4 = derivative(P + h * k3)
        P = P + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        P = (P + P.T) / 2
        if not np.all(np.isfinite(P)):
            raise NonFiniteState(grid.nodes[n])
        out[n] = P
    return out


def linear_matrices(sys):
    """
    Global (A, B) of a system made of 'linear' agents only.
    """
    try:
        A = block_diag(*(model.params['A'] for model in sys.models))
        B = block_diag(*(model.params['B'] for model in sys.models))
    except KeyError as exc:
        raise ValidationError('agents', 'all agents must be linear') from exc
    return A, B


def hjb_residual(sys, cost, va):
    """
    max |dV/dt + grad(V)'(f + g u) + l| over interior nodes and centers, with
    u the controller read off V itself.
    """
    grid = va.grid
    if grid.node_count < 3:
        return 0.0
    values = va.collocation_values()
    grads = va.collocation_gradients()[1:-1]
    points = np.broadcast_to(va.basis.centers, grads.shape)
    control = control_from_gradient(sys, cost.R_inv, points, grads)
    dvdt = (values[2:] - values[:-2]) / (2 * grid.dt)
    res = (dvdt + np.einsum('njd,njd->nj', grads,
                            sys.vector_field(points, control)) +
           running_cost(cost, points, control))
    return float(np.max(np.abs(res)))


class CentralizedResult:

    """
    Output of a centralized run: the final value, the value-iteration history
    and the closed-loop reference fields x(t), u(t), F(t, x), l(t, x),
    V(t, x) on the grid.
    """

    __slots__ = ('value', 'iterations', 'states', 'controls', 'dynamics',
                 'running', 'values', 'J', 'residuals')

    def __init__(self, value, iterations, states, controls, dynamics,
                 running, values, J, residuals):
        self.value = value
        self.iterations = iterations
        self.states = states
        self.controls = controls
        self.dynamics = dynamics
        self.running = running
        self.values = values
        self.J = J
        self.residuals = residuals

    def report(self):
        return {
            'J': self.J,
            'iterations': len(self.iterations),
            'changes': [state.change for state in self.iterations],
            'hjb_residuals': list(self.residuals),
        }


def closed_loop(sys, cost, va, grid):
    """
    Roll the system out under the controller read off `va` and return the
    states, controls, F, l and V along the trajectory.
    """
    R_inv = cost.R_inv

    def controller(t, x):
        return control_from_gradient(sys, R_inv, x, va.gradient_at(t, x))

    states = rollout(sys.models, controller, grid)
    controls = control_from_gradient(sys, R_inv, states,
                                     va.gradients_along(states))
    dynamics = sys.vector_field(states, controls)
    running = running_cost(cost, states, controls)
    return states, controls, dynamics, running, va.values_along(states)


def centralized_run(sys, cost, basis, grid, K, tol=VI_TOL):
    """
    Value iteration followed by a closed-loop rollout under the final value.
    """
    iterations = value_iteration(sys, cost, basis, grid, K, tol=tol)
    va = iterations[-1].value
    states, controls, dynamics, running, values = closed_loop(
        sys, cost, va, grid
    )
    J = performance_index(cost, states, controls, grid)
    residuals = [hjb_residual(sys, cost, state.value) for state in iterations]
    log.info('centralized run: J=%.6g after %d iterations', J,
             len(iterations))
    return CentralizedResult(va, iterations, states, controls, dynamics,
                             running, values, J, residuals)
