"""
Affine-in-control agent dynamics, the block lifts that build the augmented
system, and trajectory integration.

All model callables are vectorized over leading axes: `drift` maps (..., n)
to (..., n) and `input_map` maps (..., n) to (..., n, m).
"""
import logging

import numpy as np

from hjbnet.agent.registry import register
from hjbnet.errors import (
    DimensionMismatch, IndexOutOfRange, NonFiniteField, NonFiniteState,
    ValidationError,
)


log = logging.getLogger(__name__)

ROLLOUT_RTOL = 1e-6
ROLLOUT_ATOL = 1e-12
MAX_HALVINGS = 12


class AgentModel:

    """
    The private dynamics of one agent: x_i' = f_i(x_i) + g_i(x_i) u_i with
    initial state x0.
    """

    __slots__ = ('name', 'state_dim', 'control_dim', 'x0', 'params', '_drift',
                 '_input_map')

    def __init__(self, name, state_dim, control_dim, drift, input_map, x0,
                 params=None):
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (state_dim,):
            raise DimensionMismatch('x0', (state_dim,), x0.shape)
        self.name = name
        self.state_dim = state_dim
        self.control_dim = control_dim
        self.x0 = x0
        self.params = params or {}
        self._drift = drift
        self._input_map = input_map

    def _as_state(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.state_dim,):
            raise DimensionMismatch('state', (self.state_dim,), x.shape)
        return x

    def drift(self, x):
        return self._drift(self._as_state(x))

    def input_map(self, x):
        return self._input_map(self._as_state(x))

    def vector_field(self, x, u):
        x = self._as_state(x)
        u = np.asarray(u, dtype=float)
        return self._drift(x) + np.einsum(
            '...nm,...m->...n', self._input_map(x), u
        )

    def smoothness_check(self, lower, upper, samples=16, seed=0, step=1e-6):
        """
        Finite-difference Jacobians of the drift and the input map at random
        points of the box. Returns the largest Frobenius norm found; raises
        `NonFiniteField` if a derivative does not exist numerically.
        """
        rng = np.random.default_rng(seed)
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        width = upper - lower
        points = lower + rng.random((samples, self.state_dim)) * width
        bound = 0.0
        for k in range(self.state_dim):
            shift = np.zeros(self.state_dim)
            shift[k] = step
            d_drift = (self.drift(points + shift) -
                       self.drift(points - shift)) / (2 * step)
            d_input = (self.input_map(points + shift) -
                       self.input_map(points - shift)) / (2 * step)
            if not (np.all(np.isfinite(d_drift)) and
                    np.all(np.isfinite(d_input))):
                raise NonFiniteField('{} jacobian'.format(self.name))
            bound = max(
                bound,
                float(np.max(np.linalg.norm(d_drift, axis=-1))),
                float(np.max(np.linalg.norm(d_input, axis=(-2, -1)))),
            )
        return bound

    def __str__(self):
        return '<AgentModel {} n={}, m={}>'.format(
            self.name, self.state_dim, self.control_dim
        )


def _unicycle_drift(x):
    return np.zeros_like(x)


def _unicycle_input_map(x):
    theta = x[..., 2]
    g = np.zeros(x.shape[:-1] + (3, 2))
    g[..., 0, 0] = np.cos(theta)
    g[..., 1, 0] = np.sin(theta)
    g[..., 2, 1] = 1.0
    return g


def unicycle_model(x0):
    """
    Ground vehicle with state (r_x, r_y, theta) and control (v, omega).
    """
    return AgentModel(
        'unicycle', 3, 2, _unicycle_drift, _unicycle_input_map, x0
    )


def linear_model(A, B, x0):
    """
    Linear time-invariant agent x' = Ax + Bu.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch('A', (n, n), A.shape)
    if B.ndim != 2 or B.shape[0] != n:
        raise DimensionMismatch('B', (n, 'm'), B.shape)

    def drift(x):
        return x @ A.T

    def input_map(x):
        return np.broadcast_to(B, x.shape[:-1] + B.shape)

    return AgentModel('linear', n, B.shape[1], drift, input_map, x0,
                      params={'A': A, 'B': B})


@register('unicycle')
def _build_unicycle(params):
    return unicycle_model(params['x0'])


@register('linear')
def _build_linear(params):
    return linear_model(params['A'], params['B'], params['x0'])


class TimeGrid:

    """
    Uniform grid t_n = n * dt on [0, T] shared by trajectories and the
    backward PDE sweep.
    """

    __slots__ = ('horizon', 'node_count', 'nodes')

    def __init__(self, horizon, node_count):
        if horizon <= 0:
            raise ValidationError('horizon', 'must be positive')
        if node_count < 2:
            raise ValidationError('time_steps', 'need at least 2 nodes')
        self.horizon = float(horizon)
        self.node_count = int(node_count)
        self.nodes = np.linspace(0.0, self.horizon, self.node_count)

    @property
    def dt(self):
        return self.horizon / (self.node_count - 1)

    def check_field(self, values, name):
        """
        Validate a grid field: one entry per node, every entry finite.
        """
        values = np.asarray(values, dtype=float)
        if values.shape[:1] != (self.node_count,):
            raise DimensionMismatch(name, (self.node_count,), values.shape)
        if not np.all(np.isfinite(values)):
            raise NonFiniteField(name)
        return values

    def locate(self, t):
        """
        Returns (n, w) such that t = (1 - w) t_n + w t_{n+1}.
        """
        pos = min(max(t / self.dt, 0.0), self.node_count - 1.0)
        n = min(int(np.floor(pos)), self.node_count - 2)
        return n, pos - n

    def interpolate(self, values, t):
        """
        Linear interpolation of a grid field at time t.
        """
        n, w = self.locate(t)
        return (1.0 - w) * values[n] + w * values[n + 1]

    def __str__(self):
        return '<TimeGrid T={}, nodes={}>'.format(self.horizon,
                                                   self.node_count)


def block_slice(i, dim):
    return slice((i - 1) * dim, i * dim)


def _check_agent(i, N):
    if not 1 <= i <= N:
        raise IndexOutOfRange('agent id', i, N)


def lift_drift(i, N, v):
    """
    Embeds N*v at block i of a zero vector of size n*N.
    """
    _check_agent(i, N)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    out = np.zeros(v.shape[:-1] + (v.shape[-1] * N,))
    out[..., block_slice(i, v.shape[-1])] = N * v
    return out


def lift_initial(i, N, x0):
    return lift_drift(i, N, x0)


def lift_input(i, N, G):
    """
    Embeds N*G at diagonal block i of a zero (nN x mN) matrix.
    """
    _check_agent(i, N)
    G = np.asarray(G, dtype=float)
    if G.ndim < 2:
        raise DimensionMismatch('input map', ('n', 'm'), G.shape)
    n, m = G.shape[-2:]
    out = np.zeros(G.shape[:-2] + (n * N, m * N))
    out[..., block_slice(i, n), block_slice(i, m)] = N * G
    return out


def state_slices(models):
    """
    Returns the state and control slices of each agent in the stacked vectors.
    """
    states, controls = [], []
    x_pos = u_pos = 0
    for model in models:
        states.append(slice(x_pos, x_pos + model.state_dim))
        controls.append(slice(u_pos, u_pos + model.control_dim))
        x_pos += model.state_dim
        u_pos += model.control_dim
    return states, controls


def stacked_field(models, x, u):
    """
    Global vector field (f_1 + g_1 u_1, ..., f_N + g_N u_N) of stacked states.
    """
    xs, us = state_slices(models)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    out = np.empty(x.shape)
    for model, xb, ub in zip(models, xs, us):
        out[..., xb] = model.vector_field(x[..., xb], u[..., ub])
    return out


def stack_initial(models):
    return np.concatenate([model.x0 for model in models])


def _rk4(field, t, x, h):
    k1 = field(t, x)
    k2 = field(t + h / 2, x + h / 2 * k1)
    k3 = field(t + h / 2, x + h / 2 * k2)
    k4 = field(t + h, x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _rk4_interval(field, t, x, h, rtol, depth=0):
    """
    One RK4 step over [t, t + h], halved recursively while it disagrees with
    two half steps by more than rtol |x| + ROLLOUT_ATOL.
    """
    whole = _rk4(field, t, x, h)
    half = _rk4(field, t, x, h / 2)
    halves = _rk4(field, t + h / 2, half, h / 2)
    if np.all(np.isfinite(whole)) and np.all(np.isfinite(halves)):
        gap = np.max(np.abs(whole - halves), initial=0.0)
        if gap <= rtol * np.max(np.abs(halves), initial=0.0) + ROLLOUT_ATOL:
            return whole
    if depth >= MAX_HALVINGS:
        if not np.all(np.isfinite(halves)):
            raise NonFiniteState(t + h)
        return halves
    mid = _rk4_interval(field, t, x, h / 2, rtol, depth + 1)
    return _rk4_interval(field, t + h / 2, mid, h / 2, rtol, depth + 1)


def rollout(models, controller, grid, rtol=ROLLOUT_RTOL):
    """
    Classical RK4 integration of the stacked agents under
    `controller(t, x) -> u`, one step per grid interval unless step doubling
    shows the step is too long (a fast closed loop), in which case the
    interval is halved. Returns the states at every grid node.
    """
    x = stack_initial(models)
    states = np.empty((grid.node_count, x.size))
    states[0] = x

    def field(t, x):
        return stacked_field(models, x, controller(t, x))

    with np.errstate(over='ignore', invalid='ignore'):
        for n in range(grid.node_count - 1):
            x = _rk4_interval(field, grid.nodes[n], x, grid.dt, rtol)
            if not np.all(np.isfinite(x)):
                raise NonFiniteState(grid.nodes[n + 1])
            states[n + 1] = x
    return states


def state_bounds(models, inflate=0.5, floor=0.5):
    """
    Componentwise hull of the agents' initial states, widened by `inflate`
    times its width (half on each side) and by at least `floor` on each side
    of a degenerate component. With identical agent dimensions the hull is
    taken across agents and tiled over the blocks.
    """
    dims = {model.state_dim for model in models}
    if len(dims) == 1:
        starts = np.array([model.x0 for model in models])
        lo, hi = starts.min(axis=0), starts.max(axis=0)
        lo, hi = np.tile(lo, len(models)), np.tile(hi, len(models))
    else:
        lo = hi = stack_initial(models)
    pad = np.maximum(inflate * (hi - lo) / 2, np.where(hi > lo, 0.0, floor))
    return lo - pad, hi + pad
