"""
Global quadratic cost, per-agent private weight slices and the performance
index.
"""
import logging

import numpy as np
from scipy.integrate import trapezoid

from hjbnet.dynamics import block_slice
from hjbnet.errors import DimensionMismatch, HjbnetError, IndexOutOfRange


log = logging.getLogger(__name__)

PSD_TOL = 1e-10
SYMMETRY_TOL = 1e-12


class CostError(HjbnetError):
    pass


class NotPSD(CostError):

    def __init__(self, name, reason):
        super().__init__()
        self.name = name
        self.reason = reason

    def __str__(self):
        return '{} is not symmetric positive semidefinite: {}'.format(
            self.name, self.reason
        )


class NotPD(NotPSD):

    def __str__(self):
        return '{} is not symmetric positive definite: {}'.format(
            self.name, self.reason
        )


class TopologyViolation(CostError):

    def __init__(self, name, i, j):
        super().__init__()
        self.name = name
        self.pair = (i, j)

    def __str__(self):
        return 'block {} of {} couples agents that do not communicate'.format(
            self.pair, self.name
        )


class CostSpec:

    """
    J = 1/2 int (x'Qx + u'Ru) dt over the augmented state. Agent i privately
    holds the row slices Q~_i = diag(0, .., N I, .., 0) Q and R~_i (not
    symmetric on their own, only their average is) and R_i^-1.
    """

    __slots__ = ('Q', 'R', 'agent_count', 'state_dim', 'control_dim')

    def __init__(self, Q, R, agent_count, state_dim, control_dim):
        self.Q = Q
        self.R = R
        self.agent_count = agent_count
        self.state_dim = state_dim
        self.control_dim = control_dim
        self.Q.flags.writeable = False
        self.R.flags.writeable = False

    def _row_slice(self, mat, i, dim):
        if not 1 <= i <= self.agent_count:
            raise IndexOutOfRange('agent id', i, self.agent_count)
        out = np.zeros_like(mat)
        block = block_slice(i, dim)
        out[block, :] = self.agent_count * mat[block, :]
        return out

    def Q_tilde(self, i):
        return self._row_slice(self.Q, i, self.state_dim)

    def R_tilde(self, i):
        return self._row_slice(self.R, i, self.control_dim)

    def R_block(self, i):
        block = block_slice(i, self.control_dim)
        return self.R[block, block]

    def R_block_inv(self, i):
        return np.linalg.inv(self.R_block(i))

    def R_bar(self, i):
        """
        diag(0, .., R_i^-1, .., 0)
        """
        out = np.zeros_like(self.R)
        block = block_slice(i, self.control_dim)
        out[block, block] = self.R_block_inv(i)
        return out

    @property
    def R_inv(self):
        return np.linalg.inv(self.R)

    @property
    def block_diagonal_R(self):
        m = self.control_dim
        mask = np.kron(np.eye(self.agent_count), np.ones((m, m)))
        return not np.any(self.R[mask == 0])

    def private(self, i):
        """
        The weights agent i holds privately.
        """
        return CostSlice(i, self.agent_count, self.Q_tilde(i),
                         self.R_tilde(i), self.R_block_inv(i))

    def as_dict(self):
        return {'Q': self.Q.tolist(), 'R': self.R.tolist()}


class CostSlice:

    """
    Agent uid's private view of the cost: its row slices Q~_i, R~_i and
    R_i^-1. It exposes the same accessors as `CostSpec` for its own id and
    refuses every other one.
    """

    __slots__ = ('uid', 'agent_count', '_Q_tilde', '_R_tilde', '_R_inv')

    def __init__(self, uid, agent_count, Q_tilde, R_tilde, R_inv):
        self.uid = uid
        self.agent_count = agent_count
        self._Q_tilde = Q_tilde
        self._R_tilde = R_tilde
        self._R_inv = R_inv

    def _own(self, i):
        if i != self.uid:
            raise ValueError('agent {} only holds its own cost slice, not '
                             'agent {}\'s'.format(self.uid, i))

    def Q_tilde(self, i):
        self._own(i)
        return self._Q_tilde

    def R_tilde(self, i):
        self._own(i)
        return self._R_tilde

    def R_block_inv(self, i):
        self._own(i)
        return self._R_inv

    def __str__(self):
        return '<CostSlice agent={}>'.format(self.uid)


def _check_symmetric(name, mat, cls):
    scale = max(1.0, float(np.max(np.abs(mat))) if mat.size else 1.0)
    if np.max(np.abs(mat - mat.T)) > SYMMETRY_TOL * scale:
        raise cls(name, 'not symmetric')


def _check_mask(name, mat, dim, graph):
    N = graph.agent_count
    for i in range(1, N + 1):
        for j in range(i + 1, N + 1):
            if j in graph.neighbors(i):
                continue
            if np.any(mat[block_slice(i, dim), block_slice(j, dim)]):
                raise TopologyViolation(name, i, j)


def build_cost(Q, R, agent_count=None, graph=None):
    """
    Validate the global weights and build a `CostSpec`. When a graph is given
    the off-diagonal blocks must vanish between non-neighbors.
    """
    Q = np.atleast_2d(np.array(Q, dtype=float))
    R = np.atleast_2d(np.array(R, dtype=float))
    if agent_count is None:
        if graph is None:
            raise ValueError('agent_count or graph is required')
        agent_count = graph.agent_count
    N = agent_count
    if Q.shape[0] != Q.shape[1] or Q.shape[0] % N:
        raise DimensionMismatch('Q', ('nN', 'nN'), Q.shape)
    if R.shape[0] != R.shape[1] or R.shape[0] % N:
        raise DimensionMismatch('R', ('mN', 'mN'), R.shape)

    _check_symmetric('Q', Q, NotPSD)
    _check_symmetric('R', R, NotPD)
    q_min = float(np.min(np.linalg.eigvalsh(Q)))
    if q_min < -PSD_TOL:
        raise NotPSD('Q', 'min eigenvalue {:.3e}'.format(q_min))
    r_min = float(np.min(np.linalg.eigvalsh(R)))
    if r_min <= 0:
        raise NotPD('R', 'min eigenvalue {:.3e}'.format(r_min))

    spec = CostSpec(Q, R, N, Q.shape[0] // N, R.shape[0] // N)
    if graph is not None:
        if graph.agent_count != N:
            raise DimensionMismatch('graph', N, graph.agent_count)
        _check_mask('Q', Q, spec.state_dim, graph)
        _check_mask('R', R, spec.control_dim, graph)
    log.debug('cost built for %d agents (n=%d, m=%d)', N, spec.state_dim,
              spec.control_dim)
    return spec


def _quadratic(mat, v):
    out = 0.5 * np.einsum('...i,ij,...j->...', v, mat, v)
    return float(out) if out.ndim == 0 else out


def _check(spec, x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1:] != spec.Q.shape[:1]:
        raise DimensionMismatch('x', spec.Q.shape[:1], x.shape)
    if u.shape[-1:] != spec.R.shape[:1]:
        raise DimensionMismatch('u', spec.R.shape[:1], u.shape)
    return x, u


def running_cost(spec, x, u):
    """
    1/2 x'Qx + 1/2 u'Ru, vectorized over leading axes.
    """
    x, u = _check(spec, x, u)
    return _quadratic(spec.Q, x) + _quadratic(spec.R, u)


def slice_cost(Q_tilde, R_tilde, x, u):
    """
    1/2 x'Q~ x + 1/2 u'R~ u for private weight slices, vectorized over
    leading axes.
    """
    return _quadratic(Q_tilde, np.asarray(x, dtype=float)) + _quadratic(
        R_tilde, np.asarray(u, dtype=float)
    )


def local_running_cost(spec, i, x, u):
    """
    1/2 x'Q~_i x + 1/2 u'R~_i u, the share of the running cost agent i can
    evaluate with its private weights.
    """
    x, u = _check(spec, x, u)
    return slice_cost(spec.Q_tilde(i), spec.R_tilde(i), x, u)


def performance_index(spec, states, controls, grid):
    """
    Trapezoid quadrature of the running cost over the grid.
    """
    states = np.asarray(states, dtype=float)
    controls = np.asarray(controls, dtype=float)
    if states.shape[0] != grid.node_count:
        raise DimensionMismatch('states', grid.node_count, states.shape)
    if controls.shape[0] != grid.node_count:
        raise DimensionMismatch('controls', grid.node_count, controls.shape)
    values = running_cost(spec, states, controls)
    return float(trapezoid(values, grid.nodes))
