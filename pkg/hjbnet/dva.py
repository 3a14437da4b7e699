"""
Distributed value approximation.

Every agent keeps its own estimate of the augmented state trajectory x, the
dynamics field F and the running cost l. Each round it relaxes them by delta_s
toward its private local terms and mixes them with its neighbors' previous
round values through the bus:

    y_s = y_{s-1} + delta_s (local - y_{s-1}) + 1/kappa sum_j a_ij (y_j - y_i)

and solves its own linear PDE from the tracked fields. A sweep k runs rounds
s = 1..S; the control used at round s of sweep k is read off the value the
agent solved at round s of sweep k-1.
"""
import asyncio
import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.integrate import cumulative_trapezoid

from hjbnet.cost import performance_index, slice_cost
from hjbnet.dynamics import block_slice, lift_drift, lift_initial, rollout
from hjbnet.errors import DimensionMismatch, NonFiniteField, ValidationError
from hjbnet.graph import validate_kappa
from hjbnet.netsim import Payload, RoundBus
from hjbnet.rbf import solve_linear_pde
from hjbnet.utils import FieldMode, StepRule, all_finite


log = logging.getLogger(__name__)


def step_schedule(rule, s):
    """
    Returns delta_s for round s >= 1.
    """
    if s < 1:
        raise ValueError('rounds are numbered from 1')
    rule = StepRule.get(rule)
    if rule is StepRule.ONE_OVER_S:
        return 1.0 / s
    return 1.0 / (s + 1)


def mixing_term(prev, neighbor_fields, weights, kappa):
    """
    1/kappa sum_j a_ij (y_j - y_i)
    """
    prev = np.asarray(prev, dtype=float)
    out = np.zeros(prev.shape)
    for field, weight in zip(neighbor_fields, weights):
        out += weight * (field - prev)
    return out / kappa


def tracking_update(prev, local, neighbor_fields, weights, kappa, delta):
    """
    One round of the consensus-tracking recursion shared by x, F and l.
    """
    prev = np.asarray(prev, dtype=float)
    local = np.asarray(local, dtype=float)
    return (prev + delta * (local - prev) +
            mixing_term(prev, neighbor_fields, weights, kappa))


def buffer_bytes(agent_count, rounds, node_count, center_count):
    """
    Size of the per-agent value double buffer over all agents.
    """
    return 2 * agent_count * (rounds + 1) * node_count * center_count * 8


def block_control(uid, model, R_inv, agent_count, x, grad):
    """
    -diag(0, .., R_i^-1, .., 0) g_i(x_i)' grad, with x_i block i of the
    augmented point x. Every other block is zero.
    """
    x = np.asarray(x, dtype=float)
    grad = np.asarray(grad, dtype=float)
    xs = block_slice(uid, model.state_dim)
    us = block_slice(uid, model.control_dim)
    u = np.zeros(x.shape[:-1] + (model.control_dim * agent_count,))
    g = model.input_map(x[..., xs])
    u[..., us] = -np.einsum('...nm,...n->...m', g, grad[..., xs]) @ R_inv.T
    return u


class AgentIterate:

    """
    Fields of agent `uid` at round s of sweep k. `x`, `u` and `F` are sampled
    on the time grid (N_t, .); `l` has shape (N_t,); `F_col` and `l_col` hold
    the same tracked quantities at every (t_n, c_j) pair. `value` is the value
    solved from them (None until the PDE solve).
    """

    __slots__ = ('uid', 'k', 's', 'x', 'u', 'F', 'l', 'F_col', 'l_col',
                 'value')

    def __init__(self, uid, k, s, x, u, F, l, F_col=None, l_col=None,
                 value=None):
        self.uid = uid
        self.k = k
        self.s = s
        self.x = x
        self.u = u
        self.F = F
        self.l = l
        self.F_col = F_col
        self.l_col = l_col
        self.value = value

    @classmethod
    def initial(cls, uid, k, grid, state_size, control_size,
                center_count=None):
        N_t = grid.node_count
        F_col = l_col = None
        if center_count is not None:
            F_col = np.zeros((N_t, center_count, state_size))
            l_col = np.zeros((N_t, center_count))
        return cls(uid, k, 0, np.zeros((N_t, state_size)),
                   np.zeros((N_t, control_size)), np.zeros((N_t, state_size)),
                   np.zeros(N_t), F_col, l_col)

    def shared_fields(self, share_value=False):
        """
        The fields this iterate exposes to neighbors.
        """
        data = {'x': self.x, 'F': self.F, 'l': self.l}
        if self.F_col is not None:
            data['F_col'] = self.F_col
            data['l_col'] = self.l_col
        if share_value and self.value is not None:
            data['theta'] = self.value.coefficients
        return data

    def value_along(self):
        if self.value is None:
            return np.zeros(self.l.shape)
        return self.value.values_along(self.x)

    def __str__(self):
        return '<AgentIterate agent={}, k={}, s={}>'.format(
            self.uid, self.k, self.s
        )


def local_control(uid, value, cost, model, x, n=None):
    """
    u_i = -diag(0, .., R_i^-1, .., 0) g_i(x_i)' grad V from agent uid's
    value. `x` is a point at node n, a trajectory sampled on the grid
    (N_t, d) or the collocation points at every node (N_t, M, d). A missing
    value is the zero value.
    """
    x = np.asarray(x, dtype=float)
    if value is None:
        return np.zeros(x.shape[:-1] + (model.control_dim * cost.agent_count,))
    if n is not None:
        grad = value.gradient(n, x)
    elif x.ndim == 3:
        grad = value.collocation_gradients()
    else:
        grad = value.gradients_along(x)
    return block_control(uid, model, cost.R_block_inv(uid), cost.agent_count,
                         x, grad)


def local_pde_solve(iterate, basis, grid, field_mode=None):
    """
    Solve the agent's linear PDE with its tracked fields as advection and
    source terms.
    """
    if FieldMode.get(field_mode) is FieldMode.COLLOCATION:
        if iterate.F_col is None:
            raise ValueError('collocation fields are not tracked')
        return solve_linear_pde(basis, iterate.F_col, iterate.l_col, grid)
    return solve_linear_pde(basis, iterate.F, iterate.l, grid)


class Agent:

    """
    One agent of the network. It holds its private data only (its model, its
    `CostSlice` of Q~_i, R~_i and R_i^-1 and its lifted initial state) plus the
    weights of the edges to its neighbors, and talks to the others through
    the bus.
    """

    def __init__(self, uid, model, cost, graph, basis, grid, rounds,
                 field_mode=None, share_value=False):
        N = graph.agent_count
        self.uid = uid
        self.agent_count = N
        self.model = model
        self.cost = cost.private(uid)
        self.x0_lifted = lift_initial(uid, N, model.x0)
        self.weights = {
            j: float(graph.adjacency[uid - 1, j - 1])
            for j in graph.neighbors(uid)
        }
        self.basis = basis
        self.grid = grid
        self.rounds = rounds
        self.field_mode = FieldMode.get(field_mode)
        self.share_value = share_value
        self.state_size = model.state_dim * N
        self.control_size = model.control_dim * N
        self.iterate = None
        # Values solved in the previous sweep (read) and the current one
        self.values_prev = [None] * (rounds + 1)
        self.values_next = [None] * (rounds + 1)

    @property
    def _xs(self):
        return block_slice(self.uid, self.model.state_dim)

    @property
    def _us(self):
        return block_slice(self.uid, self.model.control_dim)

    def _post(self, bus):
        fields = self.iterate.shared_fields(self.share_value)
        bus.post(self.uid, Payload(fields, self.uid, bus.round_index))

    def begin_sweep(self, bus, k):
        """
        Reset the tracked fields to zero and share them for round 1.
        """
        center_count = None
        if self.field_mode is FieldMode.COLLOCATION:
            center_count = self.basis.size
        self.iterate = AgentIterate.initial(
            self.uid, k, self.grid, self.state_size, self.control_size,
            center_count,
        )
        self._post(bus)

    def end_sweep(self):
        self.values_prev = self.values_next
        self.values_next = [None] * (self.rounds + 1)

    def state_target(self, prev):
        """
        x_i0 lifted plus the running integral of the lifted vector field along
        the previous estimate.
        """
        rate = lift_drift(self.uid, self.agent_count, self.model.vector_field(
            prev.x[:, self._xs], prev.u[:, self._us]
        ))
        return self.x0_lifted + cumulative_trapezoid(
            rate, self.grid.nodes, axis=0, initial=0
        )

    def local_terms(self, x, u):
        """
        The lifted vector field and the private share of the running cost.
        """
        F = lift_drift(self.uid, self.agent_count, self.model.vector_field(
            x[..., self._xs], u[..., self._us]
        ))
        return F, slice_cost(self.cost.Q_tilde(self.uid),
                             self.cost.R_tilde(self.uid), x, u)

    def step(self, bus, k, s, delta, kappa):
        """
        Round s of sweep k: read the neighbors' round s-1 fields, update x,
        then u, F and l, solve the local PDE and share the result.
        """
        received = bus.collect(self.uid)
        weights = [self.weights[j] for j in received]
        prev = self.iterate

        def track(name, local):
            return tracking_update(
                getattr(prev, name), local,
                [payload[name] for payload in received.values()],
                weights, kappa, delta,
            )

        x = track('x', self.state_target(prev))
        value = self.values_prev[s]
        u = local_control(self.uid, value, self.cost, self.model, x)
        F_local, l_local = self.local_terms(x, u)
        F = track('F', F_local)
        l = track('l', l_local)

        F_col = l_col = None
        if self.field_mode is FieldMode.COLLOCATION:
            shape = (self.grid.node_count,) + self.basis.centers.shape
            points = np.broadcast_to(self.basis.centers, shape)
            u_col = local_control(self.uid, value, self.cost, self.model,
                                  points)
            F_col_local, l_col_local = self.local_terms(points, u_col)
            F_col = track('F_col', F_col_local)
            l_col = track('l_col', l_col_local)

        fields = [arr for arr in (x, u, F, l, F_col, l_col) if arr is not None]
        if not all_finite(*fields):
            raise NonFiniteField('tracking fields', self.uid, s)

        iterate = AgentIterate(self.uid, k, s, x, u, F, l, F_col, l_col)
        iterate.value = local_pde_solve(iterate, self.basis, self.grid,
                                        self.field_mode)
        self.values_next[s] = iterate.value
        self.iterate = iterate
        self._post(bus)
        return iterate

    def __str__(self):
        return '<Agent uid={}, model={}, neighbors={}>'.format(
            self.uid, self.model.name, sorted(self.weights)
        )


def round_update(agents, bus, k, s, delta, kappa, executor=None):
    """
    One synchronous round: every agent steps from the previous round's
    mailbox (concurrently on `executor` when given), then the barrier closes
    the round. Returns the agents' new iterates.
    """
    def step(agent):
        return agent.step(bus, k, s, delta, kappa)

    if executor is None:
        iterates = [step(agent) for agent in agents]
    else:
        iterates = list(executor.map(step, agents))
    bus.advance()
    return iterates


def _max_norm(values):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return float(np.max(np.abs(values)))
    return float(np.max(np.linalg.norm(values.reshape(len(values), -1),
                                       axis=1)))


def _relative(field, ref):
    field = np.asarray(field, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if ref.ndim == 1:
        return float(np.max(np.abs(field - ref) / (1.0 + np.abs(ref))))
    return float(np.max(np.linalg.norm(field - ref, axis=1) /
                        (1.0 + np.linalg.norm(ref, axis=1))))


def reference_deviation(iterate, reference):
    """
    Relative sup deviations of an agent's x, F, l and V from the centralized
    closed-loop reference.
    """
    return {
        'x': _relative(iterate.x, reference.states),
        'F': _relative(iterate.F, reference.dynamics),
        'l': _relative(iterate.l, reference.running),
        'V': _relative(iterate.value_along(), reference.values),
    }


def consensus_deviation(iterates):
    """
    max_{i,j} sup_t |y_i - y_j| for y in x, F, l and V.
    """
    out = {}
    fields = {
        'x': [it.x for it in iterates],
        'F': [it.F for it in iterates],
        'l': [it.l for it in iterates],
        'V': [it.value_along() for it in iterates],
    }
    for name, values in fields.items():
        dev = 0.0
        for a in range(len(values)):
            for b in range(a + 1, len(values)):
                dev = max(dev, _max_norm(values[a] - values[b]))
        out[name] = dev
    return out


class RunReport:

    """
    Monitors of a distributed run: one row per (k, s, agent) with the sup
    norms of the agent's fields, the consensus deviation of x across the
    network and the deviation of x from the centralized reference.
    """

    FIELDS = ('k', 's', 'agent', 'x_norm', 'F_norm', 'l_norm', 'V_norm',
              'consensus_dev', 'ref_dev')

    def __init__(self):
        self.rows = []
        self._consensus = {}
        self.final = {}
        self.rho = None
        self.round_bytes = []
        self.violations = []
        self.access_log = None
        self.wall_time = 0.0

    def record(self, k, s, iterates, reference=None):
        consensus = consensus_deviation(iterates)
        self._consensus[(k, s)] = consensus
        deviations = {}
        for it in iterates:
            ref = None
            if reference is not None:
                dev = reference_deviation(it, reference)
                deviations[it.uid] = dev
                ref = dev['x']
            self.rows.append((
                k, s, it.uid, _max_norm(it.x), _max_norm(it.F),
                _max_norm(it.l), _max_norm(it.value_along()),
                consensus['x'], ref,
            ))
        self.final = {'k': k, 's': s, 'consensus': consensus}
        if deviations:
            self.final['reference'] = {
                name: max(dev[name] for dev in deviations.values())
                for name in ('x', 'F', 'l', 'V')
            }

    def consensus(self, k, s):
        return self._consensus[(k, s)]

    def sweeps(self):
        return sorted({k for k, _ in self._consensus})

    def to_csv(self, path):
        with open(path, 'w', newline='') as fp:
            writer = csv.writer(fp, lineterminator='\n')
            writer.writerow(self.FIELDS)
            for row in self.rows:
                writer.writerow(list(row[:3]) + [
                    '' if val is None else '{:.12e}'.format(val)
                    for val in row[3:]
                ])


class DistributedRun:

    """
    Bulk-synchronous orchestration of the sweeps: the agents of a round run
    concurrently (on a thread pool when `workers > 1`) and the round barrier
    is the only synchronization point.
    """

    def __init__(self, agents, bus, kappa, rule=None, sweeps=1, rounds=1,
                 workers=1, reference=None):
        self.agents = agents
        self.bus = bus
        self.kappa = kappa
        self.rule = StepRule.get(rule)
        self.sweeps = sweeps
        self.rounds = rounds
        self.workers = workers
        self.reference = reference
        self.report = RunReport()
        self._executor = None

    async def _round(self, k, s, delta):
        if self._executor is None:
            return round_update(self.agents, self.bus, k, s, delta,
                                self.kappa)
        # One pool thread runs the round, the others run the agent steps
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(
            self._executor, round_update, self.agents, self.bus, k, s, delta,
            self.kappa, self._executor,
        )

    async def arun(self):
        start = time.monotonic()
        for k in range(self.sweeps):
            for agent in self.agents:
                agent.begin_sweep(self.bus, k)
            self.bus.advance()
            for s in range(1, self.rounds + 1):
                delta = step_schedule(self.rule, s)
                iterates = await self._round(k, s, delta)
                self.report.record(k, s, iterates, self.reference)
            for agent in self.agents:
                agent.end_sweep()
            log.info('sweep %d done: consensus deviation %.3e', k,
                     self.report.consensus(k, self.rounds)['x'])
        self.report.wall_time = time.monotonic() - start
        self.report.round_bytes = list(self.bus.round_bytes)
        self.report.access_log = self.bus.access_log
        self.report.violations = self.bus.access_log.violations(self.bus.graph)
        return self.report

    def run(self):
        loop = asyncio.new_event_loop()
        if self.workers > 1:
            self._executor = ThreadPoolExecutor(max_workers=self.workers + 1)
        try:
            return loop.run_until_complete(self.arun())
        finally:
            if self._executor is not None:
                self._executor.shutdown(wait=True)
                self._executor = None
            loop.close()


def run(models, graph, cost, kappa, basis, grid, K, S, rule=None,
        field_mode=None, share_value=False, workers=1, reference=None,
        bus=None):
    """
    Run K sweeps of S rounds. `basis` is one basis shared by all agents or a
    list with one basis per agent. Returns the report and the agents, which
    hold their final iterates.
    """
    if K < 1 or S < 1:
        raise ValidationError('iterations', 'K and S must be at least 1')
    N = graph.agent_count
    if len(models) != N:
        raise DimensionMismatch('agents', N, len(models))
    rho = validate_kappa(graph, kappa)
    if not cost.block_diagonal_R:
        raise ValidationError('cost.R',
                              'distributed runs need a block-diagonal R')
    bases = list(basis) if isinstance(basis, (list, tuple)) else [basis] * N
    for b in bases:
        if b.dim != cost.Q.shape[0]:
            raise DimensionMismatch('basis', cost.Q.shape[0], b.dim)
    mode = FieldMode.get(field_mode)
    if mode is FieldMode.COLLOCATION and any(
        b.shape != bases[0].shape or
        not np.array_equal(b.centers, bases[0].centers) for b in bases
    ):
        raise ValidationError('rbf.centers', 'collocation fields need '
                              'identical bases across agents')

    bus = bus or RoundBus(graph)
    agents = [
        Agent(i, model, cost, graph, bases[i - 1], grid, S, mode, share_value)
        for i, model in enumerate(models, start=1)
    ]
    log.info('distributed run: %d agents, K=%d, S=%d, rho=%.4g (%s fields)',
             N, K, S, rho, mode.value)
    distributed = DistributedRun(agents, bus, kappa, rule, K, S, workers,
                                 reference)
    report = distributed.run()
    report.rho = rho
    if report.violations:
        log.warning('%d information-structure violations in the access log',
                    len(report.violations))
    return report, agents


def extract_controller(agents):
    """
    U(t_n) = sum_i u_i(t_n), each u_i read off the agent's latest value at
    block i of its final state estimate. Returns U and the per-agent u_i.
    """
    parts = [
        local_control(agent.uid, agent.iterate.value, agent.cost, agent.model,
                      agent.iterate.x)
        for agent in agents
    ]
    return sum(parts), parts


def feedback_controller(agents):
    """
    u(t, x) = sum_i u_i(t, x): every agent closes its own block of the loop
    with -R_i^-1 g_i(x_i)' grad V_i(t, x) from its final value, whose
    coefficients are interpolated linearly in time.
    """
    def controller(t, x):
        x = np.asarray(x, dtype=float)
        u = 0.0
        for agent in agents:
            value = agent.iterate.value
            grad = None if value is None else value.gradient_at(t, x)
            u = u + _feedback_block(agent, x, grad)
        return u

    return controller


def _feedback_block(agent, x, grad):
    if grad is None:
        return np.zeros(agent.control_size)
    return block_control(agent.uid, agent.model,
                         agent.cost.R_block_inv(agent.uid), agent.agent_count,
                         x, grad)


def feedback_cost(models, cost, agents, grid):
    """
    Drive the true system with the agents' feedback laws; returns the
    states, the applied controls at the nodes and the performance index.
    """
    controller = feedback_controller(agents)
    states = rollout(models, controller, grid)
    controls = np.array([controller(t, x)
                         for t, x in zip(grid.nodes, states)])
    return states, controls, performance_index(cost, states, controls, grid)


def open_loop_cost(models, cost, U, grid):
    """
    Drive the true system with U interpolated between nodes; returns the
    states and the performance index.
    """
    U = np.asarray(U, dtype=float)

    def controller(t, x):
        return grid.interpolate(U, t)

    states = rollout(models, controller, grid)
    return states, performance_index(cost, states, U, grid)
