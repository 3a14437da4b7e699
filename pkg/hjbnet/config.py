"""
Scenario configuration: one JSON document describing the agents, the
communication graph, the cost, the basis and the iteration budgets.
"""
import hashlib
import json
import logging
import re

import numpy as np

from hjbnet.agent import AgentTemplate
from hjbnet.cost import CostError, build_cost
from hjbnet.dva import buffer_bytes
from hjbnet.dynamics import TimeGrid, rollout, state_bounds
from hjbnet.errors import (
    ConfigError, ModelError, ParseError, ValidationError,
)
from hjbnet.graph import Graph, GraphError, validate_kappa
from hjbnet.rbf import RbfBasis, sample_centers
from hjbnet.utils import CenterStrategy, FieldMode, StepRule


log = logging.getLogger(__name__)

DEFAULT_RBF = {
    'count': 150,
    'shape': 70.0,
    'centers': CenterStrategy.default().value,
    'seed': 0,
    'bounds': None,
    'jitter': 0.25,
}
DEFAULT_ITERATIONS = {'K': 5, 'S': 50, 'vi_tol': 1e-6}
DEFAULT_MEMORY_CAP_MB = 2048
# Above this many floating-point operations a run is flagged before starting
FLOP_WARNING = 1e12

_BLOCK_KEY = re.compile(r'^\s*\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*$')


def _expand_blocks(name, blocks, agent_count, dim):
    """
    Build a dense symmetric matrix from {"(i,j)": block} entries. A block is a
    dim x dim matrix or a scalar c meaning c I; Q_ji is set to Q_ij'.
    """
    mat = np.zeros((agent_count * dim, agent_count * dim))
    for key, value in blocks.items():
        match = _BLOCK_KEY.match(key)
        if match is None:
            raise ValidationError(name, 'bad block key {!r}'.format(key))
        i, j = int(match.group(1)), int(match.group(2))
        if not (1 <= i <= agent_count and 1 <= j <= agent_count):
            raise ValidationError(name, 'block {} out of range'.format(key))
        block = np.asarray(value, dtype=float)
        if block.ndim == 0:
            block = float(block) * np.eye(dim)
        if block.shape != (dim, dim):
            raise ValidationError(name, 'block {} has shape {}'.format(
                key, block.shape
            ))
        rows = slice((i - 1) * dim, i * dim)
        cols = slice((j - 1) * dim, j * dim)
        mat[rows, cols] = block
        mat[cols, rows] = block.T
    return mat


def parse_weight(name, spec, agent_count, dim):
    """
    A weight is a dense matrix, {"scalar": c} for c I, or a dict of blocks.
    """
    if isinstance(spec, dict):
        if 'scalar' in spec:
            return float(spec['scalar']) * np.eye(agent_count * dim)
        return _expand_blocks(name, spec, agent_count, dim)
    return np.atleast_2d(np.asarray(spec, dtype=float))


class Scenario:

    """
    The numerical objects built from a validated configuration.
    """

    __slots__ = ('graph', 'models', 'cost', 'grid', 'basis', 'rho')

    def __init__(self, graph, models, cost, grid, basis, rho):
        self.graph = graph
        self.models = models
        self.cost = cost
        self.grid = grid
        self.basis = basis
        self.rho = rho


class ScenarioConfig:

    """
    A validated scenario description. See `from_dict()` for the layout.
    """

    def __init__(self, agents, edges, Q, R, kappa, horizon=2.0, time_steps=101,
                 title=None, step_schedule=None, field_mode=None,
                 share_value=False, workers=1, rbf=None, iterations=None,
                 memory_cap_mb=DEFAULT_MEMORY_CAP_MB, output='out'):
        self.title = title
        self.agents = agents
        self.edges = edges
        self.Q = Q
        self.R = R
        self.kappa = kappa
        self.horizon = horizon
        self.time_steps = time_steps
        self.step_schedule = StepRule.get(step_schedule)
        self.field_mode = FieldMode.get(field_mode)
        self.share_value = bool(share_value)
        self.workers = int(workers)
        self.rbf = dict(DEFAULT_RBF, **(rbf or {}))
        self.iterations = dict(DEFAULT_ITERATIONS, **(iterations or {}))
        self.memory_cap_mb = memory_cap_mb
        self.output = output
        self.digest = None

    @property
    def agent_count(self):
        return len(self.agents)

    @property
    def K(self):
        return int(self.iterations['K'])

    @property
    def S(self):
        return int(self.iterations['S'])

    @classmethod
    def from_dict(cls, cfg_dict):
        """
        Create a new scenario from the given dictionary.
        The dictionary takes the form of:
            {
                "title": <str>,
                "horizon": <T>,
                "time_steps": <N_t>,
                "agents": [{"model": <registered-model>, "x0": [...]}, ...],
                "graph": {"edges": [[i, j], [i, j, weight], ...]},
                "cost": {"Q": <weight>, "R": <weight>},
                "kappa": <float>,
                "step_schedule": "one_over_s" | "one_over_s_plus_one",
                "field_mode": "collocation" | "trajectory",
                "share_value": <bool>,
                "workers": <int>,
                "rbf": {"count", "shape", "centers", "seed", "bounds",
                        "jitter"},
                "iterations": {"K", "S", "vi_tol"},
                "memory_cap_mb": <int>,
                "output": <directory>
            }
        Agent ids are the 1-based positions in "agents". A weight is a dense
        matrix, {"scalar": c} or a dict of "(i,j)" blocks; "rbf.centers" is a
        placement strategy or an explicit list of points.
        """
        if not isinstance(cfg_dict, dict):
            raise ParseError('a scenario must be a JSON object')
        agents = cfg_dict.get('agents')
        if not isinstance(agents, list) or not agents:
            raise ParseError('missing "agents" array')
        try:
            templates = [
                AgentTemplate.from_dict(uid, agent_dict)
                for uid, agent_dict in enumerate(agents, start=1)
            ]
        except (KeyError, TypeError) as exc:
            raise ValidationError('agents', str(exc)) from exc
        cost = cfg_dict.get('cost') or {}
        if 'Q' not in cost or 'R' not in cost:
            raise ParseError('"cost" needs both "Q" and "R"')
        if 'kappa' not in cfg_dict:
            raise ValidationError('kappa', 'required')
        if int(cfg_dict.get('workers', 1)) < 1:
            raise ValidationError('workers', 'at least one worker is required')
        try:
            return cls(
                templates,
                (cfg_dict.get('graph') or {}).get('edges', []),
                cost['Q'],
                cost['R'],
                float(cfg_dict['kappa']),
                horizon=float(cfg_dict.get('horizon', 2.0)),
                time_steps=int(cfg_dict.get('time_steps', 101)),
                title=cfg_dict.get('title'),
                step_schedule=cfg_dict.get('step_schedule'),
                field_mode=cfg_dict.get('field_mode'),
                share_value=cfg_dict.get('share_value', False),
                workers=cfg_dict.get('workers', 1),
                rbf=cfg_dict.get('rbf'),
                iterations=cfg_dict.get('iterations'),
                memory_cap_mb=float(cfg_dict.get('memory_cap_mb',
                                                 DEFAULT_MEMORY_CAP_MB)),
                output=cfg_dict.get('output', 'out'),
            )
        except (ModelError, TypeError, ValueError) as exc:
            raise ValidationError('scenario', str(exc)) from exc

    def as_dict(self):
        return {
            'title': self.title,
            'horizon': self.horizon,
            'time_steps': self.time_steps,
            'agents': [agent.as_dict() for agent in self.agents],
            'graph': {'edges': self.edges},
            'cost': {'Q': self.Q, 'R': self.R},
            'kappa': self.kappa,
            'step_schedule': self.step_schedule.value,
            'field_mode': self.field_mode.value,
            'share_value': self.share_value,
            'workers': self.workers,
            'rbf': self.rbf,
            'iterations': self.iterations,
            'memory_cap_mb': self.memory_cap_mb,
            'output': self.output,
        }

    def _centers(self, models, grid):
        centers = self.rbf['centers']
        if not isinstance(centers, str):
            return np.array(centers, dtype=float, ndmin=2)
        strategy = CenterStrategy.get(centers)
        bounds = self.rbf.get('bounds')
        if bounds is None:
            bounds = state_bounds(models)
        trajectory = None
        if strategy is CenterStrategy.TRAJECTORY:
            control_size = sum(model.control_dim for model in models)
            trajectory = rollout(models, lambda t, x: np.zeros(control_size),
                                 grid)
        return sample_centers(strategy, bounds, int(self.rbf['count']),
                              self.rbf['seed'], trajectory=trajectory,
                              jitter=float(self.rbf['jitter']))

    def build(self, check_kappa=True):
        """
        Build and validate the graph, the models, the cost, the time grid and
        the basis. Every failure surfaces as a `ValidationError` naming the
        offending key.
        """
        field = 'agents'
        try:
            models = [agent.new_model() for agent in self.agents]
            field = 'time_steps'
            grid = TimeGrid(self.horizon, self.time_steps)
            field = 'graph'
            graph = Graph.from_dict(self.agent_count, {'edges': self.edges})
            field = 'kappa'
            rho = validate_kappa(graph, self.kappa) if check_kappa else None
            field = 'cost'
            dims = {(m.state_dim, m.control_dim) for m in models}
            if len(dims) != 1:
                raise ValidationError('agents', 'agents must share state and '
                                      'control dimensions')
            (n, m), = dims
            Q = parse_weight('cost.Q', self.Q, self.agent_count, n)
            R = parse_weight('cost.R', self.R, self.agent_count, m)
            cost = build_cost(Q, R, graph=graph)
            field = 'rbf'
            basis = RbfBasis(self._centers(models, grid),
                             float(self.rbf['shape']))
        except ConfigError:
            raise
        except (ModelError, GraphError, CostError) as exc:
            raise ValidationError(field, str(exc)) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(field, str(exc)) from exc

        need = buffer_bytes(self.agent_count, self.S, grid.node_count,
                            basis.size) / 2 ** 20
        if need > self.memory_cap_mb:
            raise ValidationError('memory_cap_mb', 'value buffers need '
                                  '{:.0f} MB'.format(need))
        log.debug('built scenario %s: %s, %s, %s', self.title, graph, grid,
                  basis)
        return Scenario(graph, models, cost, grid, basis, rho)

    def cost_estimate(self, scenario):
        """
        Rough floating-point operation count of the two pipelines and the
        size of the value double buffer.
        """
        M = scenario.basis.size
        d = scenario.basis.dim
        N = self.agent_count
        N_t = scenario.grid.node_count
        per_solve = N_t * (2 * M ** 3 / 3 + 2 * M ** 2 * d)
        flops = per_solve * (self.K * self.S * N + self.K)
        estimate = {
            'flops': flops,
            'buffer_mb': buffer_bytes(N, self.S, N_t, M) / 2 ** 20,
            'pde_solves': self.K * self.S * N + self.K,
        }
        if flops > FLOP_WARNING:
            log.warning('scenario %s needs about %.2e flops', self.title,
                        flops)
        return estimate

    def __str__(self):
        return '<ScenarioConfig title={}, agents={}>'.format(
            self.title, self.agent_count
        )


def apply_overrides(cfg_dict, overrides):
    """
    Set dotted keys ('rbf.seed', 'iterations.K', ...) in a raw scenario.
    """
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node = cfg_dict
        parts = key.split('.')
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValidationError(key, 'cannot override a non-object')
        node[parts[-1]] = value
    return cfg_dict


def load_config(path, overrides=None):
    """
    Read, parse and validate a scenario file. The digest of the file bytes is
    stored on the returned config.
    """
    try:
        with open(path, 'rb') as fp:
            raw = fp.read()
    except OSError as exc:
        raise ParseError('cannot read {}: {}'.format(path, exc)) from exc
    try:
        cfg_dict = json.loads(raw.decode('utf-8'))
    except UnicodeDecodeError as exc:
        raise ParseError('not UTF-8 text') from exc
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from exc
    if not isinstance(cfg_dict, dict):
        raise ParseError('a scenario must be a JSON object')
    config = ScenarioConfig.from_dict(apply_overrides(cfg_dict, overrides))
    config.digest = hashlib.sha256(raw).hexdigest()
    log.info('loaded %s from %s', config, path)
    return config
