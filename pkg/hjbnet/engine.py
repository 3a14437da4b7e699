"""
Experiment engine: runs the centralized and distributed pipelines on a
scenario and writes their results.
"""
import csv
import json
import logging
import math
import os
import time

import numpy as np

from hjbnet import dva
from hjbnet.cost import performance_index
from hjbnet.dynamics import TimeGrid
from hjbnet.errors import InformationStructureViolation, NonFiniteField
from hjbnet.hjb_central import (
    GlobalSystem, centralized_run, closed_loop, linear_matrices,
    riccati_solve, value_iteration,
)
from hjbnet.rbf import collocation_matrix


log = logging.getLogger(__name__)

ORACLE_TOL = 5e-2
FLOAT_FORMAT = '{:.12e}'


def _fmt(value):
    if value is None:
        return ''
    return FLOAT_FORMAT.format(value)


def _norms(values):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.abs(values)
    return np.linalg.norm(values, axis=1)


def _check_finite(summary):
    for key, value in summary.items():
        if isinstance(value, dict):
            _check_finite(value)
        elif isinstance(value, float) and not math.isfinite(value):
            raise NonFiniteField(key)


class Engine:

    """
    Runs the commands on one loaded scenario. Every command returns a
    summary dict; the run commands also write their outputs to `out_dir`:
        rounds.csv, controller.csv, trajectories.csv, access_log.csv and
        summary.json (deterministic for a given scenario and seed), plus
        timing.json (wall-clock times).
    """

    def __init__(self, config, out_dir=None):
        self.config = config
        self.out_dir = out_dir or config.output
        self._scenario = None
        self._estimate = None
        self._timing = {}

    @property
    def scenario(self):
        if self._scenario is None:
            self._scenario = self.config.build()
        return self._scenario

    def _check_budget(self):
        """
        Estimate the work of a run once, before starting it. The estimate
        warns when it goes past `hjbnet.config.FLOP_WARNING`.
        """
        if self._estimate is None:
            self._estimate = self.config.cost_estimate(self.scenario)
            log.info('%s: about %.2e flops over %d PDE solves, %.1f MB of '
                     'value buffers', self.config.title,
                     self._estimate['flops'], self._estimate['pde_solves'],
                     self._estimate['buffer_mb'])
        return self._estimate

    def _path(self, name):
        os.makedirs(self.out_dir, exist_ok=True)
        return os.path.join(self.out_dir, name)

    def _summary(self, command, **values):
        summary = {
            'command': command,
            'title': self.config.title,
            'config_digest': self.config.digest,
            'seed': self.config.rbf['seed'],
            'rho': self.scenario.rho,
        }
        summary.update(values)
        _check_finite(summary)
        return summary

    def _emit(self, summary):
        with open(self._path('summary.json'), 'w') as fp:
            json.dump(summary, fp, indent=2, sort_keys=True)
            fp.write('\n')
        with open(self._path('timing.json'), 'w') as fp:
            json.dump(self._timing, fp, indent=2, sort_keys=True)
            fp.write('\n')
        log.info('wrote results to %s', self.out_dir)

    def validate(self):
        """
        Build the scenario and report its spectral, numerical and budget
        figures without running anything.
        """
        scenario = self.scenario
        graph, basis = scenario.graph, scenario.basis
        lower = basis.centers.min(axis=0)
        upper = basis.centers.max(axis=0)
        smoothness = {}
        for uid, model in enumerate(scenario.models, start=1):
            block = slice((uid - 1) * model.state_dim, uid * model.state_dim)
            smoothness[uid] = model.smoothness_check(lower[block],
                                                     upper[block])
        report = {
            'title': self.config.title,
            'config_digest': self.config.digest,
            'agents': self.config.agent_count,
            'edges': graph.as_dict()['edges'],
            'laplacian_eigenvalues': graph.eigenvalues().tolist(),
            'kappa': self.config.kappa,
            'rho': scenario.rho,
            'time_grid': {'horizon': scenario.grid.horizon,
                          'nodes': scenario.grid.node_count},
            'basis': {
                'centers': basis.size,
                'shape': basis.shape,
                'collocation_cond': float(np.linalg.cond(
                    collocation_matrix(basis)
                )),
            },
            'block_diagonal_R': scenario.cost.block_diagonal_R,
            'smoothness': smoothness,
            'estimate': self._check_budget(),
        }
        log.info('scenario %s is valid (rho=%.4g)', self.config.title,
                 scenario.rho)
        return report

    def _centralized(self):
        scenario = self.scenario
        start = time.monotonic()
        result = centralized_run(
            GlobalSystem(scenario.models), scenario.cost, scenario.basis,
            scenario.grid, self.config.K,
            tol=float(self.config.iterations['vi_tol']),
        )
        self._timing['centralized'] = time.monotonic() - start
        return result

    def _distributed(self, reference=None):
        scenario = self.scenario
        report, agents = dva.run(
            scenario.models, scenario.graph, scenario.cost, self.config.kappa,
            scenario.basis, scenario.grid, self.config.K, self.config.S,
            rule=self.config.step_schedule,
            field_mode=self.config.field_mode,
            share_value=self.config.share_value,
            workers=self.config.workers,
            reference=reference,
        )
        self._timing['distributed'] = report.wall_time
        if report.violations:
            round_index, reader, owner = report.violations[0]
            raise InformationStructureViolation(reader, owner, round_index)
        U, _ = dva.extract_controller(agents)
        _, _, J = dva.feedback_cost(scenario.models, scenario.cost, agents,
                                    scenario.grid)
        _, J_open = dva.open_loop_cost(scenario.models, scenario.cost, U,
                                       scenario.grid)
        return report, agents, U, J, J_open

    def write_trajectories(self, agents=None, reference=None):
        """
        Long-form norm curves over time, one row per (t_n, agent); the
        centralized reference uses the agent label 'central'.
        """
        nodes = self.scenario.grid.nodes
        with open(self._path('trajectories.csv'), 'w', newline='') as fp:
            writer = csv.writer(fp, lineterminator='\n')
            writer.writerow(('t', 'agent', 'x_norm', 'F_norm', 'l_norm',
                             'V_norm'))
            curves = []
            if reference is not None:
                curves.append(('central', reference.states,
                               reference.dynamics, reference.running,
                               reference.values))
            for agent in agents or []:
                it = agent.iterate
                curves.append((agent.uid, it.x, it.F, it.l,
                               it.value_along()))
            for label, x, F, l, V in curves:
                columns = [_norms(x), _norms(F), _norms(l), _norms(V)]
                for n, t in enumerate(nodes):
                    writer.writerow([_fmt(t), label] +
                                    [_fmt(col[n]) for col in columns])

    def write_controller(self, U, reference=None):
        """
        |U(t_n)| and, with a reference, |U - u|/(1 + |u|) per node.
        Returns the largest relative deviation (None without reference).
        """
        nodes = self.scenario.grid.nodes
        U_norm = _norms(U)
        dev = None
        if reference is not None:
            dev = (np.linalg.norm(U - reference.controls, axis=1) /
                   (1.0 + np.linalg.norm(reference.controls, axis=1)))
        with open(self._path('controller.csv'), 'w', newline='') as fp:
            writer = csv.writer(fp, lineterminator='\n')
            writer.writerow(('t', 'U_norm', 'U_dev'))
            for n, t in enumerate(nodes):
                writer.writerow((_fmt(t), _fmt(U_norm[n]),
                                 _fmt(None if dev is None else dev[n])))
        return None if dev is None else float(np.max(dev))

    def centralized(self):
        self._check_budget()
        result = self._centralized()
        self.write_trajectories(reference=result)
        summary = self._summary(
            'centralized',
            J_centralized=result.J,
            value_iteration=result.report(),
        )
        self._emit(summary)
        return summary

    def distributed(self, reference=None, command='distributed'):
        self._check_budget()
        report, agents, U, J, J_open = self._distributed(reference)
        report.access_log.to_csv(self._path('access_log.csv'))
        report.to_csv(self._path('rounds.csv'))
        self.write_trajectories(agents, reference)
        controller_dev = self.write_controller(U, reference)
        values = {
            'J_distributed': J,
            'J_open_loop': J_open,
            'consensus': report.final['consensus'],
            'payload_bytes': {
                'total': int(sum(report.round_bytes)),
                'max_round': int(max(report.round_bytes)),
            },
            'violations': len(report.violations),
        }
        if reference is not None:
            values['J_centralized'] = reference.J
            values['J_relative_gap'] = abs(J - reference.J) / max(
                abs(reference.J), 1e-300
            )
            values['reference_deviation'] = report.final['reference']
            values['controller_deviation'] = controller_dev
            values['value_iteration'] = reference.report()
        summary = self._summary(command, **values)
        self._emit(summary)
        return summary

    def compare(self):
        """
        Run the centralized oracle, then the distributed iteration with the
        oracle as the reference of every monitor.
        """
        self._check_budget()
        return self.distributed(reference=self._centralized(),
                                command='compare')

    def oracle_lq(self):
        """
        Riccati acceptance checks: the closed-form scalar case, then the
        scenario's value function and cost against its Riccati solution.
        The scenario must be made of linear agents.
        """
        checks = []

        def check(name, error, tol=ORACLE_TOL):
            checks.append({'name': name, 'error': float(error),
                           'tolerance': tol, 'passed': bool(error < tol)})

        grid = TimeGrid(1.0, 51)
        P = riccati_solve([[0.0]], [[1.0]], [[1.0]], [[1.0]], grid)
        check('riccati P(0) = tanh(1)',
              abs(P[0, 0, 0] - math.tanh(1.0)) / math.tanh(1.0))

        scenario = self.scenario
        sys = GlobalSystem(scenario.models)
        cost = scenario.cost
        A, B = linear_matrices(sys)
        P = riccati_solve(A, B, cost.Q, cost.R, scenario.grid)
        iterations = value_iteration(
            sys, cost, scenario.basis, scenario.grid, self.config.K,
            tol=float(self.config.iterations['vi_tol']),
        )
        va = iterations[-1].value
        centers = scenario.basis.centers
        exact = 0.5 * np.einsum('jd,nde,je->nj', centers, P, centers)
        check('value vs riccati at collocation points', np.max(
            np.abs(va.collocation_values() - exact) / (1.0 + np.abs(exact))
        ))
        states, controls, *_ = closed_loop(sys, cost, va, scenario.grid)
        J = performance_index(cost, states, controls, scenario.grid)
        J_exact = 0.5 * float(sys.x0 @ P[0] @ sys.x0)
        check('J vs x0\'P(0)x0/2', abs(J - J_exact) / max(J_exact, 1e-12))

        for item in checks:
            log.info('oracle check %s: error %.3e (%s)', item['name'],
                     item['error'], 'pass' if item['passed'] else 'FAIL')
        return {
            'title': self.config.title,
            'checks': checks,
            'passed': all(item['passed'] for item in checks),
        }
