"""
Build communication graphs
"""
import logging

import networkx as nx
import numpy as np

from hjbnet.errors import HjbnetError, IndexOutOfRange


log = logging.getLogger(__name__)

# Validity margin on the mixing factor
TOL_SPECTRAL = 1e-9


class GraphError(HjbnetError):
    pass


class SelfLoop(GraphError):

    def __init__(self, node):
        super().__init__()
        self._node = node

    def __str__(self):
        return 'self-loop on agent {}'.format(self._node)


class DuplicateEdge(GraphError):

    def __init__(self, i, j):
        super().__init__()
        self._edge = (i, j)

    def __str__(self):
        return 'edge {} declared twice'.format(self._edge)


class GraphDisconnected(GraphError):

    def __str__(self):
        return 'communication graph is not connected'


class NonPositiveKappa(GraphError):

    def __init__(self, kappa):
        super().__init__()
        self.kappa = kappa

    def __str__(self):
        return 'kappa must be positive, got {}'.format(self.kappa)


class KappaTooSmall(GraphError):

    def __init__(self, kappa, rho):
        super().__init__()
        self.kappa = kappa
        self.rho = rho

    def __str__(self):
        return 'kappa={} gives a mixing factor {:.6g} >= 1'.format(
            self.kappa, self.rho
        )


class Graph(object):

    """
    Undirected weighted communication graph between N agents. Agents are
    identified by 1-based integers. The adjacency matrix is frozen once the
    graph is built, so a graph can be shared read-only between agent workers.
    """

    __slots__ = ('_adjacency', '_edges')

    def __init__(self, agent_count):
        if agent_count < 1:
            raise ValueError('a graph needs at least one agent')
        self._adjacency = np.zeros((agent_count, agent_count))
        self._edges = []

    @property
    def agent_count(self):
        return self._adjacency.shape[0]

    @property
    def adjacency(self):
        return self._adjacency

    def _check(self, i):
        if not 1 <= i <= self.agent_count:
            raise IndexOutOfRange('agent id', i, self.agent_count)

    def add_edge(self, i, j, weight=1.0):
        """
        Add an undirected edge between agents `i` and `j`.
        """
        if not self._adjacency.flags.writeable:
            raise ValueError('graph is frozen')
        self._check(i)
        self._check(j)
        if i == j:
            raise SelfLoop(i)
        if weight <= 0:
            raise ValueError('edge weight must be positive, got {}'.format(
                weight
            ))
        if self._adjacency[i - 1, j - 1] != 0:
            raise DuplicateEdge(i, j)
        self._adjacency[i - 1, j - 1] = weight
        self._adjacency[j - 1, i - 1] = weight
        self._edges.append((min(i, j), max(i, j), float(weight)))

    def freeze(self):
        self._adjacency.flags.writeable = False
        return self

    @classmethod
    def from_dict(cls, agent_count, graph):
        """
        Build a new graph from the given dict.
        The dictionary takes the form of:
            {"edges": [[1, 2], [2, 3, 0.5]]}
        Edge weights default to 1.0.
        """
        edges = graph.get('edges', [])
        if not isinstance(edges, list):
            raise TypeError("'edges' must be a list")
        parsed = []
        for edge in edges:
            if len(edge) not in (2, 3):
                raise TypeError('edge {} is not [i, j] or [i, j, w]'.format(
                    edge
                ))
            weight = edge[2] if len(edge) == 3 else 1.0
            parsed.append((int(edge[0]), int(edge[1]), float(weight)))
        return build_graph(agent_count, parsed)

    def as_dict(self):
        return {'edges': [[i, j, w] for i, j, w in self._edges]}

    def edges(self):
        """
        Returns the list of all edges as (i, j, weight) tuples with i < j.
        """
        return list(self._edges)

    def neighbors(self, i):
        """
        Returns the set of agents communicating with agent `i`.
        """
        self._check(i)
        return {
            int(j) + 1 for j in np.flatnonzero(self._adjacency[i - 1] > 0)
        }

    def degrees(self):
        return self._adjacency.sum(axis=1)

    def laplacian(self):
        """
        Returns L = D - A.
        """
        return np.diag(self.degrees()) - self._adjacency

    def eigenvalues(self):
        """
        Laplacian spectrum in ascending order.
        """
        return np.linalg.eigvalsh(self.laplacian())

    def is_connected(self):
        return nx.is_connected(nx.from_numpy_array(self._adjacency))

    def contraction_matrix(self, kappa):
        """
        Returns G - Y = I - L/kappa - (1/N)11', the per-round map of the
        deviations from the network average.
        """
        n = self.agent_count
        return np.eye(n) - self.laplacian() / kappa - np.full((n, n), 1.0 / n)

    def __str__(self):
        return '<Graph agents={}, edges={}>'.format(
            self.agent_count, len(self._edges)
        )


def build_graph(agent_count, edges):
    """
    Build a frozen graph from a list of (i, j, weight) tuples.
    """
    graph = Graph(agent_count)
    for edge in edges:
        graph.add_edge(*edge)
    log.debug('built %s', graph)
    return graph.freeze()


def laplacian(graph):
    return graph.laplacian()


def neighbors(graph, i):
    return graph.neighbors(i)


def mixing_factor(graph, kappa):
    """
    Spectral radius of I - L/kappa off the consensus direction: the largest
    |1 - lambda/kappa| over the nonzero Laplacian eigenvalues. The zero mode
    is removed by the deflation with (1/N)11', which needs a connected graph
    (a single zero eigenvalue).
    """
    if kappa <= 0:
        raise NonPositiveKappa(kappa)
    if not graph.is_connected():
        raise GraphDisconnected()
    eigvals = graph.eigenvalues()
    # The first eigenvalue is the consensus mode
    nonzero = eigvals[1:]
    if nonzero.size == 0:
        return 0.0
    return float(np.max(np.abs(1.0 - nonzero / kappa)))


def validate_kappa(graph, kappa, tol=TOL_SPECTRAL):
    """
    Check that the consensus mixing is a contraction (Schur-stable G - Y).
    Returns the mixing factor.
    """
    rho = mixing_factor(graph, kappa)
    if rho >= 1.0 - tol:
        raise KappaTooSmall(kappa, rho)
    log.debug('kappa=%s gives mixing factor %.6g', kappa, rho)
    return rho
