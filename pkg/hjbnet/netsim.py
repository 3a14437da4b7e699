"""
Synchronous round-based message bus. It is the only channel between agents:
a payload posted in round s becomes readable in round s+1, and only by the
owner's neighbors.
"""
import csv
import logging
import threading

import numpy as np

from hjbnet.errors import (
    HjbnetError, IndexOutOfRange, InformationStructureViolation,
)


log = logging.getLogger(__name__)


class BusError(HjbnetError):
    pass


class DoublePost(BusError):

    def __init__(self, agent, round_index):
        super().__init__()
        self.agent = agent
        self.round_index = round_index

    def __str__(self):
        return 'agent {} already posted in round {}'.format(
            self.agent, self.round_index
        )


class RoundIncomplete(BusError):

    def __init__(self, round_index, missing):
        super().__init__()
        self.round_index = round_index
        self.missing = sorted(missing)

    def __str__(self):
        return 'round {} is incomplete, missing posts from {}'.format(
            self.round_index, self.missing
        )


class Payload:

    """
    The fields an agent shares with its neighbors for one round. Arrays are
    copied and frozen on creation.
    """

    __slots__ = ('_data', '_owner', '_round_index')

    def __init__(self, data, owner, round_index=None):
        if not isinstance(data, dict):
            raise ValueError('data must be a dict')
        frozen = {}
        for key, value in data.items():
            value = np.array(value, dtype=float)
            value.flags.writeable = False
            frozen[key] = value
        self._data = frozen
        self._owner = owner
        self._round_index = round_index

    @property
    def data(self):
        return self._data

    @property
    def owner(self):
        return self._owner

    @property
    def round_index(self):
        return self._round_index

    @property
    def nbytes(self):
        return sum(value.nbytes for value in self._data.values())

    def __getitem__(self, key):
        return self._data[key]

    def as_dict(self):
        return {
            'owner': self._owner,
            'round': self._round_index,
            'fields': {key: value.shape for key, value in self._data.items()},
            'nbytes': self.nbytes,
        }

    def __str__(self):
        return '<Payload owner={}, round={}, fields={}>'.format(
            self._owner, self._round_index, sorted(self._data)
        )


class AccessLog:

    """
    Ordered (round, reader, owner) records of every mailbox read.
    """

    __slots__ = ('_records', '_lock')

    FIELDS = ('round', 'reader', 'owner')

    def __init__(self):
        self._records = []
        self._lock = threading.Lock()

    def record(self, round_index, reader, owner):
        with self._lock:
            self._records.append((round_index, reader, owner))

    @property
    def records(self):
        """
        Records in a canonical order, independent of the order in which
        concurrent readers were scheduled.
        """
        with self._lock:
            return sorted(self._records)

    def violations(self, graph):
        """
        Replay the log against the graph and return the offending records.
        """
        return [
            (round_index, reader, owner)
            for round_index, reader, owner in self.records
            if owner != reader and owner not in graph.neighbors(reader)
        ]

    def to_csv(self, path):
        with open(path, 'w', newline='') as fp:
            writer = csv.writer(fp, lineterminator='\n')
            writer.writerow(self.FIELDS)
            writer.writerows(self.records)

    def __len__(self):
        return len(self._records)


class RoundBus:

    """
    In-process mailbox simulating a synchronous lossless network over a fixed
    graph. Posting is thread-safe; reading is only allowed from the mailbox
    frozen by the last `advance()`.
    """

    def __init__(self, graph, access_log=None):
        self._graph = graph
        self._round_index = 0
        self._pending = {}
        self._published = None
        self._lock = threading.Lock()
        self.access_log = access_log or AccessLog()
        self.round_bytes = []

    @property
    def graph(self):
        return self._graph

    @property
    def round_index(self):
        return self._round_index

    def _check(self, i):
        if not 1 <= i <= self._graph.agent_count:
            raise IndexOutOfRange('agent id', i, self._graph.agent_count)

    def post(self, i, payload):
        """
        Store the payload of agent `i` for the current round.
        """
        self._check(i)
        if not isinstance(payload, Payload):
            payload = Payload(payload, i, self._round_index)
        with self._lock:
            if i in self._pending:
                raise DoublePost(i, self._round_index)
            self._pending[i] = payload
        log.debug('agent %d posted %s', i, payload)

    def advance(self):
        """
        Close the current round: its mailbox becomes the read-only mailbox of
        the next round. Returns the new round index.
        """
        with self._lock:
            missing = set(range(1, self._graph.agent_count + 1))
            missing -= set(self._pending)
            if missing:
                raise RoundIncomplete(self._round_index, missing)
            self._published = self._pending
            self._pending = {}
            self.round_bytes.append(
                sum(p.nbytes for p in self._published.values())
            )
            self._round_index += 1
        log.debug('bus advanced to round %d', self._round_index)
        return self._round_index

    def read(self, reader, owner):
        """
        Returns the payload `owner` posted in the previous round, if `reader`
        is allowed to see it.
        """
        self._check(reader)
        self._check(owner)
        if owner != reader and owner not in self._graph.neighbors(reader):
            raise InformationStructureViolation(reader, owner,
                                                self._round_index)
        if self._published is None:
            raise RoundIncomplete(self._round_index - 1, [owner])
        self.access_log.record(self._round_index, reader, owner)
        return self._published[owner]

    def collect(self, i):
        """
        Returns {j: payload} for every neighbor j of agent `i`, in ascending
        id order.
        """
        return {j: self.read(i, j) for j in sorted(self._graph.neighbors(i))}

    def __str__(self):
        return '<RoundBus round={}, posted={}/{}>'.format(
            self._round_index, len(self._pending), self._graph.agent_count
        )
