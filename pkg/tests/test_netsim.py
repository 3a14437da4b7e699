import csv
import os
import tempfile
from unittest import TestCase

import numpy as np

from hjbnet.errors import IndexOutOfRange, InformationStructureViolation
from hjbnet.graph import build_graph
from hjbnet.netsim import (
    AccessLog, DoublePost, Payload, RoundBus, RoundIncomplete,
)


UGV_EDGES = [(1, 2, 1.0), (2, 3, 1.0), (2, 5, 1.0), (4, 5, 1.0)]


def post_all(bus, value=0.0, size=3):
    for i in range(1, bus.graph.agent_count + 1):
        bus.post(i, {'x': np.full(size, value + i)})


class TestPayload(TestCase):

    def test_frozen_copy(self):
        source = np.zeros(4)
        payload = Payload({'x': source}, 2, 0)
        source[0] = 1.0
        self.assertEqual(payload['x'][0], 0.0)
        with self.assertRaises(ValueError):
            payload['x'][0] = 5.0
        self.assertEqual(payload.nbytes, 32)
        self.assertEqual(payload.as_dict(), {
            'owner': 2, 'round': 0, 'fields': {'x': (4,)}, 'nbytes': 32,
        })
        with self.assertRaises(ValueError):
            Payload([1.0], 1)


class TestRoundBus(TestCase):

    def setUp(self):
        self.bus = RoundBus(build_graph(5, UGV_EDGES))

    def test_post_and_collect(self):
        post_all(self.bus)
        self.assertEqual(self.bus.advance(), 1)
        mailbox = self.bus.collect(2)
        self.assertEqual(list(mailbox), [1, 3, 5])
        for j, payload in mailbox.items():
            self.assertEqual(payload.owner, j)
            self.assertEqual(payload.round_index, 0)
            self.assertEqual(payload['x'][0], float(j))
        self.assertEqual(self.bus.collect(1), {2: self.bus.read(1, 2)})
        # Own payload
        self.assertEqual(self.bus.read(4, 4)['x'][0], 4.0)

    def test_payload_visible_next_round(self):
        post_all(self.bus)
        with self.assertRaises(RoundIncomplete):
            self.bus.read(1, 2)
        self.bus.advance()
        post_all(self.bus, value=10.0)
        # Still the previous round's mailbox until the next advance
        self.assertEqual(self.bus.read(1, 2)['x'][0], 2.0)
        self.bus.advance()
        self.assertEqual(self.bus.read(1, 2)['x'][0], 12.0)
        self.assertEqual(self.bus.round_index, 2)

    def test_double_post(self):
        self.bus.post(1, {'x': [0.0]})
        with self.assertRaises(DoublePost) as ctx:
            self.bus.post(1, {'x': [1.0]})
        self.assertEqual((ctx.exception.agent, ctx.exception.round_index),
                         (1, 0))

    def test_out_of_range(self):
        with self.assertRaises(IndexOutOfRange):
            self.bus.post(6, {'x': [0.0]})
        with self.assertRaises(IndexOutOfRange):
            self.bus.post(0, {'x': [0.0]})

    def test_incomplete_round(self):
        self.bus.post(1, {'x': [0.0]})
        self.bus.post(3, {'x': [0.0]})
        with self.assertRaises(RoundIncomplete) as ctx:
            self.bus.advance()
        self.assertEqual(ctx.exception.missing, [2, 4, 5])

    def test_violation(self):
        post_all(self.bus)
        self.bus.advance()
        with self.assertRaises(InformationStructureViolation) as ctx:
            self.bus.read(1, 3)
        self.assertEqual((ctx.exception.reader, ctx.exception.owner,
                          ctx.exception.round_index), (1, 3, 1))
        self.assertEqual(len(self.bus.access_log), 0)

    def test_round_bytes(self):
        post_all(self.bus, size=3)
        self.bus.advance()
        post_all(self.bus, size=10)
        self.bus.advance()
        self.assertEqual(self.bus.round_bytes, [5 * 3 * 8, 5 * 10 * 8])


class TestAccessLog(TestCase):

    def test_records(self):
        graph = build_graph(3, [(1, 2, 1.0), (2, 3, 1.0)])
        access_log = AccessLog()
        access_log.record(1, 3, 2)
        access_log.record(0, 2, 1)
        access_log.record(1, 1, 3)
        self.assertEqual(access_log.records,
                         [(0, 2, 1), (1, 1, 3), (1, 3, 2)])
        self.assertEqual(access_log.violations(graph), [(1, 1, 3)])

    def test_bus_log(self):
        bus = RoundBus(build_graph(5, UGV_EDGES))
        post_all(bus)
        bus.advance()
        for i in range(5, 0, -1):
            bus.collect(i)
        records = bus.access_log.records
        self.assertEqual(len(records), 8)
        self.assertEqual(records[0], (1, 1, 2))
        self.assertEqual(bus.access_log.violations(bus.graph), [])

    def test_to_csv(self):
        access_log = AccessLog()
        access_log.record(2, 1, 2)
        access_log.record(1, 2, 1)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'access_log.csv')
            access_log.to_csv(path)
            with open(path, newline='') as fp:
                rows = list(csv.reader(fp))
        self.assertEqual(rows, [['round', 'reader', 'owner'],
                                ['1', '2', '1'], ['2', '1', '2']])
