import os
import shlex
import sys
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsic_explain.graphs import Graph, GraphSeries
from hsic_explain.models import (
    ExternalModel,
    ModelError,
    ProtocolError,
    StdioTransport,
    external_model,
    oracle_bridge,
    oracle_hub,
    oracle_pattern,
    oracle_series_chunk,
    resolve_model,
)

from conftest import graphs

STUB = os.path.join(os.path.dirname(__file__), "stub_server.py")


def stub_cmd(mode, count_file=None):
    parts = [sys.executable, STUB, mode]
    if count_file:
        parts.append(str(count_file))
    return "exec:" + " ".join(shlex.quote(p) for p in parts)


def wheel(n):
    rim = [(i, (i + 1) % (n - 1)) for i in range(n - 1)]
    spokes = [(i, n - 1) for i in range(n - 1)]
    return Graph(n, tuple(rim + spokes))


def cycle(n):
    return Graph(n, tuple((i, (i + 1) % n) for i in range(n)))


class TestHubOracle:
    def test_wheel_positive(self):
        m = oracle_hub(0.05)
        assert m.predict(wheel(8)).tolist() == [0.05, 0.95]

    def test_cycle_negative(self):
        m = oracle_hub(0.05)
        assert m.predict(cycle(10)).tolist() == [0.95, 0.05]

    def test_wheel_minus_hub_negative(self):
        m = oracle_hub(0.05)
        g = cycle(9)  # wheel(10) with the hub removed
        assert m.predict(g)[1] == 0.05

    def test_hub_survives_bridge_join(self):
        # wheel(6) bridged to cycle(5): the wheel hub still counts
        w, c = wheel(6), cycle(5)
        edges = list(w.edges) + [(u + 6, v + 6) for u, v in c.edges] + [(0, 6)]
        g = Graph(11, tuple(edges))
        m = oracle_hub(0.05)
        assert m.predict(g)[1] == 0.95

    def test_two_cycles_bridged_negative(self):
        c = cycle(5)
        edges = list(c.edges) + [(u + 5, v + 5) for u, v in c.edges] + [(0, 5)]
        g = Graph(10, tuple(edges))
        assert oracle_hub(0.05).predict(g)[1] == 0.05

    def test_component_too_small(self):
        g = Graph(3, ((0, 1), (0, 2)))  # star on 3 nodes, component size 3
        assert oracle_hub(0.05).predict(g)[1] == 0.05

    def test_smoothing_range(self):
        with pytest.raises(ValueError):
            oracle_hub(0.0)
        with pytest.raises(ValueError):
            oracle_hub(0.5)


class TestBridgeOracle:
    def test_glasses_positive(self):
        edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]
        assert oracle_bridge(0.05).predict(Graph(6, tuple(edges)))[1] == 0.95

    def test_disconnected_cycles_negative(self):
        edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]
        assert oracle_bridge(0.05).predict(Graph(6, tuple(edges)))[1] == 0.05

    def test_single_cycle_negative(self):
        assert oracle_bridge(0.05).predict(cycle(7))[1] == 0.05


class TestPatternOracle:
    def test_counts_above_threshold(self):
        feats = np.zeros((6, 1))
        feats[[0, 2, 3, 5], 0] = 1.0
        g = Graph(6, (), feats)
        assert oracle_pattern(4, 0.05).predict(g)[1] == 0.95
        assert oracle_pattern(5, 0.05).predict(g)[1] == 0.05

    def test_threshold_is_half(self):
        feats = np.full((4, 1), 0.51)
        assert oracle_pattern(4, 0.05).predict(Graph(4, (), feats))[1] == 0.95
        feats = np.full((4, 1), 0.5)
        assert oracle_pattern(4, 0.05).predict(Graph(4, (), feats))[1] == 0.05

    def test_featureless_negative(self):
        assert oracle_pattern(1, 0.05).predict(cycle(4))[1] == 0.05


class TestSeriesChunkOracle:
    def make_series(self, active, n=6):
        base = Graph(n, tuple((i, i + 1) for i in range(n - 1)))
        snaps = []
        for t in range(3):
            feats = np.zeros((n, 1))
            for v in active.get(t, ()):
                feats[v, 0] = 1.0
            snaps.append(base.with_features(feats))
        return GraphSeries(tuple(snaps))

    def test_connected_chunk_positive(self):
        s = self.make_series({1: [2, 3, 4]})
        assert oracle_series_chunk(0.05).predict(s)[1] == 0.95

    def test_scattered_actives_negative(self):
        s = self.make_series({1: [0, 2, 4]})
        assert oracle_series_chunk(0.05).predict(s)[1] == 0.05

    def test_chunk_of_two_negative(self):
        s = self.make_series({0: [2, 3]})
        assert oracle_series_chunk(0.05).predict(s)[1] == 0.05

    def test_chunk_split_across_time_negative(self):
        s = self.make_series({0: [2, 3], 1: [4]})
        assert oracle_series_chunk(0.05).predict(s)[1] == 0.05


class TestModelBasics:
    def test_wrong_input_kind(self):
        with pytest.raises(ModelError):
            oracle_hub().predict(GraphSeries((cycle(4),)))
        with pytest.raises(ModelError):
            oracle_series_chunk().predict(cycle(4))

    @given(graphs(min_nodes=4, max_nodes=10))
    @settings(max_examples=40, deadline=None)
    def test_prediction_is_simplex_and_deterministic(self, g):
        m = oracle_hub(0.05)
        p1, p2 = m.predict(g), m.predict(g)
        assert np.array_equal(p1, p2)
        assert p1.shape == (2,)
        assert abs(p1.sum() - 1.0) < 1e-12
        assert np.all(p1 >= 0)

    def test_isomorphic_relabel_same_label(self):
        # hub detection only depends on structure, not on node numbering
        g = wheel(7)
        perm = [3, 0, 5, 1, 6, 2, 4]
        edges = tuple(sorted(tuple(sorted((perm[u], perm[v]))) for u, v in g.edges))
        h = Graph(7, edges)
        m = oracle_hub()
        assert np.array_equal(m.predict(g), m.predict(h))


class TestExternalClient:
    def test_handshake_and_predict(self):
        m = resolve_model(stub_cmd("constant"))
        try:
            assert m.n_classes == 2 and m.accepts == "graph"
            assert m.predict(cycle(4)).tolist() == [0.3, 0.7]
        finally:
            m.close()

    def test_cache_hits_endpoint_once(self, tmp_path):
        cf = tmp_path / "count"
        m = resolve_model(stub_cmd("constant", cf))
        try:
            g = cycle(5)
            m.predict(g)
            m.predict(Graph(5, tuple(reversed(g.edges))))  # same graph, new object
            assert cf.read_text() == "1"
        finally:
            m.close()

    def test_out_of_order_responses_matched(self):
        m = resolve_model(stub_cmd("reverse3"))
        try:
            targets = [cycle(3), cycle(4), cycle(5)]
            probs = m.predict_many(targets)
            # server answers reversed: last request gets probs [0.1, 0.9]
            assert probs[2].tolist() == [0.1, 0.9]
            assert probs[0] == pytest.approx([0.3, 0.7])
        finally:
            m.close()

    def test_non_simplex_rejected(self):
        m = resolve_model(stub_cmd("nonsimplex"))
        try:
            with pytest.raises(ModelError, match="non-simplex"):
                m.predict(cycle(4))
        finally:
            m.close()

    def test_error_response_raises(self):
        m = resolve_model(stub_cmd("error"))
        try:
            with pytest.raises(ModelError, match="boom"):
                m.predict(cycle(4))
        finally:
            m.close()

    def test_handshake_class_mismatch(self):
        with pytest.raises(ProtocolError, match="n_classes mismatch"):
            ExternalModel(
                StdioTransport(stub_cmd("ready3")[len("exec:"):]), n_classes=2
            )

    def test_series_endpoint(self):
        m = resolve_model(stub_cmd("series"))
        try:
            assert m.accepts == "series"
            s = GraphSeries((cycle(4), cycle(4), cycle(4)))
            assert m.predict(s).tolist() == [1.0, 0.0]
        finally:
            m.close()

    def test_dead_command_raises(self):
        with pytest.raises(ProtocolError):
            external_model("exec:/nonexistent-binary-xyz")

    def test_timeout(self):
        cmd = f"{shlex.quote(sys.executable)} -c 'import time; time.sleep(60)'"
        with pytest.raises(ProtocolError, match="timed out"):
            external_model("exec:" + cmd, timeout=0.3)

    def test_tcp_transport(self):
        import socket
        import socketserver

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                import json as j

                for raw in self.rfile:
                    msg = j.loads(raw)
                    if msg["type"] == "hello":
                        out = {"type": "ready", "n_classes": 2, "accepts": "graph"}
                    else:
                        out = {
                            "type": "prediction",
                            "id": msg["id"],
                            "probs": [0.25, 0.75],
                        }
                    self.wfile.write((j.dumps(out) + "\n").encode())
                    self.wfile.flush()

        srv = socketserver.TCPServer(("127.0.0.1", 0), Handler)
        port = srv.server_address[1]
        thread = threading.Thread(target=srv.serve_forever, daemon=True)
        thread.start()
        try:
            m = external_model(f"tcp:127.0.0.1:{port}")
            assert m.predict(cycle(4)).tolist() == [0.25, 0.75]
            m.close()
        finally:
            srv.shutdown()
            srv.server_close()
