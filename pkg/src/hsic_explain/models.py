"""Black-box prediction interfaces.

A model maps a graph (or series) to a class-probability vector.  Built-in
oracles give exact stand-ins for trained classifiers on the synthetic
benchmark families; external models speak a line-delimited JSON protocol
over a subprocess pipe or a TCP socket.

Wire protocol, one JSON object per line:

    -> {"type": "hello", "protocol": 1}
    <- {"type": "ready", "n_classes": K, "accepts": "graph" | "series"}
    -> {"type": "predict", "id": i, "input": {...}}
    <- {"type": "prediction", "id": i, "probs": [...]}
    <- {"type": "error", "id": i, "message": "..."}

Responses may arrive out of order; the client matches them by id.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import socket
import subprocess
import threading
from typing import Iterable, Sequence

import numpy as np

from .graphs import Graph, GraphSeries, canonical_json

SIMPLEX_TOL = 1e-6
PROTOCOL_VERSION = 1


class ModelError(RuntimeError):
    """The model produced an unusable answer."""


class ProtocolError(ModelError):
    """The wire conversation itself broke down."""


def _validate_probs(raw, n_classes: int) -> np.ndarray:
    probs = np.asarray(raw, dtype=np.float64)
    if probs.ndim != 1 or probs.shape[0] != n_classes:
        raise ModelError(f"expected {n_classes} probabilities, got shape {probs.shape}")
    if not np.all(np.isfinite(probs)):
        raise ModelError("non-finite probability")
    if np.any(probs < -SIMPLEX_TOL) or abs(probs.sum() - 1.0) > SIMPLEX_TOL:
        raise ModelError(f"non-simplex response {probs.tolist()}")
    probs = np.clip(probs, 0.0, None)
    probs.setflags(write=False)
    return probs


class BlackBoxModel:
    """Deterministic classifier over graphs or series, with a response cache.

    Subclasses implement `_evaluate`.  The cache is keyed by the canonical
    serialization of the input, so structurally equal inputs hit the model
    once.
    """

    def __init__(self, n_classes: int, accepts: str):
        if accepts not in ("graph", "series"):
            raise ValueError("accepts must be 'graph' or 'series'")
        self.n_classes = n_classes
        self.accepts = accepts
        self._cache: dict[str, np.ndarray] = {}
        self._cache_lock = threading.Lock()

    def _check_kind(self, target):
        if self.accepts == "graph" and not isinstance(target, Graph):
            raise ModelError("model accepts single graphs, got a series")
        if self.accepts == "series" and not isinstance(target, GraphSeries):
            raise ModelError("model accepts graph series, got a single graph")

    def predict(self, target: Graph | GraphSeries) -> np.ndarray:
        self._check_kind(target)
        key = canonical_json(target)
        with self._cache_lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        probs = _validate_probs(self._evaluate(target), self.n_classes)
        with self._cache_lock:
            self._cache[key] = probs
        return probs

    def predict_many(
        self, targets: Sequence[Graph | GraphSeries], jobs: int = 1
    ) -> list[np.ndarray]:
        if jobs > 1 and len(targets) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=jobs) as pool:
                return list(pool.map(self.predict, targets))
        return [self.predict(t) for t in targets]

    def _evaluate(self, target) -> np.ndarray:
        raise NotImplementedError

    def close(self):
        pass


class _PredicateModel(BlackBoxModel):
    """Binary model from a boolean predicate, with probability smoothing.

    Class 1 is the positive class: a positive instance gets
    [eps, 1 - eps].
    """

    def __init__(self, predicate, smoothing: float, accepts: str):
        if not (0.0 < smoothing < 0.5):
            raise ValueError("smoothing must lie in (0, 0.5)")
        super().__init__(n_classes=2, accepts=accepts)
        self._predicate = predicate
        self.smoothing = smoothing

    def _evaluate(self, target):
        eps = self.smoothing
        return np.array([eps, 1.0 - eps]) if self._predicate(target) else np.array([1.0 - eps, eps])


def _has_hub(g: Graph) -> bool:
    # A hub must dominate its whole neighborhood cluster, so measure
    # components after deleting cut edges; a hub joined to something else
    # by a bridge still counts.
    cuts = g.cut_edges()
    if cuts:
        stripped = Graph(
            g.num_nodes, tuple(e for e in g.edges if e not in cuts), g.features
        )
    else:
        stripped = g
    for comp in stripped.connected_components():
        if len(comp) < 4:
            continue
        want = len(comp) - 1
        if any(stripped.degree(v) == want for v in comp):
            return True
    return False


def oracle_hub(smoothing: float = 0.05) -> BlackBoxModel:
    """Positive iff some node is adjacent to every other node of its
    bridge-free component (component size >= 4)."""
    return _PredicateModel(_has_hub, smoothing, "graph")


def _has_bridge(g: Graph) -> bool:
    return g.is_connected() and len(g.cut_edges()) > 0


def oracle_bridge(smoothing: float = 0.05) -> BlackBoxModel:
    """Positive iff the graph is connected and contains a cut edge."""
    return _PredicateModel(_has_bridge, smoothing, "graph")


def oracle_pattern(target_count: int = 4, smoothing: float = 0.05) -> BlackBoxModel:
    """Positive iff at least target_count nodes carry a first feature > 0.5."""
    if target_count < 1:
        raise ValueError("target_count must be >= 1")

    def pred(g: Graph) -> bool:
        if g.num_features == 0:
            return False
        return int(np.sum(g.features[:, 0] > 0.5)) >= target_count

    return _PredicateModel(pred, smoothing, "graph")


def _has_active_chunk(s: GraphSeries) -> bool:
    for g in s.snapshots:
        if g.num_features == 0:
            continue
        active = set(np.nonzero(g.features[:, 0] > 0.5)[0].tolist())
        if len(active) < 3:
            continue
        # largest component of the subgraph induced on active nodes
        seen: set[int] = set()
        for start in active:
            if start in seen:
                continue
            stack, size = [start], 0
            seen.add(start)
            while stack:
                v = stack.pop()
                size += 1
                for w in g.adjacency[v]:
                    if w in active and w not in seen:
                        seen.add(w)
                        stack.append(w)
            if size >= 3:
                return True
    return False


def oracle_series_chunk(smoothing: float = 0.05) -> BlackBoxModel:
    """Positive iff some snapshot holds a connected set of >= 3 nodes whose
    first features all exceed 0.5."""
    return _PredicateModel(_has_active_chunk, smoothing, "series")


BUILTIN_ORACLES = {
    "hub": oracle_hub,
    "bridge": oracle_bridge,
    "pattern": oracle_pattern,
    "series-chunk": oracle_series_chunk,
}


# ---------------------------------------------------------------------------
# Wire protocol client


class _LineChannel:
    """Length-unbounded line reader with a timeout, over a file descriptor."""

    def __init__(self, fd: int, timeout: float):
        self._fd = fd
        self._timeout = timeout
        self._buf = b""

    def read_line(self) -> str:
        while b"\n" not in self._buf:
            ready, _, _ = select.select([self._fd], [], [], self._timeout)
            if not ready:
                raise ProtocolError(f"timed out after {self._timeout}s waiting for a response")
            chunk = os.read(self._fd, 65536)
            if not chunk:
                raise ProtocolError("connection closed by the model endpoint")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode("utf-8")


class StdioTransport:
    """Spawns the model server as a subprocess and talks over its pipes."""

    def __init__(self, command: str, timeout: float = 30.0):
        argv = shlex.split(command)
        if not argv:
            raise ProtocolError("empty model command")
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as exc:
            raise ProtocolError(f"cannot start model process: {exc}") from exc
        self._chan = _LineChannel(self._proc.stdout.fileno(), timeout)

    def send_line(self, line: str):
        try:
            self._proc.stdin.write(line.encode("utf-8") + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"model process closed its pipe: {exc}") from exc

    def read_line(self) -> str:
        return self._chan.read_line()

    def close(self):
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        for pipe in (self._proc.stdin, self._proc.stdout):
            if pipe:
                pipe.close()


class TcpTransport:
    def __init__(self, host: str, port: int, timeout: float = 30.0):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ProtocolError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._chan = _LineChannel(self._sock.fileno(), timeout)

    def send_line(self, line: str):
        try:
            self._sock.sendall(line.encode("utf-8") + b"\n")
        except OSError as exc:
            raise ProtocolError(f"socket write failed: {exc}") from exc

    def read_line(self) -> str:
        return self._chan.read_line()

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


class ExternalModel(BlackBoxModel):
    """Client for a model server speaking the JSON-lines protocol.

    Requests carry monotonically increasing ids; responses are matched by
    id, so a server may answer out of order.  `predict_many` pipelines all
    uncached requests before collecting.
    """

    def __init__(
        self,
        transport,
        accepts: str | None = None,
        n_classes: int | None = None,
    ):
        self._transport = transport
        self._lock = threading.Lock()
        self._next_id = 0
        self._stash: dict[int, dict] = {}
        ready = self._handshake()
        srv_classes, srv_accepts = ready["n_classes"], ready["accepts"]
        if n_classes is not None and srv_classes != n_classes:
            raise ProtocolError(
                f"n_classes mismatch at handshake: server {srv_classes}, expected {n_classes}"
            )
        if accepts is not None and srv_accepts != accepts:
            raise ProtocolError(
                f"accepts mismatch at handshake: server {srv_accepts!r}, expected {accepts!r}"
            )
        super().__init__(n_classes=srv_classes, accepts=srv_accepts)

    def _handshake(self) -> dict:
        self._transport.send_line(
            json.dumps({"type": "hello", "protocol": PROTOCOL_VERSION})
        )
        msg = self._read_message()
        if msg.get("type") != "ready":
            raise ProtocolError(f"expected ready, got {msg.get('type')!r}")
        n = msg.get("n_classes")
        accepts = msg.get("accepts")
        if not isinstance(n, int) or n < 2:
            raise ProtocolError(f"bad n_classes in ready: {n!r}")
        if accepts not in ("graph", "series"):
            raise ProtocolError(f"bad accepts in ready: {accepts!r}")
        return msg

    def _read_message(self) -> dict:
        line = self._transport.read_line()
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"unparseable response line: {line[:200]!r}") from exc
        if not isinstance(msg, dict):
            raise ProtocolError("response is not a JSON object")
        return msg

    def _collect(self, want_id: int) -> dict:
        while True:
            if want_id in self._stash:
                return self._stash.pop(want_id)
            msg = self._read_message()
            mid = msg.get("id")
            if msg.get("type") == "error":
                if mid == want_id or mid is None:
                    raise ModelError(f"model error: {msg.get('message')}")
            if not isinstance(mid, int):
                raise ProtocolError(f"response without a usable id: {msg}")
            self._stash[mid] = msg

    def _finish(self, msg: dict) -> np.ndarray:
        if msg.get("type") == "error":
            raise ModelError(f"model error: {msg.get('message')}")
        if msg.get("type") != "prediction":
            raise ProtocolError(f"expected prediction, got {msg.get('type')!r}")
        return _validate_probs(msg.get("probs"), self.n_classes)

    def _evaluate(self, target) -> np.ndarray:
        from .graphs import to_obj

        with self._lock:
            rid = self._next_id
            self._next_id += 1
            self._transport.send_line(
                json.dumps({"type": "predict", "id": rid, "input": to_obj(target)})
            )
            return self._finish(self._collect(rid))

    def predict_many(
        self, targets: Sequence[Graph | GraphSeries], jobs: int = 1
    ) -> list[np.ndarray]:
        # requests are pipelined over one connection; jobs is irrelevant here
        from .graphs import to_obj

        keys = []
        for t in targets:
            self._check_kind(t)
            keys.append(canonical_json(t))
        out: list[np.ndarray | None] = [None] * len(targets)
        with self._lock:
            pending: dict[int, list[int]] = {}
            sent_key: dict[str, int] = {}
            for pos, (t, key) in enumerate(zip(targets, keys)):
                with self._cache_lock:
                    hit = self._cache.get(key)
                if hit is not None:
                    out[pos] = hit
                    continue
                if key in sent_key:
                    pending[sent_key[key]].append(pos)
                    continue
                rid = self._next_id
                self._next_id += 1
                sent_key[key] = rid
                pending[rid] = [pos]
                self._transport.send_line(
                    json.dumps({"type": "predict", "id": rid, "input": to_obj(t)})
                )
            for rid, positions in pending.items():
                probs = self._finish(self._collect(rid))
                with self._cache_lock:
                    self._cache[keys[positions[0]]] = probs
                for pos in positions:
                    out[pos] = probs
        return out  # type: ignore[return-value]

    def close(self):
        self._transport.close()


def external_model(
    endpoint: str,
    accepts: str | None = None,
    n_classes: int | None = None,
    timeout: float = 30.0,
) -> ExternalModel:
    """Connect to `exec:<command>` or `tcp:<host>:<port>`."""
    if endpoint.startswith("exec:"):
        return ExternalModel(
            StdioTransport(endpoint[len("exec:"):], timeout), accepts, n_classes
        )
    if endpoint.startswith("tcp:"):
        rest = endpoint[len("tcp:"):]
        host, sep, port = rest.rpartition(":")
        if not sep or not host:
            raise ProtocolError(f"malformed tcp endpoint {endpoint!r}")
        try:
            portno = int(port)
        except ValueError as exc:
            raise ProtocolError(f"malformed tcp port {port!r}") from exc
        return ExternalModel(TcpTransport(host, portno, timeout), accepts, n_classes)
    raise ProtocolError(f"unknown model endpoint {endpoint!r}")


def resolve_model(spec: str, smoothing: float = 0.05, timeout: float = 30.0) -> BlackBoxModel:
    """Model from a CLI spec: builtin:<name>, exec:<command>, tcp:<host:port>."""
    if spec.startswith("builtin:"):
        name = spec[len("builtin:"):]
        factory = BUILTIN_ORACLES.get(name)
        if factory is None:
            raise ValueError(
                f"unknown builtin model {name!r}; choices: {sorted(BUILTIN_ORACLES)}"
            )
        return factory(smoothing=smoothing)
    return external_model(spec, timeout=timeout)
