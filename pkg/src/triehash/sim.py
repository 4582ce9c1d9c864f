"""Deterministic message transport, server pool, and run statistics.

All actors (servers and clients) live in one process and exchange encoded
messages through a logical-time event queue: each hop costs one tick, ties
break in send order, so per-destination FIFO holds and a fixed seed plus a
fixed workload reproduces a run bit for bit.  Client think time between
operations is seed-driven (round-robin with random skips); a lockstep mode
issues the workload strictly one operation at a time for scripted scenarios.
"""

from __future__ import annotations

import heapq
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .client import Client, OpResult
from .keyspace import BOTTOM, TOP, Cmp, KeySpace, bound_order
from .server import ServerNode
from .wire import INSERT, Reply, Request, decode_message, encode_message


class SimulationError(Exception):
    """Fatal protocol failure (a bug, not a workload condition)."""


class AllocationError(SimulationError):
    """The server pool cap was exceeded."""


@dataclass
class SimConfig:
    bucket_capacity: int = 4
    clients: int = 1
    seed: int = 0
    server_cap: Optional[int] = None
    workload: Optional[str] = None  # path to an explicit ops file
    n_keys: int = 1000
    key_len_min: int = 4
    key_len_max: int = 12
    distribution: str = "random"  # random | ascending | script
    # engine knobs, not part of the config-file surface
    iam_minimal: bool = False
    lockstep: Optional[bool] = None  # None: lockstep iff distribution == script
    check_invariants: bool = False

    def effective_lockstep(self) -> bool:
        if self.lockstep is None:
            return self.distribution == "script"
        return self.lockstep


_CONFIG_KEYS = {
    "bucket_capacity": int,
    "clients": int,
    "seed": int,
    "server_cap": int,
    "workload": str,
    "n_keys": int,
    "key_len_min": int,
    "key_len_max": int,
    "distribution": str,
}


def parse_config(text: str) -> SimConfig:
    """Parse ``key=value`` configuration text (# starts a comment)."""
    cfg = SimConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown configuration key {key!r}")
        if value == "":
            continue
        setattr(cfg, key, _CONFIG_KEYS[key](value))
    if cfg.distribution not in ("random", "ascending", "script"):
        raise ValueError(f"unknown distribution {cfg.distribution!r}")
    if cfg.key_len_min < 1 or cfg.key_len_max < cfg.key_len_min:
        raise ValueError("key length range is empty")
    return cfg


def render_config(cfg: SimConfig) -> str:
    """Canonical config text; byte-stable for identical configurations."""
    lines = []
    for key in sorted(_CONFIG_KEYS):
        value = getattr(cfg, key)
        lines.append(f"{key}={'' if value is None else value}")
    return "\n".join(lines) + "\n"


class Coordinator:
    """Sequential server id allocation over a conceptually infinite pool."""

    def __init__(self, cap: Optional[int] = None):
        self.next_id = 1  # server 0 pre-exists
        self.cap = cap
        self.depth = {0: 0}
        self.parent = {}
        self.max_depth = 0

    def allocate_server(self, splitter: int) -> int:
        if self.cap is not None and self.next_id >= self.cap:
            raise AllocationError(
                f"server pool cap {self.cap} exhausted (split of {splitter})"
            )
        new_id = self.next_id
        self.next_id += 1
        self.parent[new_id] = splitter
        d = self.depth[splitter] + 1
        self.depth[new_id] = d
        if d > self.max_depth:
            self.max_depth = d
        return new_id


class MetricsRow(NamedTuple):
    tick: int
    keys: int
    servers: int
    splits: int
    messages: int
    forwards: int
    iams: int
    loadfactor: float


STATS_HEADER = "tick,keys,servers,splits,messages,forwards,iams,loadfactor"
DUMP_HEADER = "id,lower,upper,keycount,trie"


@dataclass
class SimStats:
    messages_total: int = 0
    delivered: int = 0
    forwards: int = 0
    iams: int = 0
    splits: int = 0
    ops: int = 0
    client_requests: int = 0
    inserts_completed: int = 0
    per_op_hops: Counter = field(default_factory=Counter)
    samples: list = field(default_factory=list)


class _ServerCtx:
    """Effect surface handed to a server while it processes one message."""

    __slots__ = ("sim",)

    def __init__(self, sim):
        self.sim = sim

    def forward(self, target: int, req: Request) -> None:
        self.sim.stats.forwards += 1
        self.sim._send("server", target, req)

    def reply(self, client_id: int, rep: Reply) -> None:
        if rep.iam is not None:
            self.sim.stats.iams += 1
        self.sim._send("client", client_id, rep)

    def allocate_server(self, splitter: int) -> int:
        new_id = self.sim.coordinator.allocate_server(splitter)
        self.sim.stats.splits += 1
        return new_id

    def register_server(self, node: ServerNode) -> None:
        self.sim.servers[node.id] = node


class _ClientCtx:
    __slots__ = ("sim",)

    def __init__(self, sim):
        self.sim = sim

    def send_request(self, target: int, req: Request) -> None:
        self.sim.stats.client_requests += 1
        self.sim._send("server", target, req)


class Simulation:
    """One seeded run: actors, transport, workload scheduling, sampling.

    ``workload`` is a list of (client_id, op, key, kmax) tuples with textual
    keys; client ids must fall in range(cfg.clients).
    """

    def __init__(
        self,
        cfg: SimConfig,
        workload: list,
        ks: Optional[KeySpace] = None,
        sample_every: Optional[int] = None,
    ):
        self.cfg = cfg
        self.ks = ks or KeySpace()
        self.coordinator = Coordinator(cfg.server_cap)
        self.stats = SimStats()
        self.servers = {
            0: ServerNode.initial(cfg.bucket_capacity, self.ks, cfg.iam_minimal)
        }
        self.clients = {
            i: Client(i, self.ks) for i in range(cfg.clients)
        }
        self.rng = random.Random(f"{cfg.seed}:transport")
        self.now = 0
        self._seq = 0
        self._heap = []
        self._server_ctx = _ServerCtx(self)
        self._client_ctx = _ClientCtx(self)
        self.sample_every = sample_every
        self.lockstep = cfg.effective_lockstep()
        self._script = []
        self._queues = {i: [] for i in self.clients}
        self._script_pos = 0
        for client_id, op, key, kmax in workload:
            if client_id not in self.clients:
                raise SimulationError(f"workload names unknown client {client_id}")
            entry = (
                op,
                self.ks.encode_key(key),
                self.ks.encode_key(kmax) if kmax else b"",
            )
            self._script.append((client_id, entry))
            self._queues[client_id].append(entry)
        self._queue_pos = {i: 0 for i in self.clients}

    # ------------------------------------------------------------------
    # transport

    def _send(self, kind: str, ident: int, msg) -> None:
        if kind == "server" and ident not in self.servers:
            raise SimulationError(f"message to unallocated server {ident}")
        if kind == "client" and ident not in self.clients:
            raise SimulationError(f"message to unknown client {ident}")
        self.stats.messages_total += 1
        self._seq += 1
        heapq.heappush(
            self._heap, (self.now + 1, self._seq, kind, ident, encode_message(msg))
        )

    def _schedule_issue(self, client_id: int, delay: int) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (self.now + delay, self._seq, "issue", client_id, b""))

    # ------------------------------------------------------------------
    # scheduling

    def _start(self) -> None:
        if self.lockstep:
            if self._script:
                self._schedule_issue(self._script[0][0], 1)
        else:
            for client_id in self.clients:
                if self._queues[client_id]:
                    self._schedule_issue(client_id, 1 + self.rng.randrange(3))

    def _issue(self, client_id: int) -> None:
        if self.lockstep:
            client_id, entry = self._script[self._script_pos]
        else:
            pos = self._queue_pos[client_id]
            entry = self._queues[client_id][pos]
            self._queue_pos[client_id] = pos + 1
        op, key, kmax = entry
        self.clients[client_id].start_op(op, key, kmax, self._client_ctx)

    def _op_completed(self, client_id: int, result: OpResult) -> None:
        st = self.stats
        st.ops += 1
        st.per_op_hops[result.hops] += 1
        if result.op == INSERT:
            st.inserts_completed += 1
            if self.sample_every and st.inserts_completed % self.sample_every == 0:
                self._sample()
        if self.lockstep:
            self._script_pos += 1
            if self._script_pos < len(self._script):
                self._schedule_issue(self._script[self._script_pos][0], 1)
        else:
            if self._queue_pos[client_id] < len(self._queues[client_id]):
                self._schedule_issue(client_id, 1 + self.rng.randrange(3))

    def _sample(self) -> None:
        keys = sum(len(s.keys) for s in self.servers.values())
        servers = len(self.servers)
        st = self.stats
        st.samples.append(
            MetricsRow(
                self.now,
                keys,
                servers,
                st.splits,
                st.messages_total,
                st.forwards,
                st.iams,
                keys / (servers * self.cfg.bucket_capacity),
            )
        )

    # ------------------------------------------------------------------
    # event loop

    def run(self) -> SimStats:
        self._start()
        self._loop()
        if self.stats.delivered != self.stats.messages_total:
            raise SimulationError(
                f"conservation violated: sent {self.stats.messages_total}, "
                f"delivered {self.stats.delivered}"
            )
        expected = 2 * self.stats.client_requests + self.stats.forwards
        if self.stats.messages_total != expected:
            raise SimulationError(
                f"accounting violated: {self.stats.messages_total} messages, "
                f"expected {expected}"
            )
        return self.stats

    def _loop(self) -> None:
        heap = self._heap
        splits_seen = self.stats.splits
        while heap:
            tick, _, kind, ident, data = heapq.heappop(heap)
            self.now = tick
            if kind == "issue":
                self._issue(ident)
                continue
            self.stats.delivered += 1
            if kind == "server":
                msg = decode_message(data)
                self.servers[ident].handle_request(msg, self._server_ctx)
            else:
                rep = decode_message(data)
                if rep.hops > self.stats.splits or rep.hops > self.coordinator.max_depth:
                    raise SimulationError(
                        f"forward progress violated: {rep.hops} hops with "
                        f"{self.stats.splits} splits, depth {self.coordinator.max_depth}"
                    )
                result = self.clients[ident].on_reply(rep, self._client_ctx)
                if result is not None:
                    self._op_completed(ident, result)
            if self.cfg.check_invariants:
                self._check_actor(kind, ident)
                if self.stats.splits != splits_seen:
                    splits_seen = self.stats.splits
                    problems = self.check_cover()
                    if problems:
                        raise SimulationError("; ".join(problems))

    def _check_actor(self, kind: str, ident: int) -> None:
        if kind == "server":
            problems = self.servers[ident].check_invariants()
        else:
            problems = self.clients[ident].image.validate(self.ks.max_key_len + 1)
        if problems:
            raise SimulationError(f"{kind} {ident}: " + "; ".join(problems))

    # ------------------------------------------------------------------
    # post-run drivers (verification, extra queries)

    def add_client(self) -> int:
        client_id = max(self.clients) + 1 if self.clients else 0
        self.clients[client_id] = Client(client_id, self.ks)
        self._queues[client_id] = []
        self._queue_pos[client_id] = 0
        return client_id

    def run_ops(self, client_id: int, ops: list) -> list:
        """Drive extra operations after the main run; returns their results.

        ``ops`` holds (op, key, kmax) with textual keys.  The transport and
        statistics keep accumulating, so determinism is preserved.
        """
        client = self.clients[client_id]
        before = len(client.results)
        for op, key, kmax in ops:
            client.start_op(
                op,
                self.ks.encode_key(key),
                self.ks.encode_key(kmax) if kmax else b"",
                self._client_ctx,
            )
            self._loop()
        return client.results[before:]

    # ------------------------------------------------------------------
    # inspection and dumps

    def total_keys(self) -> int:
        return sum(len(s.keys) for s in self.servers.values())

    def trace_route(self, start: int, key: bytes) -> tuple:
        """Follow forwarding from ``start`` without messages: (owner, hops)."""
        current = start
        hops = 0
        while not self.servers[current].owns(key):
            nxt = self.servers[current].trie.search(key).target
            if nxt == current:
                raise SimulationError(f"server {current} forwards {key!r} to itself")
            current = nxt
            hops += 1
            if hops > len(self.servers):
                raise SimulationError("forwarding loop")
        return current, hops

    def check_cover(self) -> list:
        """Interval disjoint-cover violations over all servers."""
        problems = []
        ordered = sorted(self.servers.values(), key=_lower_bound_key)
        if ordered[0].interval.lower is not BOTTOM:
            problems.append("lowest interval does not start at BOTTOM")
        prev = ordered[0]
        for node in ordered[1:]:
            if bound_order(prev.interval.upper, node.interval.lower) is not Cmp.EQ:
                problems.append(
                    f"gap or overlap between server {prev.id} and server {node.id}"
                )
            prev = node
        if prev.interval.upper != TOP:
            problems.append("highest interval does not end at TOP")
        return problems

    def stats_csv(self) -> str:
        lines = [STATS_HEADER]
        for row in self.stats.samples:
            lines.append(
                f"{row.tick},{row.keys},{row.servers},{row.splits},"
                f"{row.messages},{row.forwards},{row.iams},{row.loadfactor:.6f}"
            )
        return "\n".join(lines) + "\n"

    def state_dump(self) -> str:
        import csv
        import io

        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(DUMP_HEADER.split(","))
        for server_id in sorted(self.servers):
            writer.writerow(self.servers[server_id].dump_row())
        return out.getvalue()


class _LowerBoundKey:
    """Sort key wrapping a server's lower bound under max-padding order."""

    __slots__ = ("bound",)

    def __init__(self, bound):
        self.bound = bound

    def __lt__(self, other):
        return bound_order(self.bound, other.bound) is Cmp.LT


def _lower_bound_key(node: ServerNode) -> _LowerBoundKey:
    return _LowerBoundKey(node.interval.lower)
