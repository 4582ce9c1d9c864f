"""Workload generation, experiment driver, and oracle verification.

Experiments drive the simulator with a generated or scripted workload,
sample load-factor and message metrics on a fixed cadence, and emit the CSV
artifacts.  Verification replays an independent oracle against the final
state: a plain sorted key set for contents and exact ranges, padded
lexicographic comparison for interval membership, and a single-node twin of
the structure for routing equivalence.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .keyspace import BOTTOM, TOP, Interval, KeySpace
from .server import SPLIT_TRIGGERED, compute_split_string
from .sim import SimConfig, Simulation, render_config
from .trie import Leaf, Trie
from .wire import INSERT, NOT_FOUND, OK, RANGE, SEARCH

#: The 25-insert, 4-client scripted workload (client number, key).
SCRIPT_PAIRS = [
    (1, "js"), (1, "hw"), (3, "c"), (2, "gwmr"), (3, "g"),
    (2, "km"), (4, "zur"), (1, "ewg"), (3, "lewhv"), (2, "nrq"),
    (3, "mf"), (4, "pem"), (4, "rl"), (2, "bqyg"), (3, "v"),
    (1, "j"), (2, "qcm"), (4, "czxav"), (2, "lhgd"), (3, "z"),
    (1, "lrz"), (3, "kiyfg"), (4, "pbtpr"), (3, "hpqtp"), (4, "h"),
]

#: Five keys whose fifth insert forces the canonical first split.
SPLIT_FIXTURE_KEYS = ["abmf", "abnm", "acnm", "aczm", "acz"]


@dataclass
class WorkloadSpec:
    n_keys: int
    distribution: str = "random"  # random | ascending | script
    key_len_min: int = 4
    key_len_max: int = 12
    clients: int = 1
    capacity: int = 4
    seed: int = 0

    @classmethod
    def from_config(cls, cfg: SimConfig) -> "WorkloadSpec":
        return cls(
            n_keys=cfg.n_keys,
            distribution=cfg.distribution,
            key_len_min=cfg.key_len_min,
            key_len_max=cfg.key_len_max,
            clients=cfg.clients,
            capacity=cfg.bucket_capacity,
            seed=cfg.seed,
        )


def gen_workload(spec: WorkloadSpec, ks: Optional[KeySpace] = None) -> list:
    """Ordered (client_id, op, key, kmax) insert list for a spec.

    Random draws unique keys uniformly over the working alphabet; ascending
    is the same set sorted; script is the fixed 25-pair sequence (clients
    renumbered to 0-based ids).
    """
    if spec.distribution == "script":
        return [(c - 1, INSERT, key, None) for c, key in SCRIPT_PAIRS]
    ks = ks or KeySpace()
    rng = random.Random(f"{spec.seed}:workload")
    chars = ks.chars
    seen = set()
    keys = []
    while len(keys) < spec.n_keys:
        length = rng.randint(spec.key_len_min, spec.key_len_max)
        key = "".join(rng.choice(chars) for _ in range(length))
        if key not in seen:
            seen.add(key)
            keys.append(key)
    if spec.distribution == "ascending":
        keys.sort()
    elif spec.distribution != "random":
        raise ValueError(f"unknown distribution {spec.distribution!r}")
    return [(i % spec.clients, INSERT, key, None) for i, key in enumerate(keys)]


def load_workload_file(path) -> list:
    """Read an explicit ops file: CSV rows ``client,op,key[,kmax]``."""
    ops = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            client, op, key = int(row[0]), row[1].upper(), row[2]
            kmax = row[3] if len(row) > 3 and row[3] else None
            ops.append((client, op, key, kmax))
    return ops


# ----------------------------------------------------------------------
# independent membership oracle (padded lexicographic comparison)


def padded_le(key: bytes, bound, max_len: int) -> bool:
    """Key-at-or-below-bound via explicit max-digit padding of the bound."""
    if bound is BOTTOM:
        return False
    padded = bound + b"\xff" * max(0, max_len + 1 - len(bound))
    return key <= padded


def interval_owner(intervals: dict, key: bytes, max_len: int) -> int:
    """The unique id whose (lower, upper] contains the key, by padded compare."""
    owners = [
        sid
        for sid, iv in intervals.items()
        if not padded_le(key, iv.lower, max_len) and padded_le(key, iv.upper, max_len)
    ]
    if len(owners) != 1:
        raise AssertionError(f"key {key!r} owned by {owners}")
    return owners[0]


# ----------------------------------------------------------------------
# single-node twin: same structure without distribution


class LocalFile:
    """The data structure run entirely in one process: one trie, all buckets.

    Splits follow the same median rule as the distributed servers, so a
    sequential distributed run over the same insert order must end with the
    same buckets and the same routing.
    """

    def __init__(self, capacity: int, ks: Optional[KeySpace] = None):
        self.capacity = capacity
        self.ks = ks or KeySpace()
        self.trie = Trie.single(0)
        self.buckets = {0: []}
        self.next_id = 1

    def insert(self, key: bytes) -> str:
        hit = self.trie.search(key)
        bucket = self.buckets[hit.target]
        import bisect

        i = bisect.bisect_left(bucket, key)
        if i < len(bucket) and bucket[i] == key:
            return "DUPLICATE"
        bucket.insert(i, key)
        if len(bucket) > self.capacity:
            self._split(hit.target)
        return OK

    def _split(self, bucket_id: int) -> None:
        keys = self.buckets[bucket_id]
        cut = compute_split_string(keys, self.capacity)
        new_id = self.next_id
        self.next_id += 1
        mid = (self.capacity + 2) // 2
        self.buckets[bucket_id] = keys[:mid]
        self.buckets[new_id] = keys[mid:]
        hit = self.trie.search_above(cut)
        if hit.target != bucket_id:
            raise AssertionError("split region not owned by the overflowing bucket")
        from .keyspace import Cmp, bound_order

        if hit.locator.lower is not BOTTOM and bound_order(hit.locator.lower, cut) is Cmp.EQ:
            trie = self.trie._replace(hit.locator.path, Leaf(new_id))
        else:
            trie = self.trie.attach_split(hit.locator, cut, new_id)
        path = hit.locator.path
        while True:
            nxt = trie._successor_of_subtree(path)
            if nxt is None or trie._resolve(nxt.path).target != bucket_id:
                break
            trie = trie._replace(nxt.path, Leaf(new_id))
            path = nxt.path
        self.trie = trie

    def lookup(self, key: bytes) -> int:
        return self.trie.search(key).target


# ----------------------------------------------------------------------
# experiments


@dataclass
class ExperimentResult:
    sim: Simulation
    oracle: list  # sorted unique key bytes acknowledged as stored
    final_load_factor: float
    total_splits: int
    servers: int
    decile_msgs_per_op: list  # mean messages per insert, per completed decile


def run_experiment(
    cfg: SimConfig,
    ks: Optional[KeySpace] = None,
    outdir=None,
    oplog: bool = False,
) -> ExperimentResult:
    """Drive one simulated run and optionally write its CSV artifacts.

    Samples metrics every ``n_keys / 100`` completed inserts.  The returned
    oracle is the exact sorted set of keys the workload inserted.
    """
    ks = ks or KeySpace()
    if cfg.workload:
        workload = load_workload_file(cfg.workload)
    else:
        workload = gen_workload(WorkloadSpec.from_config(cfg), ks)
    sample_every = max(1, len(workload) // 100)
    sim = Simulation(cfg, workload, ks, sample_every=sample_every)
    sim.run()

    oracle = sorted({ks.encode_key(key) for _, op, key, _ in workload if op == INSERT})
    samples = sim.stats.samples
    deciles = []
    per = len(samples) // 10
    if per:
        for d in range(10):
            first, last = samples[d * per], samples[(d + 1) * per - 1]
            base = samples[d * per - 1] if d * per else None
            msgs = last.messages - (base.messages if base else 0)
            ops = last.keys - (base.keys if base else 0)
            deciles.append(msgs / ops if ops else 0.0)
    total_keys = sim.total_keys()
    result = ExperimentResult(
        sim=sim,
        oracle=oracle,
        final_load_factor=total_keys
        / (len(sim.servers) * cfg.bucket_capacity),
        total_splits=sim.stats.splits,
        servers=len(sim.servers),
        decile_msgs_per_op=deciles,
    )
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "config.txt").write_text(render_config(cfg))
        (outdir / "stats.csv").write_text(sim.stats_csv())
        (outdir / "state.csv").write_text(sim.state_dump())
        if oplog:
            (outdir / "oplog.csv").write_text(render_oplog(sim))
    return result


def render_oplog(sim: Simulation) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        ["clientId", "opSeq", "op", "keys", "serverFirstAddressed", "hops", "iamReceived"]
    )
    for client_id in sorted(sim.clients):
        for seq, res in enumerate(sim.clients[client_id].results):
            writer.writerow(
                [
                    client_id,
                    seq,
                    res.op,
                    res.key,
                    res.first_addressed,
                    res.hops,
                    int(res.iam_received),
                ]
            )
    return out.getvalue()


# ----------------------------------------------------------------------
# verification


def verify_against_oracle(
    sim: Simulation, oracle: list, rng_seed: int = 0, ranges: int = 100
) -> list:
    """Full post-run verification; returns violation strings (empty = pass).

    Checks bucket contents against the oracle set, interval containment and
    disjoint cover, searchability of every stored key by a fresh client, and
    exact results for random range queries.
    """
    violations = []
    ks = sim.ks
    stored = sorted(k for s in sim.servers.values() for k in s.keys)
    if stored != oracle:
        extra = set(stored) - set(oracle)
        missing = set(oracle) - set(stored)
        violations.append(
            f"bucket union differs from oracle: {len(missing)} missing, "
            f"{len(extra)} unexpected"
        )
    for server in sim.servers.values():
        bad = [k for k in server.keys if not server.owns(k)]
        if bad:
            violations.append(
                f"server {server.id} stores {len(bad)} keys outside its interval"
            )
    violations.extend(sim.check_cover())

    intervals = {s.id: s.interval for s in sim.servers.values()}
    max_len = ks.max_key_len
    rng = random.Random(f"{rng_seed}:verify")
    probe_keys = oracle if len(oracle) <= 500 else rng.sample(oracle, 500)
    for key in probe_keys:
        owner = interval_owner(intervals, key, max_len)
        routed, _ = sim.trace_route(0, key)
        if routed != owner:
            violations.append(f"routing sends {key!r} to {routed}, oracle says {owner}")
            break

    fresh = sim.add_client()
    searches = [(SEARCH, ks.decode_key(k), None) for k in probe_keys[:200]]
    for res in sim.run_ops(fresh, searches):
        if res.status != OK:
            violations.append(f"fresh client cannot find stored key {res.key!r}")
            break

    if oracle:
        client_id = min(sim.clients)
        for _ in range(ranges):
            a, b = rng.choice(oracle), rng.choice(oracle)
            if b < a:
                a, b = b, a
            expected = [k for k in oracle if a <= k <= b]
            got = sim.run_ops(client_id, [(RANGE, ks.decode_key(a), ks.decode_key(b))])
            got_keys = sorted(got[0].keys)
            if got_keys != expected:
                violations.append(
                    f"range [{ks.decode_key(a)}, {ks.decode_key(b)}] returned "
                    f"{len(got_keys)} keys, oracle has {len(expected)}"
                )
                break
    return violations


# ----------------------------------------------------------------------
# scripted scenarios


@dataclass
class SplitFixtureReport:
    split_string: str
    lower: int
    upper: int

    def ok(self) -> bool:
        return self.split_string == "acn" and self.lower == 3 and self.upper == 2


def scenario_split_fixture(ks: Optional[KeySpace] = None) -> SplitFixtureReport:
    """Insert the five canonical keys with capacity 4 and report the split."""
    ks = ks or KeySpace()
    cfg = SimConfig(bucket_capacity=4, clients=1, seed=0, distribution="script")
    workload = [(0, INSERT, key, None) for key in SPLIT_FIXTURE_KEYS]
    sim = Simulation(cfg, workload, ks)
    sim.run()
    if len(sim.servers) != 2:
        raise AssertionError(f"fixture produced {len(sim.servers)} servers")
    cut = sim.servers[0].interval.upper
    return SplitFixtureReport(
        ks.render_bound(cut), len(sim.servers[0].keys), len(sim.servers[1].keys)
    )


@dataclass
class ScriptScenarioReport:
    servers: int
    expected_servers: int
    violations: list
    sim: Simulation

    def server_count_matches(self) -> bool:
        return self.servers == self.expected_servers

    def ok(self) -> bool:
        return not self.violations


def scenario_script(ks: Optional[KeySpace] = None) -> ScriptScenarioReport:
    """Run the 25-insert, 4-client script with capacity 4 and verify it."""
    ks = ks or KeySpace()
    cfg = SimConfig(bucket_capacity=4, clients=4, seed=0, distribution="script")
    workload = gen_workload(WorkloadSpec.from_config(cfg), ks)
    sim = Simulation(cfg, workload, ks)
    sim.run()
    oracle = sorted({ks.encode_key(k) for _, _, k, _ in workload})
    violations = verify_against_oracle(sim, oracle)
    return ScriptScenarioReport(
        servers=len(sim.servers),
        expected_servers=9,
        violations=violations,
        sim=sim,
    )
