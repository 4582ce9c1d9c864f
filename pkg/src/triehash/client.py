"""Client state machine: partial-image addressing and operation drivers.

A client keeps a private trie image of the file's partitioning, initially a
single leaf naming server 0.  Operations are addressed by searching the
image; replies may carry an image adjustment, which the client grafts into
its image so the same mistake is not repeated.  A client has at most one
request in flight.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .keyspace import Bound, KeySpace
from .trie import GraftMismatchError, LeafLocator, Trie, deserialize
from .wire import INSERT, RANGE, SEARCH, Iam, Reply, Request


@dataclass
class OpResult:
    op: str
    key: str
    status: str
    first_addressed: int
    hops: int
    iam_received: bool
    keys: tuple = ()


@dataclass
class _Pending:
    op: str
    key: bytes
    kmax: bytes
    locator: LeafLocator
    addressed: int
    first_addressed: int
    hops: int = 0
    iam_any: bool = False
    collected: list = field(default_factory=list)


class Client:
    """One client actor: image, statistics, and the blocking op driver."""

    __slots__ = ("id", "image", "ks", "ops", "iams_received", "hops_observed",
                 "graft_errors", "pending", "results")

    def __init__(self, client_id: int, ks: KeySpace):
        self.id = client_id
        self.image = Trie.single(0)
        self.ks = ks
        self.ops = 0
        self.iams_received = 0
        self.hops_observed = 0
        self.graft_errors = 0
        self.pending: Optional[_Pending] = None
        self.results: list = []

    # ------------------------------------------------------------------
    # addressing

    def address(self, key: bytes):
        """Image lookup: (server id, the image's bound for the key, locator)."""
        outcome = self.image.search(key)
        return outcome.target, outcome.cm, outcome.locator

    # ------------------------------------------------------------------
    # operation drivers (one in flight at a time)

    def start_op(self, op: str, key: bytes, kmax: bytes, ctx) -> None:
        if self.pending is not None:
            raise RuntimeError(f"client {self.id} already has a request in flight")
        target, cm, locator = self.address(key)
        self.pending = _Pending(op, key, kmax, locator, target, target)
        ctx.send_request(
            target,
            Request(op, self.id, key, kmax, cm_client=cm, addressed=target),
        )

    def on_reply(self, rep: Reply, ctx) -> Optional[OpResult]:
        """Handle one reply; returns the finished result or None mid-range."""
        p = self.pending
        if p is None:
            raise RuntimeError(f"client {self.id} got a reply with nothing in flight")
        p.hops += rep.hops
        if rep.iam is not None:
            p.iam_any = True
            self.apply_iam(rep.iam, p.locator)
        if p.op == RANGE and rep.range_slice is not None and not rep.range_slice.stop:
            rs = rep.range_slice
            p.collected.extend(rs.keys)
            outcome = self.image.search_above(rs.cm_server)
            p.locator = outcome.locator
            p.addressed = rs.next_hint
            ctx.send_request(
                rs.next_hint,
                Request(
                    RANGE,
                    self.id,
                    p.key,
                    p.kmax,
                    cm_client=outcome.cm,
                    cursor=rs.cm_server,
                    addressed=rs.next_hint,
                ),
            )
            return None
        if p.op == RANGE and rep.range_slice is not None:
            p.collected.extend(rep.range_slice.keys)
        self.pending = None
        self.ops += 1
        self.hops_observed += p.hops
        ks = self.ks
        if p.op == RANGE:
            shown = f"{ks.decode_key(p.key)}:{ks.decode_key(p.kmax)}"
        else:
            shown = ks.decode_key(p.key)
        result = OpResult(
            p.op,
            shown,
            rep.status,
            p.first_addressed,
            p.hops,
            p.iam_any,
            tuple(p.collected),
        )
        self.results.append(result)
        return result

    # ------------------------------------------------------------------
    # image adjustment

    def apply_iam(self, iam: Iam, locator: LeafLocator) -> None:
        """Graft an adjustment payload into the image.

        A mismatched locator leaves the image unchanged and is only counted:
        the operation itself was already executed by the correct server, so
        a stale adjustment costs accuracy, not correctness.
        """
        donor = deserialize(iam.payload, self.ks)
        try:
            self.image = self.image.graft(
                locator, donor, iam.stale_target, iam.new_target
            )
        except GraftMismatchError:
            self.graft_errors += 1
            return
        self.iams_received += 1
