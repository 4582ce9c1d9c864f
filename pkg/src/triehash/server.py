"""Server state machine: bucket storage, interval ownership, splitting.

A server owns one key interval, stores that interval's keys in a bounded
bucket, and keeps a local trie recording every split it has performed or
inherited.  Requests for keys outside the interval are forwarded along the
local trie; requests inside are executed, and a reply carries an image
adjustment whenever the client's view of this region was stale.
"""

from __future__ import annotations

import bisect
from typing import Optional

from .keyspace import (
    BOTTOM,
    MIN_BYTE,
    TOP,
    Bound,
    Cmp,
    Interval,
    KeySpace,
    bound_order,
    common_prefix,
    key_le_bound,
)
from .trie import Leaf, Trie, TrieCorruptionError
from .wire import (
    DUPLICATE,
    INSERT,
    NOT_FOUND,
    OK,
    RANGE,
    SEARCH,
    Iam,
    RangeSlice,
    Reply,
    Request,
    replace,
)

SPLIT_TRIGGERED = "SPLIT_TRIGGERED"


class ContractError(Exception):
    """A caller violated an operation precondition."""


def compute_split_string(keys: list, capacity: int) -> bytes:
    """Split bound for an overflowing bucket of ``capacity + 1`` sorted keys.

    The median key (1-based index ceil((b+1)/2)) stays on the lower side;
    the bound is the shortest prefix of the median that the median's
    successor exceeds.  When the median is a proper prefix of its successor
    no such prefix exists, and the median extended by the minimum digit is
    the shortest separating bound instead.
    """
    if len(keys) != capacity + 1:
        raise ContractError(f"expected {capacity + 1} keys, got {len(keys)}")
    mid = (capacity + 2) // 2
    median = keys[mid - 1]
    successor = keys[mid]
    q = len(common_prefix(median, successor))
    if q < len(median):
        return median[: q + 1]
    return median + MIN_BYTE


class ServerNode:
    """One server: id, bucket, local trie, owned interval."""

    __slots__ = ("id", "capacity", "keys", "trie", "interval", "ks", "iam_minimal")

    def __init__(
        self,
        server_id: int,
        capacity: int,
        keys: list,
        trie: Trie,
        interval: Interval,
        ks: KeySpace,
        iam_minimal: bool = False,
    ):
        self.id = server_id
        self.capacity = capacity
        self.keys = keys
        self.trie = trie
        self.interval = interval
        self.ks = ks
        self.iam_minimal = iam_minimal

    @classmethod
    def initial(cls, capacity: int, ks: KeySpace, iam_minimal: bool = False) -> "ServerNode":
        """Server 0: empty bucket, single-leaf trie, the whole key space."""
        return cls(0, capacity, [], Trie.single(0), Interval(BOTTOM, TOP), ks, iam_minimal)

    # ------------------------------------------------------------------
    # local operations

    def owns(self, key: bytes) -> bool:
        iv = self.interval
        return (not key_le_bound(key, iv.lower)) and key_le_bound(key, iv.upper)

    def owns_region_above(self, cut: Bound) -> bool:
        """True iff this interval covers the keys immediately above ``cut``."""
        iv = self.interval
        if bound_order(cut, iv.upper) is not Cmp.LT:
            return False
        return iv.lower is BOTTOM or bound_order(iv.lower, cut) is not Cmp.GT

    def has_key(self, key: bytes) -> bool:
        i = bisect.bisect_left(self.keys, key)
        return i < len(self.keys) and self.keys[i] == key

    def insert_local(self, key: bytes) -> str:
        if not self.owns(key):
            raise ContractError(f"key {key!r} outside interval of server {self.id}")
        i = bisect.bisect_left(self.keys, key)
        if i < len(self.keys) and self.keys[i] == key:
            return DUPLICATE
        self.keys.insert(i, key)
        if len(self.keys) == self.capacity + 1:
            return SPLIT_TRIGGERED
        return OK

    def split(self, allocator) -> "ServerNode":
        """Move the upper half of an overflowing bucket to a new server.

        The split bound comes from :func:`compute_split_string`.  The local
        trie gains a chain at the leaf the bound falls in (when the bound is
        an existing leaf boundary the partition already exists and no chain
        is needed), and any of this server's own leaves that now lie above
        the bound are handed to the new server.  The new server starts from
        a copy of the post-split trie, so both route their whole intervals
        to themselves.
        """
        cut = compute_split_string(self.keys, self.capacity)
        new_id = allocator.allocate_server(self.id)
        mid = (self.capacity + 2) // 2
        if key_le_bound(self.keys[mid], cut) or not key_le_bound(self.keys[mid - 1], cut):
            raise ContractError(f"split bound {cut!r} does not cut at the median")
        moved = self.keys[mid:]
        self.keys = self.keys[:mid]

        hit = self.trie.search_above(cut)
        if hit.target != self.id:
            raise TrieCorruptionError(
                f"server {self.id} does not own its split region"
            )
        trie = self.trie
        if hit.locator.lower is not BOTTOM and bound_order(hit.locator.lower, cut) is Cmp.EQ:
            # the bound already separates two leaves: retarget only,
            # starting with the leaf just above the bound
            trie = trie._replace(hit.locator.path, Leaf(new_id))
            path = hit.locator.path
        else:
            trie = trie.attach_split(hit.locator, cut, new_id)
            path = hit.locator.path
        while True:
            nxt = trie._successor_of_subtree(path)
            if nxt is None or trie._resolve(nxt.path).target != self.id:
                break
            trie = trie._replace(nxt.path, Leaf(new_id))
            path = nxt.path
        self.trie = trie

        old_upper = self.interval.upper
        self.interval = Interval(self.interval.lower, cut)
        return ServerNode(
            new_id,
            self.capacity,
            moved,
            trie,
            Interval(cut, old_upper),
            self.ks,
            self.iam_minimal,
        )

    def range_scan(self, kmin: bytes, kmax: bytes) -> RangeSlice:
        """Bucket keys within [kmin, kmax] plus continuation routing.

        ``stop`` is set when the range's upper end does not extend past this
        interval; otherwise ``next_hint`` names the server this trie believes
        owns the successor interval.
        """
        lo = bisect.bisect_left(self.keys, kmin)
        hi = bisect.bisect_right(self.keys, kmax)
        upper = self.interval.upper
        stop = key_le_bound(kmax, upper)
        next_hint = None if stop else self.trie.search_above(upper).target
        return RangeSlice(tuple(self.keys[lo:hi]), upper, stop, next_hint)

    def build_iam(self, cm_server: Bound, cm_client: Bound, addressed: int) -> Iam:
        """Image adjustment for a client whose view of this region is stale.

        The payload is the whole local trie when the client's bound carries
        no extra information beyond the server's (their common prefix is the
        server's bound itself); otherwise the sub-trie for the common prefix.
        The retarget pair relabels the client's stale leaf run.
        """
        prefix = common_prefix(cm_server, cm_client)
        if prefix == cm_server:
            payload = self.trie
        else:
            payload = self.trie.extract_subtrie(prefix, minimal=self.iam_minimal)
        return Iam(payload.serialize(self.ks), addressed, payload.last_leaf_target())

    # ------------------------------------------------------------------
    # request handling

    def handle_request(self, req: Request, ctx) -> None:
        """Execute or forward one request; reply from the owning server.

        Ownership is the interval check on the probe (the key, or the range
        continuation cursor).  A miss forwards along the local trie with the
        hop count bumped.  A hit executes locally, splits if the insert
        overflowed the bucket, and attaches an image adjustment whenever the
        request was forwarded here or the client's bound for the probe
        disagrees with this trie.
        """
        if req.op == RANGE and req.cursor is not None:
            if not self.owns_region_above(req.cursor):
                target = self.trie.search_above(req.cursor).target
                self._forward(target, req, ctx)
                return
            true_cm = self.trie.search_above(req.cursor).cm
        else:
            if not self.owns(req.key):
                target = self.trie.search(req.key).target
                self._forward(target, req, ctx)
                return
            true_cm = None  # computed after a potential split

        range_slice = None
        if req.op == INSERT:
            status = self.insert_local(req.key)
            if status == SPLIT_TRIGGERED:
                ctx.register_server(self.split(ctx))
                status = OK
        elif req.op == SEARCH:
            status = OK if self.has_key(req.key) else NOT_FOUND
        elif req.op == RANGE:
            status = OK
            range_slice = self.range_scan(req.key, req.kmax)
        else:
            raise ContractError(f"unknown operation {req.op!r}")

        if true_cm is None:
            true_cm = self.trie.search(req.key).cm
        iam = None
        if req.hops > 0 or true_cm != req.cm_client:
            iam = self.build_iam(true_cm, req.cm_client, req.addressed)
        ctx.reply(req.client_id, Reply(status, self.id, req.hops, iam, range_slice))

    def _forward(self, target: int, req: Request, ctx) -> None:
        if target == self.id:
            raise TrieCorruptionError(
                f"server {self.id} does not own {req!r} but its trie routes it to itself"
            )
        ctx.forward(target, replace(req, hops=req.hops + 1))

    # ------------------------------------------------------------------
    # introspection

    def check_invariants(self) -> list:
        """Violations of the server-state invariants (empty when sound)."""
        problems = self.trie.validate(self.ks.max_key_len + 1)
        for key in self.keys:
            if not self.owns(key):
                problems.append(f"key {key!r} outside interval of server {self.id}")
                break
        for key in self.keys:
            if self.trie.search(key).target != self.id:
                problems.append(
                    f"server {self.id} trie routes own key {key!r} elsewhere"
                )
                break
        return problems

    def dump_row(self) -> list:
        ks = self.ks
        return [
            str(self.id),
            ks.render_bound(self.interval.lower),
            ks.render_bound(self.interval.upper),
            str(len(self.keys)),
            self.trie.serialize(ks).decode("ascii"),
        ]
