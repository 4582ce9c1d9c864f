"""Request/reply envelopes and their byte encoding.

Every message is a tag byte (``Q`` request, ``P`` reply) followed by
length-prefixed fields: ``<decimal length>:<raw bytes>``.  Bounds get a
one-byte discriminator so BOTTOM, TOP, and digit strings stay distinct on
the wire.  Image-adjustment payloads embed the trie text encoding.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .keyspace import BOTTOM, TOP, Bound

__all__ = [
    "INSERT",
    "SEARCH",
    "RANGE",
    "OK",
    "DUPLICATE",
    "NOT_FOUND",
    "Request",
    "Reply",
    "Iam",
    "RangeSlice",
    "WireError",
    "encode_message",
    "decode_message",
    "replace",
]

INSERT = "INSERT"
SEARCH = "SEARCH"
RANGE = "RANGE"

OK = "OK"
DUPLICATE = "DUPLICATE"
NOT_FOUND = "NOT_FOUND"


class WireError(Exception):
    """Malformed message bytes."""


@dataclass
class Request:
    op: str
    client_id: int
    key: bytes = b""  # probe key; the range minimum for RANGE
    kmax: bytes = b""  # RANGE only
    cm_client: Bound = TOP
    cursor: Optional[Bound] = None  # RANGE continuation cursor
    addressed: int = 0  # first server the client sent this request to
    hops: int = 0


@dataclass
class Iam:
    """Image adjustment piggybacked on a reply: a trie payload plus the
    retarget pair (stale leaf target, replacement target)."""

    payload: bytes
    stale_target: int
    new_target: int


@dataclass
class RangeSlice:
    keys: tuple
    cm_server: Bound = TOP
    stop: bool = True
    next_hint: Optional[int] = None


@dataclass
class Reply:
    status: str
    server_id: int
    hops: int
    iam: Optional[Iam] = None
    range_slice: Optional[RangeSlice] = None


def _f(data: bytes) -> bytes:
    return b"%d:%s" % (len(data), data)


def _fs(text: str) -> bytes:
    return _f(text.encode("ascii"))


def _fi(value: int) -> bytes:
    return _f(b"%d" % value)


def _fbound(bound: Optional[Bound]) -> bytes:
    if bound is None:
        return _f(b"N")
    if bound is BOTTOM:
        return _f(b"B")
    return _f(b"V" + bound)


def _take(data: bytes, off: int) -> tuple:
    colon = data.find(b":", off)
    if colon < 0:
        raise WireError(f"missing length prefix at byte {off}")
    try:
        length = int(data[off:colon])
    except ValueError:
        raise WireError(f"bad length prefix at byte {off}") from None
    start = colon + 1
    end = start + length
    if end > len(data):
        raise WireError(f"truncated field at byte {start}")
    return data[start:end], end


def _take_int(data: bytes, off: int) -> tuple:
    raw, off = _take(data, off)
    try:
        return int(raw), off
    except ValueError:
        raise WireError(f"bad integer field {raw!r}") from None


def _take_bound(data: bytes, off: int) -> tuple:
    raw, off = _take(data, off)
    if raw == b"N":
        return None, off
    if raw == b"B":
        return BOTTOM, off
    if raw[:1] == b"V":
        return raw[1:], off
    raise WireError(f"bad bound discriminator {raw[:1]!r}")


def encode_message(msg) -> bytes:
    if isinstance(msg, Request):
        return b"Q" + b"".join(
            (
                _fs(msg.op),
                _fi(msg.client_id),
                _f(msg.key),
                _f(msg.kmax),
                _fbound(msg.cm_client),
                _fbound(msg.cursor),
                _fi(msg.addressed),
                _fi(msg.hops),
            )
        )
    if isinstance(msg, Reply):
        parts = [
            _fs(msg.status),
            _fi(msg.server_id),
            _fi(msg.hops),
        ]
        if msg.iam is None:
            parts.append(_f(b"0"))
        else:
            parts.append(_f(b"1"))
            parts.append(_f(msg.iam.payload))
            parts.append(_fi(msg.iam.stale_target))
            parts.append(_fi(msg.iam.new_target))
        if msg.range_slice is None:
            parts.append(_f(b"0"))
        else:
            rs = msg.range_slice
            parts.append(_f(b"1"))
            parts.append(_fi(len(rs.keys)))
            parts.extend(_f(k) for k in rs.keys)
            parts.append(_fbound(rs.cm_server))
            parts.append(_f(b"1" if rs.stop else b"0"))
            parts.append(_fi(rs.next_hint) if rs.next_hint is not None else _f(b"N"))
        return b"P" + b"".join(parts)
    raise TypeError(f"cannot encode {type(msg).__name__}")


def decode_message(data: bytes):
    if not data:
        raise WireError("empty message")
    tag, off = data[:1], 1
    if tag == b"Q":
        op, off = _take(data, off)
        client_id, off = _take_int(data, off)
        key, off = _take(data, off)
        kmax, off = _take(data, off)
        cm_client, off = _take_bound(data, off)
        cursor, off = _take_bound(data, off)
        addressed, off = _take_int(data, off)
        hops, off = _take_int(data, off)
        if off != len(data):
            raise WireError("trailing bytes after request")
        return Request(
            op.decode("ascii"), client_id, key, kmax, cm_client, cursor, addressed, hops
        )
    if tag == b"P":
        status, off = _take(data, off)
        server_id, off = _take_int(data, off)
        hops, off = _take_int(data, off)
        flag, off = _take(data, off)
        iam = None
        if flag == b"1":
            payload, off = _take(data, off)
            stale, off = _take_int(data, off)
            new, off = _take_int(data, off)
            iam = Iam(payload, stale, new)
        flag, off = _take(data, off)
        range_slice = None
        if flag == b"1":
            count, off = _take_int(data, off)
            keys = []
            for _ in range(count):
                k, off = _take(data, off)
                keys.append(k)
            cm_server, off = _take_bound(data, off)
            stop_raw, off = _take(data, off)
            hint_raw, off = _take(data, off)
            next_hint = None if hint_raw == b"N" else int(hint_raw)
            range_slice = RangeSlice(tuple(keys), cm_server, stop_raw == b"1", next_hint)
        if off != len(data):
            raise WireError("trailing bytes after reply")
        return Reply(status.decode("ascii"), server_id, hops, iam, range_slice)
    raise WireError(f"unknown message tag {tag!r}")
