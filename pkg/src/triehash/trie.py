"""Nil-free binary tries that partition the key space into server intervals.

Each internal node carries a digit and a position.  A descent maintains a
bound prefix ``B`` (initially empty, meaning TOP): at node ``(d, i)`` the
candidate bound is the first ``i`` digits of ``B`` followed by ``d``; keys at
or below the candidate go left (and ``B`` becomes the candidate), the rest go
right (``B`` unchanged).  Every leaf names a server, so the in-order leaves
tile the whole key space into consecutive intervals with strictly increasing
upper bounds ending at TOP.  There is no empty leaf: every region of key
space is always owned by some server.

Tries are immutable values.  Mutating operations (attach_split, graft) copy
the path they touch and share every untouched subtree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

from .keyspace import BOTTOM, TOP, Bound, Cmp, KeySpace, bound_order, common_prefix

_BYTE = tuple(bytes((i,)) for i in range(256))

LEFT = 0
RIGHT = 1


class TrieError(Exception):
    """Base class for trie failures."""


class TrieCorruptionError(TrieError):
    """The trie structure violates a descent invariant."""


class SplitBoundError(TrieError):
    """A split bound does not lie strictly inside the target leaf interval."""


class GraftMismatchError(TrieError):
    """The graft location does not hold a leaf with the expected target."""


class InvalidLocatorError(TrieError):
    """A locator does not address a leaf of this trie."""


class ParseError(TrieError):
    """Malformed trie encoding; ``offset`` is the failing byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class NilRejectedError(ParseError):
    """The encoding contains a nil leaf marker, which this trie forbids."""


class Leaf:
    __slots__ = ("target",)

    def __init__(self, target: int):
        self.target = target

    def __eq__(self, other):
        return type(other) is Leaf and other.target == self.target

    def __hash__(self):
        return hash(("leaf", self.target))

    def __repr__(self):
        return f"Leaf({self.target})"


class Internal:
    __slots__ = ("digit", "pos", "left", "right")

    def __init__(self, digit: int, pos: int, left, right):
        self.digit = digit
        self.pos = pos
        self.left = left
        self.right = right

    def __eq__(self, other):
        if type(other) is not Internal:
            return False
        # iterative structural equality; tries can be deep
        stack = [(self, other)]
        while stack:
            a, b = stack.pop()
            ta, tb = type(a), type(b)
            if ta is not tb:
                return False
            if ta is Leaf:
                if a.target != b.target:
                    return False
            else:
                if a.digit != b.digit or a.pos != b.pos:
                    return False
                stack.append((a.left, b.left))
                stack.append((a.right, b.right))
        return True

    def __hash__(self):
        return hash(("internal", self.digit, self.pos))

    def __repr__(self):
        return f"Internal({self.digit}, {self.pos}, {self.left!r}, {self.right!r})"


@dataclass(frozen=True)
class LeafLocator:
    """Handle to one leaf: turns from the root plus the descent's interval.

    ``bound`` is the leaf's upper bound as accumulated by the descent that
    produced the locator; ``lower`` is the exclusive lower bound accumulated
    from right turns.  A locator is only valid against the trie value it was
    derived from.
    """

    path: tuple
    bound: Bound
    lower: Bound


class SearchOutcome(NamedTuple):
    target: int
    cm: Bound
    locator: LeafLocator


def _candidate(bound: bytes, node: Internal) -> bytes:
    pos = node.pos
    if len(bound) < pos:
        raise TrieCorruptionError(
            f"node position {pos} exceeds bound context of length {len(bound)}"
        )
    return bound[:pos] + _BYTE[node.digit]


class Trie:
    __slots__ = ("root",)

    def __init__(self, root):
        self.root = root

    @classmethod
    def single(cls, target: int) -> "Trie":
        return cls(Leaf(target))

    def __eq__(self, other):
        return isinstance(other, Trie) and self.root == other.root

    def __hash__(self):
        return hash(self.root)

    def __repr__(self):
        return f"Trie({self.root!r})"

    # ------------------------------------------------------------------
    # addressing

    def search(self, key: bytes) -> SearchOutcome:
        """Route a key to its leaf.

        Returns the leaf's target, its upper bound (the least leaf bound at
        or above the key), and a locator for the leaf.
        """
        node = self.root
        bound = TOP
        lower: Bound = BOTTOM
        path = []
        while type(node) is Internal:
            cand = _candidate(bound, node)
            if key[: len(cand)] <= cand:
                path.append(LEFT)
                bound = cand
                node = node.left
            else:
                path.append(RIGHT)
                lower = cand
                node = node.right
        return SearchOutcome(node.target, bound, LeafLocator(tuple(path), bound, lower))

    def search_above(self, cut: Bound) -> SearchOutcome:
        """Locate the leaf owning the keys immediately above ``cut``.

        ``cut`` is a bound; the result is the leaf whose interval starts at
        or below ``cut`` and extends past it.  With ``cut = BOTTOM`` this is
        the leftmost leaf.
        """
        node = self.root
        bound = TOP
        lower: Bound = BOTTOM
        path = []
        while type(node) is Internal:
            cand = _candidate(bound, node)
            if bound_order(cut, cand) is Cmp.LT:
                path.append(LEFT)
                bound = cand
                node = node.left
            else:
                path.append(RIGHT)
                lower = cand
                node = node.right
        return SearchOutcome(node.target, bound, LeafLocator(tuple(path), bound, lower))

    # ------------------------------------------------------------------
    # leaf enumeration

    def _walk(self) -> Iterator[tuple]:
        """In-order (path, lower, bound, leaf) for every leaf."""
        stack = [(self.root, BOTTOM, TOP, ())]
        while stack:
            node, lower, bound, path = stack.pop()
            while type(node) is Internal:
                cand = _candidate(bound, node)
                stack.append((node.right, cand, bound, path + (RIGHT,)))
                node, bound, path = node.left, cand, path + (LEFT,)
            yield path, lower, bound, node

    def leaf_sequence(self) -> list:
        """In-order (target, upper bound) pairs; bounds strictly increase."""
        return [(leaf.target, bound) for _, _, bound, leaf in self._walk()]

    def leaf_locators(self) -> list:
        """In-order (locator, target) pairs."""
        return [
            (LeafLocator(path, bound, lower), leaf.target)
            for path, lower, bound, leaf in self._walk()
        ]

    def leaf_count(self) -> int:
        return sum(1 for _ in self._walk())

    def last_leaf_target(self) -> int:
        node = self.root
        while type(node) is Internal:
            node = node.right
        return node.target

    def locate(self, path: tuple) -> LeafLocator:
        """Recompute the locator for a leaf path (validating the path)."""
        node = self.root
        bound = TOP
        lower: Bound = BOTTOM
        for turn in path:
            if type(node) is not Internal:
                raise InvalidLocatorError("path descends past a leaf")
            cand = _candidate(bound, node)
            if turn == LEFT:
                bound = cand
                node = node.left
            else:
                lower = cand
                node = node.right
        if type(node) is not Leaf:
            raise InvalidLocatorError("path does not end at a leaf")
        return LeafLocator(tuple(path), bound, lower)

    def successor_leaf(self, loc: LeafLocator) -> Optional[LeafLocator]:
        """The next leaf in in-order sequence, or None after the last leaf."""
        self._resolve(loc.path)  # raises if stale
        return self._successor_of_subtree(loc.path)

    def _successor_of_subtree(self, path: tuple) -> Optional[LeafLocator]:
        # strip trailing right turns; the successor hangs off the deepest
        # ancestor entered leftward
        i = len(path)
        while i > 0 and path[i - 1] == RIGHT:
            i -= 1
        if i == 0:
            return None
        prefix = path[: i - 1] + (RIGHT,)
        node = self.root
        bound = TOP
        lower: Bound = BOTTOM
        for turn in prefix:
            cand = _candidate(bound, node)
            if turn == LEFT:
                bound = cand
                node = node.left
            else:
                lower = cand
                node = node.right
        turns = list(prefix)
        while type(node) is Internal:
            bound = _candidate(bound, node)
            node = node.left
            turns.append(LEFT)
        return LeafLocator(tuple(turns), bound, lower)

    # ------------------------------------------------------------------
    # mutation (persistent: returns new tries)

    def _resolve(self, path: tuple):
        node = self.root
        for turn in path:
            if type(node) is not Internal:
                raise InvalidLocatorError("path descends past a leaf")
            node = node.left if turn == LEFT else node.right
        return node

    def _replace(self, path: tuple, subtree) -> "Trie":
        """Path-copying replacement of the node addressed by ``path``."""
        parents = []
        node = self.root
        for turn in path:
            parents.append((node, turn))
            node = node.left if turn == LEFT else node.right
        for parent, turn in reversed(parents):
            if turn == LEFT:
                subtree = Internal(parent.digit, parent.pos, subtree, parent.right)
            else:
                subtree = Internal(parent.digit, parent.pos, parent.left, subtree)
        return Trie(subtree)

    def attach_split(self, loc: LeafLocator, split: bytes, new_target: int) -> "Trie":
        """Split the leaf at ``loc`` by the bound ``split``.

        The leaf is replaced by a chain of one node per split digit, starting
        at the digit where the split bound diverges from the leaf's upper
        bound (earlier digits are already pinned by the surrounding trie).
        The old target keeps the deepest left leaf (keys at or below the
        split bound); every right leaf of the chain carries ``new_target``,
        so the whole old interval stays covered.
        """
        if not isinstance(split, bytes) or split == TOP:
            raise SplitBoundError("split bound must be a non-empty digit string")
        leaf = self._resolve(loc.path)
        if type(leaf) is not Leaf:
            raise InvalidLocatorError("locator does not address a leaf")
        if bound_order(split, loc.bound) is not Cmp.LT or (
            loc.lower is not BOTTOM and bound_order(loc.lower, split) is not Cmp.LT
        ):
            raise SplitBoundError(
                "split bound must lie strictly inside the leaf interval"
            )
        start = 0 if loc.bound == TOP else len(common_prefix(split, loc.bound))
        node = Internal(split[-1], len(split) - 1, Leaf(leaf.target), Leaf(new_target))
        for j in range(len(split) - 2, start - 1, -1):
            node = Internal(split[j], j, node, Leaf(new_target))
        return self._replace(loc.path, node)

    def graft(
        self, loc: LeafLocator, donor: "Trie", old_target: int, new_target: int
    ) -> "Trie":
        """Replace the leaf at ``loc`` by the donor trie, then relabel.

        The donor is clipped to the leaf's interval (branches that no key in
        the interval can reach are dropped), keeping the leaf bounds strictly
        increasing.  After the replacement, consecutive successor leaves
        still targeting ``old_target`` are retargeted to ``new_target``,
        stopping at the first leaf that targets something else.
        """
        leaf = self._resolve(loc.path)
        if type(leaf) is not Leaf or leaf.target != old_target:
            raise GraftMismatchError(
                f"graft location does not hold a leaf targeting {old_target}"
            )
        clipped = _restrict(donor.root, loc.lower, loc.bound)
        result = self._replace(loc.path, clipped)
        path = loc.path
        while True:
            nxt = result._successor_of_subtree(path)
            if nxt is None:
                return result
            if result._resolve(nxt.path).target != old_target:
                return result
            result = result._replace(nxt.path, Leaf(new_target))
            path = nxt.path

    def extract_subtrie(self, prefix: bytes, minimal: bool = False) -> "Trie":
        """Image-correction payload for the region under ``prefix``.

        The baseline returns the whole trie, which is always a correct
        superset.  The minimal variant clips away everything above the
        prefix bound; grafting either variant routes identically because the
        graft clips the payload to the receiving leaf's interval anyway.
        """
        if not minimal or prefix == TOP:
            return self
        return Trie(_restrict(self.root, BOTTOM, prefix))

    # ------------------------------------------------------------------
    # serialization

    def serialize(self, ks: KeySpace) -> bytes:
        """Preorder text encoding: ``I(<digit>,<pos>)`` and ``L(<server>)``."""
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if type(node) is Leaf:
                out.append(f"L({node.target})")
            else:
                out.append(f"I({ks.digit_char(node.digit)},{node.pos})")
                stack.append(node.right)
                stack.append(node.left)
        return "".join(out).encode("ascii")

    # ------------------------------------------------------------------
    # validation

    def validate(self, max_pos: int) -> list:
        """Invariant violations as strings; empty means the trie is sound.

        Checks: every leaf names a server (no nil), node positions stay
        below ``max_pos`` and within their bound context, in-order leaf
        bounds strictly increase, and the final bound is TOP.
        """
        violations = []
        prev: Optional[Bound] = None
        last: Bound = BOTTOM
        stack = [(self.root, TOP)]
        walked = []
        while stack:
            node, bound = stack.pop()
            while type(node) is Internal:
                if node.pos >= max_pos:
                    violations.append(
                        f"node position {node.pos} not below limit {max_pos}"
                    )
                if len(bound) < node.pos:
                    violations.append(
                        f"node position {node.pos} exceeds bound context "
                        f"of length {len(bound)}"
                    )
                    break
                cand = bound[: node.pos] + _BYTE[node.digit]
                stack.append((node.right, bound))
                node, bound = node.left, cand
            else:
                walked.append(bound)
                if not isinstance(node.target, int) or node.target < 0:
                    violations.append(f"leaf target {node.target!r} is not a server id")
                if prev is not None and bound_order(prev, bound) is not Cmp.LT:
                    violations.append(
                        "leaf bounds not strictly increasing at "
                        f"{prev!r} -> {bound!r}"
                    )
                prev = bound
                last = bound
        if walked and last != TOP:
            violations.append(f"last leaf bound {last!r} is not TOP")
        return violations


def _restrict(node, lower: Bound, upper: Bound):
    """Clip a trie to the interval (lower, upper], dropping dead branches.

    A branch is dead when its candidate bound falls outside the interval, so
    no key of the interval can take it.  Shares every untouched subtree.
    """
    if type(node) is Leaf:
        return node
    if not isinstance(upper, bytes):
        raise TrieCorruptionError("restriction upper bound must be a digit string")
    cand = _candidate(upper, node)
    if bound_order(cand, upper) is not Cmp.LT:
        return _restrict(node.left, lower, upper)
    if lower is not BOTTOM and bound_order(cand, lower) is not Cmp.GT:
        return _restrict(node.right, lower, upper)
    left = _restrict(node.left, lower, cand)
    right = _restrict(node.right, cand, upper)
    if left is node.left and right is node.right:
        return node
    return Internal(node.digit, node.pos, left, right)


def deserialize(data: bytes, ks: KeySpace) -> Trie:
    """Parse the preorder encoding produced by :meth:`Trie.serialize`.

    Rejects nil leaf markers (an ``N`` node tag, or a leaf with an empty,
    ``~``, or negative target) with :class:`NilRejectedError`; any other
    malformation raises :class:`ParseError` with the byte offset.
    """
    text = data.decode("ascii", errors="replace")
    pos = 0
    n = len(text)

    def parse_node():
        nonlocal pos
        if pos >= n:
            raise ParseError("unexpected end of input", pos)
        tag = text[pos]
        if tag == "N":
            raise NilRejectedError("nil node marker", pos)
        if tag == "L":
            if text[pos + 1 : pos + 2] != "(":
                raise ParseError("expected '(' after leaf tag", pos + 1)
            end = text.find(")", pos + 2)
            if end < 0:
                raise ParseError("unterminated leaf", pos)
            body = text[pos + 2 : end]
            if body in ("", "~") or body.startswith("-"):
                raise NilRejectedError("nil leaf marker", pos + 2)
            if not body.isdigit():
                raise ParseError(f"bad server id {body!r}", pos + 2)
            pos = end + 1
            return Leaf(int(body))
        if tag == "I":
            if text[pos + 1 : pos + 2] != "(":
                raise ParseError("expected '(' after internal tag", pos + 1)
            if pos + 2 >= n:
                raise ParseError("unexpected end of input", pos + 2)
            ch = text[pos + 2]
            try:
                digit = ks.digit_code(ch)
            except ValueError:
                raise ParseError(f"unknown digit {ch!r}", pos + 2) from None
            if text[pos + 3 : pos + 4] != ",":
                raise ParseError("expected ',' in internal node", pos + 3)
            end = text.find(")", pos + 4)
            if end < 0:
                raise ParseError("unterminated internal node", pos)
            body = text[pos + 4 : end]
            if not body.isdigit():
                raise ParseError(f"bad position {body!r}", pos + 4)
            pos = end + 1
            return Internal(digit, int(body), None, None)
        raise ParseError(f"unknown node tag {tag!r}", pos)

    root = parse_node()
    if type(root) is Internal:
        pending = [root]  # nodes missing children; left filled first
        while pending:
            node = parse_node()
            top = pending[-1]
            if top.left is None:
                top.left = node
            else:
                top.right = node
                pending.pop()
            if type(node) is Internal:
                pending.append(node)
    if pos != n:
        raise ParseError("trailing data after trie", pos)
    return Trie(root)
