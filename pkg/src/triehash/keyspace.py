"""Ordered key space: digits, keys, interval bounds, and their comparisons.

Keys are finite digit strings over a fixed, totally ordered alphabet.  An
interval boundary (a "bound") is a digit string read as that string followed
by infinitely many copies of the greatest digit, so a bound ``c`` sits just
above every key extending ``c``.  Two distinguished bounds close the space:
``BOTTOM`` below every key, and ``TOP`` (the empty bound, all padding) above
every key.

At runtime keys and bounds are ``bytes`` of digit codes chosen so that plain
bytes comparison agrees with alphabet order: code 0 is the reserved minimum
digit (rendered ``_``), the highest code is the reserved maximum digit
(rendered ``|``), and the working alphabet occupies the codes between.
"""

from __future__ import annotations

import enum
from typing import NamedTuple, Union

MIN_CHAR = "_"
MAX_CHAR = "|"

#: Working alphabet of the default key space: printable ASCII 0x21..0x7A in
#: code point order, minus the reserved minimum digit.
DEFAULT_CHARS = "".join(chr(c) for c in range(0x21, 0x7B) if chr(c) != MIN_CHAR)

DEFAULT_MAX_KEY_LEN = 32

MIN_CODE = 0
MIN_BYTE = b"\x00"


class _Bottom:
    """Singleton bound below every key."""

    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "BOTTOM"


BOTTOM = _Bottom()
TOP = b""

#: A bound is either BOTTOM or a digit-code string ("" is TOP).
Bound = Union[bytes, _Bottom]


class Cmp(enum.Enum):
    """Comparison outcomes.

    Key-versus-bound comparisons yield LE or GT; bound-versus-bound
    comparisons yield LT, EQ, or GT.
    """

    LT = "LT"
    EQ = "EQ"
    GT = "GT"
    LE = "LE"


def key_le_bound(key: bytes, bound: Bound) -> bool:
    """True iff ``key`` lies at or below ``bound`` under max-digit padding.

    Equivalent to comparing the key against the bound extended with
    infinitely many maximum digits: the first differing digit decides, and
    running out of either string means the key does not exceed the bound.
    """
    if bound is BOTTOM:
        return False
    return key[: len(bound)] <= bound


def bound_compare(key: bytes, bound: Bound) -> Cmp:
    """Compare a key against a bound: Cmp.LE or Cmp.GT."""
    return Cmp.LE if key_le_bound(key, bound) else Cmp.GT


def bound_order(c1: Bound, c2: Bound) -> Cmp:
    """Total order on bounds under max-digit padding.

    Digit-wise comparison; when one bound is a proper prefix of the other
    the shorter one is greater, because its padding is the maximum digit.
    BOTTOM is least, TOP (the empty bound) greatest.
    """
    if c1 is BOTTOM:
        return Cmp.EQ if c2 is BOTTOM else Cmp.LT
    if c2 is BOTTOM:
        return Cmp.GT
    p = min(len(c1), len(c2))
    a, b = c1[:p], c2[:p]
    if a != b:
        return Cmp.LT if a < b else Cmp.GT
    if len(c1) == len(c2):
        return Cmp.EQ
    return Cmp.GT if len(c1) < len(c2) else Cmp.LT


def common_prefix(c1: bytes, c2: bytes) -> bytes:
    """Longest common leading digit sequence of two non-BOTTOM bounds."""
    if c1 is BOTTOM or c2 is BOTTOM:
        raise ValueError("common_prefix is undefined for BOTTOM")
    n = min(len(c1), len(c2))
    i = 0
    while i < n and c1[i] == c2[i]:
        i += 1
    return c1[:i]


class Interval(NamedTuple):
    """Key interval (lower, upper]: exclusive below, inclusive under padding."""

    lower: Bound
    upper: Bound

    def contains(self, key: bytes) -> bool:
        return (not key_le_bound(key, self.lower)) and key_le_bound(key, self.upper)

    def is_valid(self) -> bool:
        return self.lower is BOTTOM or bound_order(self.lower, self.upper) is Cmp.LT


def interval_contains(iv: Interval, key: bytes) -> bool:
    """True iff ``key`` falls in ``iv`` = (lower, upper]."""
    return (not key_le_bound(key, iv.lower)) and key_le_bound(key, iv.upper)


class KeySpace:
    """Digit alphabet plus key length limit shared by one file.

    ``chars`` lists the working (non-reserved) characters in increasing
    order; the reserved minimum and maximum digits are always available on
    top of it.  All encoding, decoding, and rendering of keys and bounds
    goes through this object so that byte-level comparisons stay consistent.
    """

    __slots__ = ("chars", "max_key_len", "max_code", "_to_code", "_to_char")

    def __init__(self, chars: str = DEFAULT_CHARS, max_key_len: int = DEFAULT_MAX_KEY_LEN):
        if not chars:
            raise ValueError("alphabet must not be empty")
        if len(set(chars)) != len(chars):
            raise ValueError("alphabet characters must be unique")
        if MIN_CHAR in chars or MAX_CHAR in chars:
            raise ValueError("alphabet must not include the reserved digits")
        if any(ord(c) > 0x7F for c in chars):
            raise ValueError("alphabet characters must be ASCII")
        if max_key_len < 1:
            raise ValueError("max_key_len must be positive")
        self.chars = chars
        self.max_key_len = max_key_len
        self.max_code = len(chars) + 1
        self._to_code = {c: i + 1 for i, c in enumerate(chars)}
        self._to_code[MIN_CHAR] = MIN_CODE
        self._to_code[MAX_CHAR] = self.max_code
        self._to_char = MIN_CHAR + chars + MAX_CHAR

    def encode_key(self, text: str) -> bytes:
        """Digit codes for a key; rejects reserved digits and bad lengths."""
        if not 1 <= len(text) <= self.max_key_len:
            raise ValueError(
                f"key length must be 1..{self.max_key_len}, got {len(text)}"
            )
        codes = bytearray()
        for ch in text:
            code = self._to_code.get(ch)
            if code is None or code == MIN_CODE or code == self.max_code:
                raise ValueError(f"character {ch!r} not allowed in keys")
            codes.append(code)
        return bytes(codes)

    def decode_key(self, key: bytes) -> str:
        return "".join(self._to_char[c] for c in key)

    def encode_bound(self, text: str) -> Bound:
        """Parse the textual rendering of a bound.

        ``_`` alone is BOTTOM and ``|`` alone is TOP; anything else is a
        digit sequence, in which the minimum digit is permitted (split
        bounds may end with it) but the maximum digit is not.
        """
        if text == MIN_CHAR:
            return BOTTOM
        if text == MAX_CHAR:
            return TOP
        codes = bytearray()
        for ch in text:
            code = self._to_code.get(ch)
            if code is None or code == self.max_code:
                raise ValueError(f"character {ch!r} not allowed in bounds")
            codes.append(code)
        return bytes(codes)

    def render_bound(self, bound: Bound) -> str:
        if bound is BOTTOM:
            return MIN_CHAR
        if bound == TOP:
            return MAX_CHAR
        return "".join(self._to_char[c] for c in bound)

    def digit_char(self, code: int) -> str:
        if not 0 <= code <= self.max_code:
            raise ValueError(f"digit code {code} out of range")
        return self._to_char[code]

    def digit_code(self, ch: str) -> int:
        code = self._to_code.get(ch)
        if code is None:
            raise ValueError(f"character {ch!r} not in alphabet")
        return code
