"""Exact rational arithmetic with total division.

Division here is total: ``x / 0 == 0`` and ``Rat(0).inverse() == 0``.
Every accounting formula built on top of this stays defined without
exceptional cases, while all nonzero values follow ordinary field
arithmetic over arbitrary-precision integers.
"""

from __future__ import annotations

import math
import re

__all__ = ["Rat", "RAT_ZERO", "RAT_ONE"]

_RAT_TEXT = re.compile(
    r"""\A\s*
    (?P<sign>[-+]?)
    (?P<int>\d+)
    (?:
        /(?P<den>\d+)
      |
        \.(?P<frac>\d+)
    )?
    \s*\Z""",
    re.VERBOSE,
)


class Rat:
    """Immutable rational number, kept normalized at all times.

    Normal form: ``den > 0`` and ``gcd(|num|, den) == 1``; zero is ``0/1``.
    A zero denominator is not an error: ``Rat(n, 0)`` denotes
    ``n * inverse(0)`` and therefore collapses to zero.
    """

    __slots__ = ("num", "den")

    num: int
    den: int

    def __init__(self, num: int = 0, den: int = 1):
        if isinstance(num, Rat):
            num, den2 = num.num, num.den
            den = den * den2 if den != 1 else den2
        if not isinstance(num, int) or not isinstance(den, int):
            raise TypeError(f"Rat takes integers, got {type(num).__name__}/{type(den).__name__}")
        if den == 0:
            num, den = 0, 1
        elif den < 0:
            num, den = -num, -den
        g = math.gcd(num, den)
        if g > 1:
            num //= g
            den //= g
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    def __setattr__(self, name, value):
        raise AttributeError("Rat is immutable")

    # -- construction helpers ------------------------------------------------

    @classmethod
    def parse(cls, text: str) -> "Rat":
        """Parse ``a``, ``a/b`` or a plain decimal such as ``3.4``."""
        m = _RAT_TEXT.match(text)
        if m is None:
            raise ValueError(f"not a rational literal: {text!r}")
        sign = -1 if m.group("sign") == "-" else 1
        whole = int(m.group("int"))
        if m.group("den") is not None:
            return cls(sign * whole, int(m.group("den")))
        if m.group("frac") is not None:
            frac = m.group("frac")
            scale = 10 ** len(frac)
            return cls(sign * (whole * scale + int(frac)), scale)
        return cls(sign * whole)

    # -- meadow operations ---------------------------------------------------

    def inverse(self) -> "Rat":
        """Multiplicative inverse, with ``inverse(0) == 0``."""
        if self.num == 0:
            return RAT_ZERO
        return Rat(self.den, self.num)

    def __add__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return Rat(self.num * other.den + other.num * self.den, self.den * other.den)

    __radd__ = __add__

    def __sub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return Rat(self.num * other.den - other.num * self.den, self.den * other.den)

    def __rsub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other - self

    def __mul__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return Rat(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self * other.inverse()

    def __rtruediv__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other * self.inverse()

    def __neg__(self):
        return Rat(-self.num, self.den)

    def __pos__(self):
        return self

    def __abs__(self):
        return Rat(abs(self.num), self.den)

    def __pow__(self, exponent: int):
        if not isinstance(exponent, int):
            return NotImplemented
        if exponent < 0:
            return self.inverse() ** (-exponent)
        return Rat(self.num**exponent, self.den**exponent)

    # -- comparisons ---------------------------------------------------------

    def __eq__(self, other):
        if isinstance(other, Rat):
            return self.num == other.num and self.den == other.den
        if isinstance(other, int):
            return self.den == 1 and self.num == other
        return NotImplemented

    def __hash__(self):
        if self.den == 1:
            return hash(self.num)
        return hash((self.num, self.den))

    def __lt__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self.num * other.den < other.num * self.den

    def __le__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self.num * other.den <= other.num * self.den

    def __gt__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self.num * other.den > other.num * self.den

    def __ge__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self.num * other.den >= other.num * self.den

    # -- conversions ---------------------------------------------------------

    def __bool__(self):
        return self.num != 0

    def __floor__(self) -> int:
        return self.num // self.den

    def __int__(self) -> int:
        # truncation toward zero
        q = abs(self.num) // self.den
        return -q if self.num < 0 else q

    def __float__(self) -> float:
        return self.num / self.den

    @property
    def is_integer(self) -> bool:
        return self.den == 1

    def __str__(self) -> str:
        if self.den == 1:
            return str(self.num)
        return f"{self.num}/{self.den}"

    def __repr__(self) -> str:
        return f"Rat({self.num}, {self.den})"


def _coerce(value):
    if isinstance(value, Rat):
        return value
    if isinstance(value, int):
        return Rat(value)
    return NotImplemented


RAT_ZERO = Rat(0)
RAT_ONE = Rat(1)
