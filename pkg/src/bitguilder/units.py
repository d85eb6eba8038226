"""Unit and dimension algebra for money-of-account quantities.

Base-unit symbols are open-ended strings (BGU, BGUA, FBGU, FBGUA, NMC,
EUR, U, ...); a dimension is a map from symbol to a signed integer
exponent, composite dimensions such as BGU/U or 1/EUR^2 included.
Quantities pair an exact :class:`~bitguilder.meadow.Rat` value with a
dimension and enforce the usual rules: addition needs equal dimensions,
multiplication and division combine exponent maps.
"""

from __future__ import annotations

import re
from typing import Iterable, Mapping

from .meadow import RAT_ONE, RAT_ZERO, Rat

__all__ = [
    "Dimension",
    "DimensionMismatch",
    "Quantity",
    "DIMENSIONLESS",
    "parse_quantity",
]

_SYMBOL = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_EXPONENT = re.compile(r"-?\d+")


class DimensionMismatch(ValueError):
    """Raised when an operation requires equal dimensions and got two different ones."""

    def __init__(self, expected: "Dimension", got: "Dimension", context: str = ""):
        self.expected = expected
        self.got = got
        msg = f"dimension mismatch: expected {expected or '1'}, got {got or '1'}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class Dimension:
    """Immutable map from unit symbol to nonzero integer exponent."""

    __slots__ = ("_exps",)

    def __init__(self, exps: Mapping[str, int] | Iterable[tuple[str, int]] = ()):
        items = dict(exps)
        cleaned = {}
        for sym, exp in items.items():
            if not isinstance(exp, int):
                raise TypeError(f"exponent for {sym!r} must be int")
            if exp != 0:
                cleaned[sym] = exp
        object.__setattr__(self, "_exps", tuple(sorted(cleaned.items())))

    def __setattr__(self, name, value):
        raise AttributeError("Dimension is immutable")

    @classmethod
    def base(cls, symbol: str) -> "Dimension":
        return cls({symbol: 1})

    @property
    def exponents(self) -> dict[str, int]:
        return dict(self._exps)

    @property
    def is_dimensionless(self) -> bool:
        return not self._exps

    def __mul__(self, other: "Dimension") -> "Dimension":
        exps = dict(self._exps)
        for sym, exp in other._exps:
            exps[sym] = exps.get(sym, 0) + exp
        return Dimension(exps)

    def __truediv__(self, other: "Dimension") -> "Dimension":
        return self * other.inverse()

    def inverse(self) -> "Dimension":
        return Dimension({sym: -exp for sym, exp in self._exps})

    def __pow__(self, n: int) -> "Dimension":
        return Dimension({sym: exp * n for sym, exp in self._exps})

    def __eq__(self, other):
        if not isinstance(other, Dimension):
            return NotImplemented
        return self._exps == other._exps

    def __hash__(self):
        return hash(self._exps)

    def __bool__(self):
        return bool(self._exps)

    def __str__(self) -> str:
        return format_unit(self)

    def __repr__(self) -> str:
        return f"Dimension({dict(self._exps)!r})"


DIMENSIONLESS = Dimension()


def format_unit(dim: Dimension) -> str:
    """Canonical unit text: ``SYM[^int]`` factors joined by ``*`` and ``/``.

    Positive-exponent factors first in symbol order, each negative factor
    appended as ``/SYM[^int]``.  A purely negative dimension starts with
    ``1`` (as in ``1/EUR^2``); dimensionless formats as the empty string.
    """
    pos = [(s, e) for s, e in dim._exps if e > 0]
    neg = [(s, e) for s, e in dim._exps if e < 0]
    if not pos and not neg:
        return ""

    def factor(sym: str, exp: int) -> str:
        return sym if exp == 1 else f"{sym}^{exp}"

    head = "*".join(factor(s, e) for s, e in pos) if pos else "1"
    tail = "".join(f"/{factor(s, -e)}" for s, e in neg)
    return head + tail


def parse_unit(text: str) -> Dimension:
    """Parse the canonical unit syntax back into a :class:`Dimension`."""
    text = text.strip()
    if not text:
        return DIMENSIONLESS
    exps: dict[str, int] = {}
    sign = 1
    pos = 0
    expect_factor = True
    while pos < len(text):
        ch = text[pos]
        if ch in "*/":
            if expect_factor:
                raise ValueError(f"unit syntax error at {pos}: unexpected {ch!r}")
            sign = -1 if ch == "/" else 1
            pos += 1
            expect_factor = True
            continue
        if ch == "1" and expect_factor:
            pos += 1
            expect_factor = False
            continue
        m = _SYMBOL.match(text, pos)
        if m is None or not expect_factor:
            raise ValueError(f"unit syntax error at {pos}: expected symbol")
        sym = m.group(0)
        pos = m.end()
        exp = 1
        if pos < len(text) and text[pos] == "^":
            m2 = _EXPONENT.match(text, pos + 1)
            if m2 is None:
                raise ValueError(f"unit syntax error at {pos}: expected exponent")
            exp = int(m2.group(0))
            pos = m2.end()
        exps[sym] = exps.get(sym, 0) + sign * exp
        expect_factor = False
    if expect_factor:
        raise ValueError("unit syntax error: dangling operator")
    return Dimension(exps)


class Quantity:
    """Exact value tagged with a dimension."""

    __slots__ = ("value", "dim")

    value: Rat
    dim: Dimension

    def __init__(self, value: Rat | int, dim: Dimension | str = DIMENSIONLESS):
        if isinstance(value, int):
            value = Rat(value)
        if isinstance(dim, str):
            dim = parse_unit(dim)
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "dim", dim)

    def __setattr__(self, name, value):
        raise AttributeError("Quantity is immutable")

    def _require_same_dim(self, other: "Quantity", context: str) -> None:
        if self.dim != other.dim:
            raise DimensionMismatch(self.dim, other.dim, context)

    def __add__(self, other):
        if not isinstance(other, Quantity):
            return NotImplemented
        self._require_same_dim(other, "addition")
        return Quantity(self.value + other.value, self.dim)

    def __sub__(self, other):
        if not isinstance(other, Quantity):
            return NotImplemented
        self._require_same_dim(other, "subtraction")
        return Quantity(self.value - other.value, self.dim)

    def __mul__(self, other):
        if isinstance(other, Quantity):
            return Quantity(self.value * other.value, self.dim * other.dim)
        if isinstance(other, (Rat, int)):
            return Quantity(self.value * other, self.dim)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Quantity):
            return Quantity(self.value / other.value, self.dim / other.dim)
        if isinstance(other, (Rat, int)):
            return Quantity(self.value / Rat(other) if isinstance(other, int) else self.value / other, self.dim)
        return NotImplemented

    def inverse(self) -> "Quantity":
        return Quantity(self.value.inverse(), self.dim.inverse())

    def __neg__(self):
        return Quantity(-self.value, self.dim)

    def __eq__(self, other):
        if not isinstance(other, Quantity):
            return NotImplemented
        return self.value == other.value and self.dim == other.dim

    def __hash__(self):
        return hash((self.value, self.dim))

    @property
    def is_dimensionless(self) -> bool:
        return self.dim.is_dimensionless

    def __str__(self) -> str:
        unit = format_unit(self.dim)
        return f"{self.value} {unit}".rstrip()

    def __repr__(self) -> str:
        return f"Quantity({self.value!r}, {format_unit(self.dim)!r})"


def parse_quantity(text: str) -> Quantity:
    """Parse canonical quantity text, ``<rat> [<unit-expr>]``."""
    parts = text.strip().split(None, 1)
    if not parts:
        raise ValueError("empty quantity")
    value = Rat.parse(parts[0])
    dim = parse_unit(parts[1]) if len(parts) > 1 else DIMENSIONLESS
    return Quantity(value, dim)
