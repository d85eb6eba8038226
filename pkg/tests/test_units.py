"""Dimension algebra and quantity arithmetic."""

import pytest

from bitguilder.meadow import Rat
from bitguilder.units import (
    DIMENSIONLESS,
    Dimension,
    DimensionMismatch,
    Quantity,
    format_unit,
    parse_quantity,
    parse_unit,
)


def test_dimension_algebra():
    bgu = Dimension.base("BGU")
    u = Dimension.base("U")
    rate = bgu / u
    assert rate.exponents == {"BGU": 1, "U": -1}
    assert (rate * u) == bgu
    assert (bgu / bgu).is_dimensionless
    assert rate.inverse().exponents == {"BGU": -1, "U": 1}
    assert (bgu**2).exponents == {"BGU": 2}
    assert Dimension({"EUR": 0}) == DIMENSIONLESS


def test_unit_text_roundtrip():
    cases = ["BGU", "BGUA/BGU", "1/EUR^2", "BGU/U", "BGU^2*U/EUR^3", "NMC"]
    for text in cases:
        assert format_unit(parse_unit(text)) == text
    assert parse_unit("") == DIMENSIONLESS
    assert format_unit(DIMENSIONLESS) == ""
    with pytest.raises(ValueError):
        parse_unit("BGU//U")
    with pytest.raises(ValueError):
        parse_unit("BGU^")


def test_quantity_addition_requires_equal_dims():
    a = Quantity(Rat(3), "BGU")
    b = Quantity(Rat(4), "NMC")
    with pytest.raises(DimensionMismatch):
        a + b
    assert (a + Quantity(Rat(1), "BGU")).value == Rat(4)


def test_quantity_multiplication_combines_dims():
    q = Quantity(Rat(3), "BGU")
    v = Quantity(Rat(1), "BGUA/BGU")
    product = q * v
    assert product == Quantity(Rat(3), "BGUA")
    ratio = Quantity(Rat(6), "BGU/U") / Quantity(Rat(2), "BGU/U")
    assert ratio.is_dimensionless and ratio.value == Rat(3)


def test_quantity_meadow_division():
    zero = Quantity(Rat(0), "BGU")
    something = Quantity(Rat(5), "NMC")
    quotient = something / zero
    assert quotient.value == Rat(0)
    assert quotient.dim == parse_unit("NMC/BGU")


def test_quantity_text():
    assert str(Quantity(Rat(5, 2), "BGU")) == "5/2 BGU"
    assert str(Quantity(Rat(7))) == "7"
    assert parse_quantity("3 BGUA/BGU") == Quantity(Rat(3), "BGUA/BGU")
    assert parse_quantity("-2/3 FBGU") == Quantity(Rat(-2, 3), "FBGU")
    assert parse_quantity("4") == Quantity(Rat(4))


def test_open_ended_symbols():
    exotic = parse_unit("FBGUA*BTC/U")
    assert exotic.exponents == {"FBGUA": 1, "BTC": 1, "U": -1}
