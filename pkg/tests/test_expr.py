"""Expression parsing, printing, and evaluation.

The evaluation oracle below is a separate straight-line interpreter over
Fraction values and plain exponent dictionaries; it shares no code with
the engine under test.
"""

import random
from fractions import Fraction

import pytest

from bitguilder.expr import (
    Add,
    Const,
    Div,
    ExprSyntaxError,
    Inv,
    Mul,
    Neg,
    Sub,
    UnboundVariable,
    Var,
    eval_expr,
    format_expr,
    free_variables,
    parse_expr,
)
from bitguilder.meadow import Rat
from bitguilder.units import DimensionMismatch, Quantity, parse_unit


# -- independent oracle -------------------------------------------------------


def oracle_eval(node, env):
    """Straight-line evaluator: (Fraction, {symbol: exp}) pairs."""
    if isinstance(node, Const):
        return Fraction(node.value.num, node.value.den), {}
    if isinstance(node, Var):
        q = env[node.name]
        return Fraction(q.value.num, q.value.den), dict(q.dim.exponents)
    if isinstance(node, Neg):
        value, dim = oracle_eval(node.operand, env)
        return -value, dim
    if isinstance(node, Inv):
        value, dim = oracle_eval(node.operand, env)
        inv = Fraction(0) if value == 0 else 1 / value
        return inv, {k: -v for k, v in dim.items()}
    left_v, left_d = oracle_eval(node.left, env)
    right_v, right_d = oracle_eval(node.right, env)
    if isinstance(node, (Add, Sub)):
        assert left_d == right_d, "oracle: dimension mismatch"
        return (left_v + right_v) if isinstance(node, Add) else (left_v - right_v), left_d
    merged = dict(left_d)
    sign = 1 if isinstance(node, Mul) else -1
    for key, exp in right_d.items():
        merged[key] = merged.get(key, 0) + sign * exp
        if merged[key] == 0:
            del merged[key]
    if isinstance(node, Mul):
        return left_v * right_v, merged
    return (Fraction(0) if right_v == 0 else left_v / right_v), merged


def random_parseable_tree(rng, depth=0):
    """Trees built only from constructs the parser itself can produce."""
    if depth > 4 or rng.random() < 0.3:
        if rng.random() < 0.5:
            return Const(Rat(rng.randint(0, 50)))
        return Var(rng.choice("abcxyz"))
    kind = rng.choice([Add, Sub, Mul, Div, Neg])
    if kind is Neg:
        return Neg(random_parseable_tree(rng, depth + 1))
    return kind(random_parseable_tree(rng, depth + 1), random_parseable_tree(rng, depth + 1))


# -- parsing ------------------------------------------------------------------


def test_parse_division_node_not_literal():
    tree = parse_expr("1/0")
    assert tree == Div(Const(Rat(1)), Const(Rat(0)))
    assert eval_expr(tree).value == Rat(0)


def test_parse_example_with_variables():
    tree = parse_expr("(a + 2)/b")
    env = {"a": Quantity(Rat(4)), "b": Quantity(Rat(3))}
    assert eval_expr(tree, env) == Quantity(Rat(2))


def test_syntax_error_offset_and_expected():
    with pytest.raises(ExprSyntaxError) as err:
        parse_expr("1 +")
    assert err.value.offset == 3
    assert "INT" in err.value.expected and "IDENT" in err.value.expected

    with pytest.raises(ExprSyntaxError) as err:
        parse_expr("(a + 2")
    assert err.value.offset == 6

    with pytest.raises(ExprSyntaxError) as err:
        parse_expr("2 @ 3")
    assert err.value.offset == 2


def test_precedence_and_associativity():
    # '/' binds like '*', both left-associative
    assert parse_expr("6/3*2") == Mul(Div(Const(Rat(6)), Const(Rat(3))), Const(Rat(2)))
    assert eval_expr(parse_expr("6/3*2")).value == Rat(4)
    assert parse_expr("1 - 2 - 3") == Sub(Sub(Const(Rat(1)), Const(Rat(2))), Const(Rat(3)))
    assert parse_expr("2 + 3*4") == Add(Const(Rat(2)), Mul(Const(Rat(3)), Const(Rat(4))))
    assert parse_expr("-2*x") == Mul(Neg(Const(Rat(2))), Var("x"))


def test_roundtrip_on_generated_trees():
    rng = random.Random(505)
    for _ in range(1_000):
        tree = random_parseable_tree(rng)
        assert parse_expr(format_expr(tree)) == tree


def test_rational_constants_print_as_divisions():
    tree = Const(Rat(5, 6))
    printed = format_expr(tree)
    assert printed == "5/6"
    reparsed = parse_expr(printed)
    assert eval_expr(reparsed) == eval_expr(tree)
    # inverse nodes have no surface syntax but reparse value-equal
    inv = Inv(Var("x"))
    env = {"x": Quantity(Rat(4), "BGU")}
    assert eval_expr(parse_expr(format_expr(inv)), env) == eval_expr(inv, env)


# -- evaluation ----------------------------------------------------------------


def test_eval_units_flow_through():
    env = {"q": Quantity(Rat(3), "BGU"), "v": Quantity(Rat(1), "BGUA/BGU")}
    result = eval_expr(parse_expr("q * v"), env)
    assert result == Quantity(Rat(3), "BGUA")


def test_eval_dimension_mismatch_is_reported():
    env = {"a": Quantity(Rat(1), "BGU"), "b": Quantity(Rat(1), "NMC")}
    with pytest.raises(DimensionMismatch):
        eval_expr(parse_expr("a + b"), env)


def test_eval_dimensionless_ratio():
    env = {"e": Quantity(Rat(6), "BGU/U"), "C": Quantity(Rat(2), "BGU/U")}
    result = eval_expr(parse_expr("e / C"), env)
    assert result.is_dimensionless and result.value == Rat(3)


def test_eval_unbound_variable():
    with pytest.raises(UnboundVariable):
        eval_expr(parse_expr("missing + 1"))
    assert free_variables(parse_expr("(a + b)*a - 2")) == {"a", "b"}


def test_eval_agrees_with_independent_interpreter():
    rng = random.Random(606)
    units = ["", "BGU", "NMC", "BGU/U", "EUR"]
    checked = 0
    while checked < 1_000:
        tree = random_parseable_tree(rng)
        env = {
            name: Quantity(Rat(rng.randint(-20, 20), rng.randint(1, 9)), parse_unit(rng.choice(units)))
            for name in free_variables(tree)
        }
        try:
            expected_value, expected_dim = oracle_eval(tree, env)
        except AssertionError:
            with pytest.raises(DimensionMismatch):
                eval_expr(tree, env)
            continue
        result = eval_expr(tree, env)
        assert Fraction(result.value.num, result.value.den) == expected_value
        assert result.dim.exponents == expected_dim
        checked += 1
