from fractions import Fraction

import pytest

from daefix.dsl import ParseError, emit_dae, parse_dae, parse_expr
from daefix.expr import (
    Add, Const, DrivingFn, Neg, Param, Pow, StateDeriv, hod, simplify, walk,
)

PENDULUM = """\
dae pendulum
vars x, y, lambda
params G = 9.8, L = 1
eq f1: x'' + x*lambda = 0
eq f2: y'' + y*lambda - G = 0
eq f3: x^2 + y^2 - L^2 = 0
"""


def test_parse_pendulum():
    s = parse_dae(PENDULUM)
    assert s.name == "pendulum"
    assert s.var_names == ("x", "y", "lambda")
    assert s.param_values == {"G": Fraction(49, 5), "L": Fraction(1)}
    assert [e.name for e in s.equations] == ["f1", "f2", "f3"]
    f1 = s.equations[0]
    lam = StateDeriv(2)  # lambda is the third state, not a parameter
    assert simplify(f1.raw) == simplify(StateDeriv(0, 2) + StateDeriv(0) * lam)


def test_decimals_are_exact():
    s = parse_dae("dae d\nvars x\nparams a = 0.1, b = 1.23e-5\neq f1: x + a + b = 0\n")
    assert s.param_values["a"] == Fraction(1, 10)
    assert s.param_values["b"] == Fraction(123, 10 ** 7)


def test_param_without_value_and_negative_value():
    s = parse_dae("dae d\nvars x\nparams a, b = -2.5\neq f1: x*a + b = 0\n")
    assert s.param_values == {"a": None, "b": Fraction(-5, 2)}


def test_rhs_literal_zero_keeps_lhs_as_raw():
    s = parse_dae("dae d\nvars x\neq f1: x' + x = 0\n")
    raw = s.equations[0].raw
    assert isinstance(raw, Add) and not isinstance(raw, Neg)
    s2 = parse_dae("dae d\nvars x\neq f1: x' = -x\n")
    assert simplify(s2.equations[0].raw) == simplify(raw)


def test_primes_and_diff():
    s = parse_dae("dae d\nvars x\neq f1: x''' + diff(x,4) + diff(x'',3) = 0\n")
    e = s.equations[0].raw
    assert hod(e, 0, presimplify=False) == 5


def test_diff_of_compound_applies_total_derivative():
    s = parse_dae("dae d\nvars x, y\neq f1: diff(x*y,1) = 0\neq f2: x + y = 0\n")
    raw = s.equations[0].raw
    assert simplify(raw) == simplify(
        StateDeriv(0, 1) * StateDeriv(1) + StateDeriv(0) * StateDeriv(1, 1))
    # the raw tree keeps both product-rule terms even if one later cancels
    assert hod(raw, 0, presimplify=False) == 1


def test_driving_function_forms():
    s = parse_dae("dae d\nvars x\ninput h1\neq f1: x + h1(t) + h1'(t) + diff(h1(t),4) = 0\n")
    raw = s.equations[0].raw
    orders = {n.order for n in walk(raw) if isinstance(n, DrivingFn)}
    assert orders == {0, 1, 4}


def test_driving_function_requires_call_form():
    with pytest.raises(ParseError):
        parse_dae("dae d\nvars x\ninput h1\neq f1: x + h1 = 0\n")


def test_unknown_name_rejected():
    with pytest.raises(ParseError) as ei:
        parse_dae("dae d\nvars x\neq f1: x + z = 0\n")
    assert "unknown name" in str(ei.value)


def test_too_many_primes():
    with pytest.raises(ParseError):
        parse_dae("dae d\nvars x\neq f1: x'''' = 0\n")


def test_param_cannot_be_differentiated():
    with pytest.raises(ParseError):
        parse_dae("dae d\nvars x\nparams a\neq f1: x + a' = 0\n")


def test_exponent_must_be_integer():
    with pytest.raises(ParseError):
        parse_dae("dae d\nvars x\neq f1: x^1.5 = 0\n")
    with pytest.raises(ParseError):
        parse_dae("dae d\nvars x, y\neq f1: x^y = 0\neq f2: x = 0\n")


def test_negative_exponent_forms():
    s = parse_dae("dae d\nvars x\neq f1: x^-1 + x^(-2) = 0\n")
    raw = s.equations[0].raw
    exps = {n.exponent for n in walk(raw) if isinstance(n, Pow)}
    assert exps == {-1, -2}


def test_division_semantics():
    s = parse_dae("dae d\nvars x, y\neq f1: x/2 = 0\neq f2: x/y = 0\n")
    assert simplify(s.equations[0].raw) == simplify(Const(Fraction(1, 2)) * StateDeriv(0))
    assert simplify(s.equations[1].raw) == simplify(
        StateDeriv(0) * Pow(StateDeriv(1), -1))


def test_comments_and_blank_lines():
    src = "# header\ndae d  # trailing\n\nvars x\n# middle\neq f1: x = 0\n"
    s = parse_dae(src)
    assert s.name == "d"
    assert s.var_names == ("x",)


def test_square_check():
    with pytest.raises(ParseError):
        parse_dae("dae d\nvars x, y\neq f1: x + y = 0\n")


def test_duplicate_names_rejected():
    with pytest.raises(ParseError):
        parse_dae("dae d\nvars x, x\neq f1: x = 0\neq f2: x = 0\n")
    with pytest.raises(ParseError):
        parse_dae("dae d\nvars x\nparams x\neq f1: x = 0\n")


def test_reserved_names_rejected():
    with pytest.raises(ParseError):
        parse_dae("dae d\nvars sin\neq f1: sin = 0\n")
    with pytest.raises(ParseError):
        parse_dae("dae d\nvars t\neq f1: t = 0\n")


def test_error_carries_position():
    try:
        parse_dae("dae d\nvars x\neq f1: x + + = 0\n")
    except ParseError as err:
        assert err.line == 3
        assert err.col > 0
    else:
        raise AssertionError("expected ParseError")


def test_emit_round_trip_pendulum():
    s = parse_dae(PENDULUM)
    text = emit_dae(s)
    s2 = parse_dae(text)
    assert s2.name == s.name
    assert s2.var_names == s.var_names
    assert s2.param_values == s.param_values
    for a, b in zip(s.equations, s2.equations):
        assert a.name == b.name
        assert a.expr == b.expr


def test_emit_round_trip_with_inputs_and_funcs():
    src = ("dae m\nvars x1, x2\ninput h1, h2\n"
           "eq f1: x1 + exp(-x1' - x2*x2'') + h1(t) = 0\n"
           "eq f2: x1 + x2*x2' + x2^2 + h2(t) = 0\n")
    s = parse_dae(src)
    s2 = parse_dae(emit_dae(s))
    for a, b in zip(s.equations, s2.equations):
        assert a.expr == b.expr


def test_parse_expr_standalone():
    s = parse_dae(PENDULUM)
    e = parse_expr("2*x + y'' - G", s)
    assert simplify(e) == simplify(
        2 * StateDeriv(0) + StateDeriv(1, 2) - Param("G"))
    with pytest.raises(ParseError):
        parse_expr("nope", s)
