import math

import numpy as np
import pytest

from fracdiff.expressions import ExpressionError, expression_parse


def test_spec_examples():
    assert expression_parse("0")() == 0.0
    assert expression_parse("enzyme(u)")(u=1.0) == pytest.approx(-0.5)
    assert expression_parse("u*(1-u-0.5*v)")(u=1.0, v=0.0) == pytest.approx(0.0)


def test_arithmetic_and_precedence():
    ev = expression_parse("1+2*3-4/2")
    assert ev() == pytest.approx(5.0)
    assert expression_parse("2^3^2")() == pytest.approx(512.0)  # right-assoc
    assert expression_parse("-2^2")() == pytest.approx(-4.0)
    assert expression_parse("2^-1")() == pytest.approx(0.5)
    assert expression_parse("(1+2)*(3-1)")() == pytest.approx(6.0)
    assert expression_parse("--3")() == pytest.approx(3.0)


def test_functions_and_variables():
    ev = expression_parse("sin(x)^2 + cos(x)^2")
    xs = np.linspace(0.0, math.pi, 11)
    assert np.allclose(ev(x=xs), 1.0)
    assert expression_parse("exp(t)")(t=1.0) == pytest.approx(math.e)
    assert expression_parse("abs(-u)")(u=0.3) == pytest.approx(0.3)
    assert expression_parse("enzyme(-u)")(u=1.0) == pytest.approx(0.5)


def test_numbers():
    assert expression_parse("1e2")() == 100.0
    assert expression_parse(".5")() == 0.5
    assert expression_parse("2.5e-1")() == 0.25
    assert expression_parse("3.")() == 3.0


def test_names_attribute():
    assert expression_parse("1+2").names == frozenset()
    assert expression_parse("x*t").names == {"x", "t"}
    assert expression_parse("enzyme(u)").names == {"u"}
    assert expression_parse("u*(1-u-0.5*v)").names == {"u", "v"}


def test_broadcasting():
    ev = expression_parse("0")
    xs = np.linspace(0.0, 1.0, 5)
    out = ev(x=xs)
    assert out.shape == xs.shape and np.all(out == 0.0)
    ev2 = expression_parse("x+t")
    assert np.allclose(ev2(x=xs, t=1.0), xs + 1.0)


@pytest.mark.parametrize(
    "text,pos",
    [
        ("1+", 2),
        ("(1+2", 4),
        ("1+*2", 2),
        ("foo(1)", 0),
        ("sin x", 4),
        ("1 $ 2", 2),
        ("1 2", 2),
        ("w+1", 0),
    ],
)
def test_errors_carry_position(text, pos):
    with pytest.raises(ExpressionError) as exc:
        expression_parse(text)
    assert exc.value.position == pos
    assert str(pos) in str(exc.value)


def test_non_string_rejected():
    with pytest.raises(TypeError):
        expression_parse(42)
