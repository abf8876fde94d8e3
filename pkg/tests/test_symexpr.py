import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from flatlas import symexpr as sx
from flatlas.errors import DomainError, ParseError, SamplingFailure, TruncationOverflow, UnboundVariable, UnsupportedEntry
from flatlas.implicit_system import CAR_NAMES

P = lambda t: sx.parse(t, CAR_NAMES)  # noqa: E731
X, Y, TH = sx.jet(0), sx.jet(1), sx.jet(2)
XD, YD, THD = sx.jet(0, 1), sx.jet(1, 1), sx.jet(2, 1)
F = P("x'*sin(theta) - y'*cos(theta)")


def test_jet_names_roundtrip():
    assert sx.jet(0, 3).name == "x1^(3)"
    assert sx.jet(2, 2, "z").name == "z3''"
    v = sx.var_of(sx.jet(1, 2))
    assert (v.base_index, v.deriv_order, v.family) == (1, 2, "x")
    assert sx.var_of(sp.Symbol("l")) is None
    assert sx.Var(0, 1).shifted() == sx.Var(0, 2)


def test_evaluate_examples():
    assert abs(sx.evaluate(F, {XD: 1, YD: 1, TH: math.pi / 4})) < 1e-15
    assert sx.evaluate(sp.Integer(0), {}) == 0
    with pytest.raises(DomainError):
        sx.evaluate(1 / XD, {XD: 0.0})
    with pytest.raises(DomainError):
        sx.evaluate(sp.sqrt(XD), {XD: -1.0})
    with pytest.raises(UnboundVariable):
        sx.evaluate(F, {XD: 1.0})


def test_partial_examples():
    assert sx.simplify(sx.partial(F, TH) - P("x'*cos(theta) + y'*sin(theta)")) == 0
    assert sx.partial(XD * sp.sin(TH), XD) == sp.sin(TH)
    assert sx.partial(X**2, Y) == 0


def test_cartan_examples():
    assert sx.cartan_apply(X) == XD
    expect = P("x''*sin(theta) + x'*theta'*cos(theta) - y''*cos(theta) + y'*theta'*sin(theta)")
    assert sp.expand(sx.cartan_apply(F) - expect) == 0
    assert sx.cartan_apply(sp.Integer(5)) == 0
    with pytest.raises(TruncationOverflow):
        sx.cartan_apply(sx.jet(0, sx.R_MAX))
    assert sx.cartan_power(X, 3) == sx.jet(0, 3)


def test_simplify_examples():
    assert sx.simplify(sp.sin(TH) ** 2 + sp.cos(TH) ** 2) == 1
    assert sx.simplify(XD * sp.cos(TH) * 0 + YD) == YD
    assert sx.simplify((XD**2 + YD**2) / XD - XD) == YD**2 / XD


def test_fragment_rejects_exp():
    sx.check_fragment(sp.atan2(YD, XD) + sp.tan(TH))
    with pytest.raises(UnsupportedEntry):
        sx.check_fragment(sp.exp(X))


def test_is_zero_modulo_examples():
    assert sx.is_zero_modulo(F, [F])
    assert not sx.is_zero_modulo(XD, [F])
    assert sx.is_zero_modulo(sp.Integer(0), [])
    assert sx.is_zero_modulo(sp.sin(X) ** 2 + sp.cos(X) ** 2 - 1)
    with pytest.raises(ValueError):
        sx.is_zero_modulo(X, trials=0)


def test_is_zero_modulo_sampling_failure():
    def never(rng, order):
        raise SamplingFailure("no")

    with pytest.raises(SamplingFailure):
        sx.is_zero_modulo(X, sampler=never, trials=2)


def test_parse_and_print():
    e = sx.parse("x1^(3) + atan2(x2', x1') * sqrt(x1'') - x1**2")
    assert sx.jet(0, 3) in e.free_symbols
    assert sx.parse(sx.to_text(e)) == e
    assert sx.to_text(F, CAR_NAMES) == "x'*sin(theta) - y'*cos(theta)"
    assert sx.parse("l*x1", params={"l": 2.0}) == 2 * X
    with pytest.raises(ParseError):
        sx.parse("sin(x1")
    with pytest.raises(ParseError):
        sx.parse("x1 $ 2")


# ------------------------------------------------------------------ properties

LEAVES = [X, Y, TH, XD, YD, THD, sp.Integer(2), sp.Rational(1, 3)]


def exprs(depth=3):
    leaf = st.sampled_from(LEAVES)
    return st.recursive(
        leaf,
        lambda c: st.one_of(
            st.tuples(c, c).map(lambda t: t[0] + t[1]),
            st.tuples(c, c).map(lambda t: t[0] * t[1]),
            c.map(sp.sin),
            c.map(sp.cos),
        ),
        max_leaves=6,
    )


def _binding(rng, order=2):
    return {sx.jet(i, k): float(rng.uniform(-2, 2)) for i in range(3) for k in range(order + 1)}


@settings(max_examples=40, deadline=None)
@given(exprs(), exprs(), st.integers(0, 2**31))
def test_partial_leibniz(e, f, seed):
    rng = np.random.default_rng(seed)
    for v in (X, TH, XD):
        lhs = sx.partial(e * f, v)
        rhs = sx.partial(e, v) * f + e * sx.partial(f, v)
        for _ in range(8):
            b = _binding(rng)
            assert abs(sx.evaluate(lhs, b) - sx.evaluate(rhs, b)) < 1e-9 * max(1, abs(sx.evaluate(lhs, b)))


@settings(max_examples=40, deadline=None)
@given(exprs(), st.integers(0, 2**31))
def test_simplify_preserves_value(e, seed):
    rng = np.random.default_rng(seed)
    s = sx.simplify(e)
    for _ in range(8):
        b = _binding(rng)
        a = sx.evaluate(e, b)
        assert abs(a - sx.evaluate(s, b)) < 1e-9 * max(1, abs(a))


@settings(max_examples=30, deadline=None)
@given(exprs(), st.integers(0, 2**31))
def test_cartan_is_time_derivative(e, seed):
    # polynomial curve x_i(t) = sum c_ik t^k / k!, whose jet at t is exact
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1, 1, size=(3, 5))

    def jet_at(t):
        b = {}
        for i in range(3):
            for k in range(3):
                b[sx.jet(i, k)] = sum(c[i, q] * t ** (q - k) / math.factorial(q - k) for q in range(k, 5))
        return b

    h = 1e-5
    de = sx.cartan_apply(e)
    if not de.free_symbols <= set(jet_at(0)):
        return
    fd = (sx.evaluate(e, jet_at(h)) - sx.evaluate(e, jet_at(-h))) / (2 * h)
    assert abs(fd - sx.evaluate(de, jet_at(0.0))) < 1e-6 * max(1, abs(fd))


@settings(max_examples=30, deadline=None)
@given(exprs(), st.integers(0, 2**31))
def test_cartan_partial_commutation(e, seed):
    # d/dx^(k+1) of tau(e) = d/dx^(k) e + tau(d/dx^(k+1) e)
    rng = np.random.default_rng(seed)
    te = sx.cartan_apply(e)
    for i in range(3):
        for k in range(2):
            lhs = sx.partial(te, sx.jet(i, k + 1))
            rhs = sx.partial(e, sx.jet(i, k)) + sx.cartan_apply(sx.partial(e, sx.jet(i, k + 1)))
            b = _binding(rng, 3)
            assert abs(sx.evaluate(lhs, b) - sx.evaluate(rhs, b)) < 1e-9
