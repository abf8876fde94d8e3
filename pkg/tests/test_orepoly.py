import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from flatlas import symexpr as sx
from flatlas.errors import EliminationStall, NotCompletable, NotUnimodular, UnsupportedEntry
from flatlas.implicit_system import CAR_NAMES, car_system, p_matrix
from flatlas.orepoly import (
    OreMatrix,
    OrePoly,
    hyper_regular_locus,
    kernel_completion,
    ore_apply,
    ore_mul,
    pivot_strategies,
    smith_jacobson,
    unimodular_check,
)

P = lambda t: sx.parse(t, CAR_NAMES)  # noqa: E731
X, Y, TH = sx.jet(0), sx.jet(1), sx.jet(2)
THD = sx.jet(2, 1)
S, C = sp.sin(TH), sp.cos(TH)
A = P("x'*cos(theta) + y'*sin(theta)")
F = P("x'*sin(theta) - y'*cos(theta)")
tau = OrePoly.tau()


def M_perm():
    return OreMatrix([[OrePoly([A]), OrePoly([0, S]), OrePoly([0, -C])]])


def certificate_U():
    return OreMatrix(
        [
            [OrePoly([1 / A]), OrePoly([0, -1 / A]), OrePoly([THD / A])],
            [0, OrePoly([S]), OrePoly([C])],
            [0, OrePoly([-C]), OrePoly([S])],
        ]
    )


def same(p: OrePoly, q: OrePoly) -> bool:
    return (p - q).simplified().is_zero()


def test_orepoly_basics():
    assert OrePoly([]).degree == float("-inf")
    assert OrePoly([1, 0, 0]).degree == 0
    assert tau.degree == 1 and tau.lead == 1
    assert OrePoly([X, 0, 3]).coeff(2) == 3


def test_ore_mul_examples():
    a = sx.jet(0, 0)
    assert same(tau * OrePoly([S]), OrePoly([THD * C, S]))
    ta = sx.cartan_apply(a)
    taa = sx.cartan_apply(ta)
    assert same(OrePoly.tau(2) * OrePoly([a]), OrePoly([taa, 2 * ta, a]))
    b = Y
    lhs = OrePoly([0, a]) * OrePoly([0, b])
    assert same(lhs, OrePoly([0, a * sx.cartan_apply(b), a * b]))


def test_ore_apply_examples():
    assert ore_apply(tau, X) == sx.jet(0, 1)
    assert ore_apply(OrePoly([0, S]), X) == sx.jet(0, 1) * S
    e = ore_apply(OrePoly.tau(2), X * Y)
    expect = sx.jet(0, 2) * Y + 2 * sx.jet(0, 1) * sx.jet(1, 1) + X * sx.jet(1, 2)
    assert sp.expand(e - expect) == 0


def test_decomposition_examples():
    d = smith_jacobson(OreMatrix([[1, 0]]))
    assert d.hyper_regular and d.locus == [] and d.U == OreMatrix.identity(2)
    d = smith_jacobson(OreMatrix([[tau, 1]]))
    assert d.hyper_regular and d.locus == []
    assert d.U == OreMatrix([[0, 1], [1, -tau]])
    assert (OreMatrix([[tau, 1]]) @ d.U).simplified() == OreMatrix([[1, 0]])


def test_car_decomposition_and_certificate():
    M = p_matrix(car_system())
    d = smith_jacobson(M, [F])
    assert d.hyper_regular
    assert len(d.locus) == 1
    assert sx.is_zero_modulo(d.locus[0] - A) or sx.is_zero_modulo(d.locus[0] + A)
    assert (M @ d.U - OreMatrix([[1, 0, 0]])).is_zero_modulo([F])
    # the certificate lives on the permuted matrix; rows (theta, x, y) map to (x, y, theta)
    Up = certificate_U()
    rows = [Up.entries[1], Up.entries[2], Up.entries[0]]
    assert (M @ OreMatrix(rows) - OreMatrix([[1, 0, 0]])).is_zero_modulo([F])
    ok, _ = unimodular_check(d.U)
    assert ok


def test_unimodular_examples():
    ok, V = unimodular_check(OreMatrix.identity(3))
    assert ok and V == OreMatrix.identity(3)
    ok, V = unimodular_check(OreMatrix([[0, 1], [1, -tau]]))
    assert ok and V == OreMatrix([[tau, 1], [1, 0]])
    with pytest.raises(NotUnimodular):
        unimodular_check(OreMatrix([[tau, 0], [0, 1]]))
    with pytest.raises(ValueError):
        unimodular_check(OreMatrix([[1, 0]]))


def test_locus_examples():
    assert hyper_regular_locus(OreMatrix([[1, 0]])).locus == []
    rep = hyper_regular_locus(p_matrix(car_system()), constraints=[F])
    assert len(rep.results) == 6
    for dec in rep.results:
        assert dec.hyper_regular
        assert len(dec.locus) == 1
        g = dec.locus[0]
        assert sx.is_zero_modulo(g - A) or sx.is_zero_modulo(g + A)
    rep = hyper_regular_locus(OreMatrix([[OrePoly([0, X]), 1]]))
    assert rep.locus == [] and rep.best.hyper_regular
    with pytest.raises(ValueError):
        hyper_regular_locus(OreMatrix([[1, 0]]), 0)


def test_pivot_strategies_bounded():
    assert len(pivot_strategies(3)) == 6
    perms = pivot_strategies(6, rng=np.random.default_rng(0))
    assert len(perms) == 24 and perms[0] == tuple(range(6)) and len(set(perms)) == 24


def test_stall_and_fragment_errors():
    with pytest.raises(EliminationStall):
        smith_jacobson(OreMatrix([[0, 0]]))
    with pytest.raises(UnsupportedEntry):
        smith_jacobson(OreMatrix([[OrePoly([sp.exp(X)]), 1]]))


def test_kernel_completion_examples():
    U = kernel_completion(OreMatrix([[tau, 1]]), OreMatrix([[1], [-tau]]))
    assert U == OreMatrix([[0, 1], [1, -tau]])
    U = kernel_completion(OreMatrix([[1, 0]]), OreMatrix([[0], [1]]))
    assert U == OreMatrix.identity(2)
    Up = certificate_U()
    U = kernel_completion(M_perm(), Up.columns([1, 2]), [F])
    assert (U - Up).simplified() == OreMatrix.zeros(3, 3)
    with pytest.raises(NotCompletable):
        kernel_completion(OreMatrix([[tau, 1]]), OreMatrix([[1], [1]]))


def test_json_roundtrip():
    M = p_matrix(car_system())
    d = M.to_json(CAR_NAMES)
    assert d["entries"][0][0] == ["0", "sin(theta)"]
    assert OreMatrix.from_json(d, CAR_NAMES) == M


# ------------------------------------------------------------------ ring properties

COEFFS = [X, Y, S, C, THD, sx.jet(0, 1), sp.Integer(1), sp.Integer(-2), X * C + Y]


def polys():
    return st.lists(st.sampled_from(COEFFS), min_size=1, max_size=3).map(OrePoly)


def _bind(rng):
    return {sx.jet(i, k): float(rng.uniform(-2, 2)) for i in range(3) for k in range(sx.R_MAX + 1)}


def _close(e1, e2, rng):
    for _ in range(3):
        b = _bind(rng)
        a1, a2 = sx.evaluate(e1, b), sx.evaluate(e2, b)
        if abs(a1 - a2) > 1e-9 * max(1.0, abs(a1)):
            return False
    return True


@settings(max_examples=50, deadline=None)
@given(polys(), polys(), polys(), st.integers(0, 2**31))
def test_ring_axioms(p, q, r, seed):
    rng = np.random.default_rng(seed)
    probe = Y
    lhs = ore_apply((p * q) * r, probe)
    rhs = ore_apply(p * (q * r), probe)
    assert _close(lhs, rhs, rng)
    assert _close(ore_apply(p * (q + r), probe), ore_apply(p * q + p * r, probe), rng)
    assert _close(ore_apply((p + q) * r, probe), ore_apply(p * r + q * r, probe), rng)
    assert _close(ore_apply(p * q, probe), ore_apply(p, ore_apply(q, probe)), rng)
