"""Skew polynomials in the total-derivative operator and matrices over them.

Coefficients are symbolic expressions; multiplication follows the commutation
rule ``tau * a = a * tau + cartan(a)``.  The elimination routines work with
column operations only, so that ``M @ U = [Delta | 0]`` with ``U`` built as a
product of elementary right factors.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Sequence

import numpy as np
import sympy as sp

from . import symexpr as sx
from .errors import EliminationStall, NotCompletable, NotUnimodular


def _coerce(c) -> sp.Expr:
    return sp.sympify(c)


class OrePoly:
    """Polynomial ``sum_k coeffs[k] * tau**k`` with coefficients on the left."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable = ()):
        cs = [_coerce(c) for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        self.coeffs: tuple = tuple(cs)

    @classmethod
    def const(cls, c) -> "OrePoly":
        return cls([c])

    @classmethod
    def tau(cls, k: int = 1, coeff=1) -> "OrePoly":
        return cls([0] * k + [coeff])

    @property
    def degree(self) -> float:
        return len(self.coeffs) - 1 if self.coeffs else float("-inf")

    @property
    def lead(self) -> sp.Expr:
        return self.coeffs[-1] if self.coeffs else sp.S.Zero

    def is_zero(self) -> bool:
        return not self.coeffs

    def coeff(self, k: int) -> sp.Expr:
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else sp.S.Zero

    def map(self, f) -> "OrePoly":
        return OrePoly(f(c) for c in self.coeffs)

    def simplified(self) -> "OrePoly":
        return self.map(sx.simplify)

    def __add__(self, other):
        other = _as_poly(other)
        n = max(len(self.coeffs), len(other.coeffs))
        return OrePoly(self.coeff(k) + other.coeff(k) for k in range(n))

    __radd__ = __add__

    def __neg__(self):
        return self.map(lambda c: -c)

    def __sub__(self, other):
        return self + (-_as_poly(other))

    def __rsub__(self, other):
        return _as_poly(other) - self

    def __mul__(self, other):
        return ore_mul(self, _as_poly(other))

    def __rmul__(self, other):
        return ore_mul(_as_poly(other), self)

    def __eq__(self, other):
        if not isinstance(other, OrePoly):
            try:
                other = _as_poly(other)
            except (TypeError, sp.SympifyError):
                return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __call__(self, e):
        return ore_apply(self, e)

    def node_count(self) -> int:
        return sum(sx.node_count(c) for c in self.coeffs)

    def to_strings(self, names=None) -> list[str]:
        return [sx.to_text(c, names) for c in self.coeffs]

    def __repr__(self):
        if not self.coeffs:
            return "0"
        terms = []
        for k, c in enumerate(self.coeffs):
            if c == 0:
                continue
            t = "" if k == 0 else ("tau" if k == 1 else f"tau^{k}")
            terms.append(f"({c})*{t}" if t else f"({c})")
        return " + ".join(terms)


def _as_poly(x) -> OrePoly:
    return x if isinstance(x, OrePoly) else OrePoly([x])


def tau_power_times(i: int, b: sp.Expr, r_max: int = sx.R_MAX) -> list:
    """Coefficients of ``tau**i * b`` = sum_k C(i, k) cartan^(i-k)(b) tau**k."""
    derivs = [b]
    for _ in range(i):
        derivs.append(sx.cartan_apply(derivs[-1], r_max))
    return [comb(i, k) * derivs[i - k] for k in range(i + 1)]


def ore_mul(p: OrePoly, q: OrePoly, r_max: int = sx.R_MAX) -> OrePoly:
    """Product ``p * q`` in the skew ring."""
    if p.is_zero() or q.is_zero():
        return OrePoly()
    out = [sp.S.Zero] * (len(p.coeffs) + len(q.coeffs) - 1)
    for i, a in enumerate(p.coeffs):
        if a == 0:
            continue
        for j, b in enumerate(q.coeffs):
            if b == 0:
                continue
            for k, c in enumerate(tau_power_times(i, b, r_max)):
                out[k + j] += a * c
    return OrePoly(out)


def ore_apply(p: OrePoly, e, r_max: int = sx.R_MAX) -> sp.Expr:
    """Action on a scalar: ``sum_k coeff_k * cartan^k(e)``."""
    e = _coerce(e)
    out = sp.S.Zero
    d = e
    for k, c in enumerate(p.coeffs):
        if k:
            d = sx.cartan_apply(d, r_max)
        out += c * d
    return out


# --------------------------------------------------------------------------
# matrices


class OreMatrix:
    """Dense rectangular matrix of OrePoly entries."""

    __slots__ = ("entries",)

    def __init__(self, entries: Sequence[Sequence]):
        rows = tuple(tuple(_as_poly(x) for x in row) for row in entries)
        if not rows or not rows[0] or any(len(r) != len(rows[0]) for r in rows):
            raise ValueError("OreMatrix needs a non-empty rectangular grid")
        self.entries = rows

    @property
    def rows(self) -> int:
        return len(self.entries)

    @property
    def cols(self) -> int:
        return len(self.entries[0])

    @property
    def shape(self) -> tuple:
        return self.rows, self.cols

    @classmethod
    def identity(cls, n: int) -> "OreMatrix":
        return cls([[1 if i == j else 0 for j in range(n)] for i in range(n)])

    @classmethod
    def zeros(cls, r: int, c: int) -> "OreMatrix":
        return cls([[0] * c for _ in range(r)])

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def column(self, j: int) -> list:
        return [row[j] for row in self.entries]

    def columns(self, js: Iterable[int]) -> "OreMatrix":
        js = list(js)
        return OreMatrix([[row[j] for j in js] for row in self.entries])

    def row_block(self, rs: Iterable[int]) -> "OreMatrix":
        return OreMatrix([self.entries[i] for i in rs])

    def hstack(self, other: "OreMatrix") -> "OreMatrix":
        return OreMatrix([a + b for a, b in zip(self.entries, other.entries)])

    def __matmul__(self, other: "OreMatrix") -> "OreMatrix":
        if self.cols != other.rows:
            raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
        out = []
        for i in range(self.rows):
            row = []
            for j in range(other.cols):
                acc = OrePoly()
                for k in range(self.cols):
                    acc = acc + ore_mul(self.entries[i][k], other.entries[k][j])
                row.append(acc)
            out.append(row)
        return OreMatrix(out)

    def __sub__(self, other: "OreMatrix") -> "OreMatrix":
        return OreMatrix([[a - b for a, b in zip(r1, r2)] for r1, r2 in zip(self.entries, other.entries)])

    def __eq__(self, other):
        return isinstance(other, OreMatrix) and self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def simplified(self) -> "OreMatrix":
        return OreMatrix([[p.simplified() for p in row] for row in self.entries])

    def max_degree(self) -> float:
        return max(p.degree for row in self.entries for p in row)

    def coefficients(self) -> list:
        return [c for row in self.entries for p in row for c in p.coeffs]

    def is_zero_modulo(self, constraints=(), trials=8, tol=1e-9, **kw) -> bool:
        return all(sx.is_zero_modulo(c, constraints, trials, tol, **kw) for c in self.coefficients())

    def max_residual(self, bindings: Iterable[dict]) -> float:
        """Largest absolute coefficient value over the given jet bindings."""
        worst = 0.0
        coeffs = [sx.simplify(c) for c in self.coefficients()]
        for b in bindings:
            for c in coeffs:
                worst = max(worst, abs(sx.evaluate(c, b)))
        return worst

    def numeric_symbol(self, b: dict, lam: float) -> np.ndarray:
        """Commutative evaluation: coefficients at ``b``, tau replaced by the scalar ``lam``."""
        return np.array(
            [[sum(sx.evaluate(c, b) * lam**k for k, c in enumerate(p.coeffs)) for p in row] for row in self.entries]
        )

    def to_json(self, names=None) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "entries": [[p.to_strings(names) for p in row] for row in self.entries],
        }

    @classmethod
    def from_json(cls, data, names=None, params=None) -> "OreMatrix":
        if isinstance(data, str):
            data = json.loads(data)
        ents = data["entries"]
        m = cls([[OrePoly(sx.parse(c, names, params) for c in p) for p in row] for row in ents])
        if m.rows != data.get("rows", m.rows) or m.cols != data.get("cols", m.cols):
            raise ValueError("rows/cols do not match entries")
        return m

    def __repr__(self):
        return "OreMatrix(" + repr([[repr(p) for p in row] for row in self.entries]) + ")"


# --------------------------------------------------------------------------
# elimination


@dataclass
class DecompositionResult:
    U: OreMatrix
    Delta: OreMatrix
    locus: list
    hyper_regular: bool
    strategy: tuple = ()
    notes: list = field(default_factory=list)


class _Eliminator:
    """Column reduction of ``A = M @ U`` keeping ``U`` in step."""

    def __init__(self, M: OreMatrix, constraints, priority, rng, degree_cap=None):
        self.A = [list(r) for r in M.simplified().entries]
        self.n = M.cols
        self.U = [list(r) for r in OreMatrix.identity(self.n).entries]
        self.constraints = list(constraints)
        self.priority = priority
        self.rng = rng
        self.locus: list = []
        cap_deg = max(M.max_degree(), 0)
        self.cap = degree_cap if degree_cap is not None else int(2 * cap_deg * min(M.rows, M.cols) + 2)

    # -- helpers
    def is_zero(self, p: OrePoly) -> bool:
        if p.is_zero():
            return True
        if not self.constraints:
            return False
        return all(
            sx.is_zero_modulo(c, self.constraints, rng=self.rng) for c in p.coeffs
        )

    def record(self, a: sp.Expr):
        num = sx.numerator(a)
        if num.is_number:
            return
        self.locus.append(num)

    def swap(self, i, j):
        if i == j:
            return
        for mat in (self.A, self.U):
            for row in mat:
                row[i], row[j] = row[j], row[i]

    def add_multiple(self, target, source, q: OrePoly):
        """column[target] -= column[source] * q"""
        for mat in (self.A, self.U):
            for row in mat:
                if row[source].is_zero():
                    continue
                row[target] = (row[target] - ore_mul(row[source], q)).simplified()
                if row[target].degree > self.cap:
                    raise EliminationStall(f"degree cap {self.cap} exceeded")

    def scale(self, j, s: sp.Expr):
        """column[j] = column[j] * s"""
        q = OrePoly.const(s)
        for mat in (self.A, self.U):
            for row in mat:
                row[j] = ore_mul(row[j], q).simplified()

    def left_divide(self, p: OrePoly, b: OrePoly) -> tuple:
        """Find q, r with b = p*q + r and deg r < deg p."""
        q = OrePoly()
        r = b
        d = p.degree
        lead = p.lead
        if not r.is_zero() and r.degree >= d:
            self.record(lead)
        guard = 0
        while not r.is_zero() and r.degree >= d:
            guard += 1
            if guard > self.cap + 4:
                raise EliminationStall("division did not terminate")
            k = int(r.degree - d)
            term = OrePoly.tau(k, sx.simplify(r.lead / lead))
            q = q + term
            r = (r - ore_mul(p, term)).simplified()
            if not r.is_zero() and self.is_zero(OrePoly([r.lead])):
                r = OrePoly(r.coeffs[:-1])
        return q, r

    def pick(self, row, cols):
        cands = [j for j in cols if not self.is_zero(self.A[row][j])]
        if not cands:
            return None
        return min(cands, key=lambda j: self.priority(self.A[row][j], j))

    # -- main loop
    def run(self, rows: int):
        deltas_ok = True
        for r in range(rows):
            # Euclid on columns r.. of row r
            while True:
                j = self.pick(r, range(r, self.n))
                if j is None:
                    raise EliminationStall(f"row {r} vanishes: structurally degenerate")
                self.swap(r, j)
                piv = self.A[r][r]
                rest = [c for c in range(r + 1, self.n) if not self.A[r][c].is_zero()]
                if not rest:
                    break
                for c in rest:
                    q, _ = self.left_divide(piv, self.A[r][c])
                    self.add_multiple(c, r, q)
                    if not self.A[r][c].is_zero() and self.is_zero(self.A[r][c]):
                        self.A[r][c] = OrePoly()
            piv = self.A[r][r]
            if piv.degree == 0:
                a = piv.lead
                self.record(a)
                self.scale(r, sx.simplify(1 / a))
                # clear the part left of the pivot
                for c in range(r):
                    if not self.A[r][c].is_zero():
                        self.add_multiple(c, r, self.A[r][c])
            else:
                deltas_ok = False
                for c in range(r):
                    if self.A[r][c].is_zero():
                        continue
                    q, rem = self.left_divide(piv, self.A[r][c])
                    self.add_multiple(c, r, q)
        return deltas_ok


def default_priority(p: OrePoly, j: int) -> tuple:
    return (p.degree, p.node_count(), j)


def permutation_priority(perm: Sequence[int]):
    rank = {c: i for i, c in enumerate(perm)}

    def key(p: OrePoly, j: int) -> tuple:
        return (p.degree, rank.get(j, j), p.node_count())

    return key


def _dedup(exprs, constraints, rng) -> list:
    out = []
    for g in exprs:
        g = sx.simplify(g)
        dup = False
        for h in out:
            if sx.is_zero_modulo(g - h, rng=rng) or sx.is_zero_modulo(g + h, rng=rng):
                dup = True
                break
        if not dup:
            out.append(g)
    return out


def smith_jacobson(
    M: OreMatrix,
    constraints: Sequence = (),
    *,
    priority=default_priority,
    rng: np.random.Generator | None = None,
    degree_cap: int | None = None,
) -> DecompositionResult:
    """Diagonal decomposition ``M @ U = [Delta | 0]`` by column operations.

    Every division by a pivot coefficient records its numerator in
    ``locus``.  ``constraints`` lets coefficients vanishing on the system's
    zero set count as zero when choosing pivots.
    """
    if M.rows > M.cols:
        raise ValueError("smith_jacobson needs rows <= cols")
    for c in M.coefficients():
        sx.check_fragment(c)
    rng = rng if rng is not None else np.random.default_rng(0)
    el = _Eliminator(M, constraints, priority, rng, degree_cap)
    ok = el.run(M.rows)
    A = OreMatrix(el.A)
    Delta = A.columns(range(M.rows))
    U = OreMatrix(el.U)
    if ok:
        for i in range(M.rows):
            for j in range(M.rows):
                expect = 1 if i == j else 0
                if Delta[i, j] != OrePoly.const(expect):
                    ok = False
    return DecompositionResult(U, Delta, _dedup(el.locus, constraints, rng), ok)


def unimodular_check(
    U: OreMatrix,
    trials: int = 8,
    tol: float = 1e-9,
    *,
    rng: np.random.Generator | None = None,
    sampler: sx.Sampler | None = None,
) -> tuple:
    """Two-sided inverse of a square matrix by Ore-Gaussian elimination.

    Returns ``(verified, V)``.  Raises NotUnimodular when elimination hits a
    pivot of positive degree or a vanishing pivot.  ``sampler`` restricts
    the jets used to verify ``U V = V U = I``.
    """
    if U.rows != U.cols:
        raise ValueError("unimodular_check needs a square matrix")
    rng = rng if rng is not None else np.random.default_rng(0)
    try:
        dec = smith_jacobson(U, rng=rng)
    except EliminationStall as exc:
        raise NotUnimodular(str(exc)) from None
    if not dec.hyper_regular:
        raise NotUnimodular("a diagonal entry has positive degree")
    V = dec.U
    eye = OreMatrix.identity(U.rows)
    verified = all(
        (X - eye).is_zero_modulo(trials=trials, tol=tol, rng=rng, sampler=sampler) for X in (U @ V, V @ U)
    )
    return verified, V


def pivot_strategies(cols: int, limit: int | None = None, rng: np.random.Generator | None = None) -> list:
    """Column orders tried by :func:`hyper_regular_locus`; the natural order is first."""
    if cols <= 4:
        perms = list(itertools.permutations(range(cols)))
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        perms = [tuple(range(cols))]
        seen = set(perms)
        tries = 0
        while len(perms) < 24 and tries < 1000:
            tries += 1
            p = tuple(int(i) for i in rng.permutation(cols))
            if p not in seen:
                seen.add(p)
                perms.append(p)
    return perms[:limit] if limit else perms


def _subset(a, b, rng) -> bool:
    return all(any(sx.is_zero_modulo(g - h, rng=rng) or sx.is_zero_modulo(g + h, rng=rng) for h in b) for g in a)


@dataclass
class LocusReport:
    locus: list
    best: DecompositionResult
    results: list


def hyper_regular_locus(
    M: OreMatrix,
    pivot_strategies_n: int | None = None,
    constraints: Sequence = (),
    *,
    rng: np.random.Generator | None = None,
) -> LocusReport:
    """Smallest exceptional locus over several pivot orderings.

    The returned generators describe an outer approximation of the set where
    ``M`` fails to be hyper-regular; every decomposition is kept in
    ``results`` for diagnostics.
    """
    if pivot_strategies_n is not None and pivot_strategies_n < 1:
        raise ValueError("pivot_strategies must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    results = []
    for perm in pivot_strategies(M.cols, pivot_strategies_n, rng):
        dec = smith_jacobson(M, constraints, priority=permutation_priority(perm), rng=rng)
        dec.strategy = perm
        results.append(dec)
    # hyper-regular decompositions first, then inclusion-minimal loci, then size
    best = None
    for dec in results:
        if best is None:
            best = dec
            continue
        if dec.hyper_regular and not best.hyper_regular:
            best = dec
        elif dec.hyper_regular == best.hyper_regular:
            if _subset(dec.locus, best.locus, rng) and not _subset(best.locus, dec.locus, rng):
                best = dec
    return LocusReport(list(best.locus), best, results)


def kernel_completion(
    M: OreMatrix,
    K: OreMatrix,
    constraints: Sequence = (),
    *,
    rng: np.random.Generator | None = None,
) -> OreMatrix:
    """Unimodular ``U`` whose trailing columns are ``K`` and with ``M @ U = [I | 0]``."""
    rng = rng if rng is not None else np.random.default_rng(0)
    r = M.rows
    if K.rows != M.cols or K.cols != M.cols - r:
        raise NotCompletable(f"kernel block must be {M.cols}x{M.cols - r}")
    if not (M @ K).is_zero_modulo(constraints, rng=rng):
        raise NotCompletable("M @ K does not vanish")
    syms = sorted(set().union(*(c.free_symbols for c in K.coefficients())) or set(), key=lambda s: s.name)
    for _ in range(20):
        b = sx.uniform_binding(syms, rng)
        try:
            sym = K.numeric_symbol(b, float(rng.uniform(-2, 2)))
        except sx.DomainError:
            continue
        if np.linalg.matrix_rank(sym) < K.cols:
            raise NotCompletable("kernel columns are dependent")
        break
    dec = smith_jacobson(M, constraints, rng=rng)
    if not dec.hyper_regular:
        raise NotCompletable("M is not hyper-regular")
    U0 = dec.U
    try:
        ok, V0 = unimodular_check(U0, rng=rng)
    except NotUnimodular as exc:
        raise NotCompletable(str(exc)) from None
    Y = (V0.row_block(range(r, M.cols)) @ K).simplified()
    try:
        unimodular_check(Y, rng=rng)
    except NotUnimodular:
        raise NotCompletable("K does not complete to a unimodular matrix") from None
    U = U0.columns(range(r)).hstack(K).simplified()
    ok, _ = unimodular_check(U, rng=rng)
    if not ok:
        raise NotCompletable("completion failed verification")
    return U
