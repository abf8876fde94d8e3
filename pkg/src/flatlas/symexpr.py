"""Expressions over jet coordinates.

A jet coordinate ``x_i^(k)`` is a sympy ``Symbol`` whose name encodes the
family letter, the 1-based index and the derivative order: ``x1``, ``x1'``,
``x1''``, ``x1^(3)``.  The ``x`` family holds system states, ``u`` inputs and
``z`` flat outputs.  sympy supplies the tree, automatic flattening/sorting and
rational folding; everything jet-specific (total derivative, evaluation with
pole detection, randomized zero testing, text syntax) lives here.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping

import numpy as np
import sympy as sp
from sympy.printing.str import StrPrinter

from .errors import (
    DomainError,
    ParseError,
    SamplingFailure,
    TruncationOverflow,
    UnboundVariable,
    UnsupportedEntry,
)

R_MAX = 6
FAMILIES = ("x", "u", "z")

Expr = sp.Expr
Binding = Mapping[sp.Symbol, float]
Sampler = Callable[[np.random.Generator, int], dict]

_NAME_RE = re.compile(r"^([a-z])(\d+)(?:('*)|\^\((\d+)\))$")


@dataclass(frozen=True, order=True)
class Var:
    """Jet coordinate ``family{base_index+1}`` differentiated ``deriv_order`` times."""

    base_index: int
    deriv_order: int = 0
    family: str = "x"

    @property
    def name(self) -> str:
        return jet_name(self.family, self.base_index, self.deriv_order)

    @property
    def symbol(self) -> sp.Symbol:
        return sp.Symbol(self.name)

    def shifted(self, by: int = 1) -> "Var":
        return Var(self.base_index, self.deriv_order + by, self.family)


def jet_name(family: str, index: int, order: int) -> str:
    if order <= 2:
        return f"{family}{index + 1}" + "'" * order
    return f"{family}{index + 1}^({order})"


def jet(index: int, order: int = 0, family: str = "x") -> sp.Symbol:
    """Symbol for the jet coordinate ``family_{index}^(order)`` (0-based index)."""
    return sp.Symbol(jet_name(family, index, order))


@lru_cache(maxsize=None)
def var_of(sym: sp.Symbol) -> Var | None:
    """Inverse of :func:`jet`; ``None`` for symbols that are not jet coordinates."""
    m = _NAME_RE.match(sym.name)
    if not m or m.group(1) not in FAMILIES:
        return None
    family, idx, primes, order = m.groups()
    k = int(order) if order is not None else len(primes or "")
    return Var(int(idx) - 1, k, family)


def jet_symbols(e: Expr) -> list[sp.Symbol]:
    return sorted((s for s in e.free_symbols if var_of(s) is not None), key=lambda s: var_of(s))


def max_order(exprs: Iterable[Expr], family: str | None = None) -> int:
    """Highest derivative order appearing in ``exprs`` (-1 if none)."""
    k = -1
    for e in exprs:
        for s in sp.sympify(e).free_symbols:
            v = var_of(s)
            if v is not None and (family is None or v.family == family):
                k = max(k, v.deriv_order)
    return k


# --------------------------------------------------------------------------
# fragment check

_ALLOWED_FUNCS = (sp.sin, sp.cos, sp.tan, sp.atan, sp.atan2, sp.Abs)


def check_fragment(e: Expr) -> None:
    """Raise UnsupportedEntry unless ``e`` is in the trig-rational fragment."""
    for node in sp.preorder_traversal(e):
        if isinstance(node, (sp.Symbol, sp.Add, sp.Mul, sp.Pow)):
            continue
        if node.is_Number:
            if not node.is_finite or not node.is_real:
                raise UnsupportedEntry(f"non-finite constant {node}")
            continue
        if node in (sp.pi, sp.E):
            continue
        if isinstance(node, _ALLOWED_FUNCS):
            continue
        raise UnsupportedEntry(f"unsupported node {node.func.__name__} in {e}")


# --------------------------------------------------------------------------
# evaluation


@lru_cache(maxsize=4096)
def _compiled(e: Expr, syms: tuple) -> Callable:
    return sp.lambdify(syms, e, modules="math")


def evaluate(e: Expr, b: Binding) -> float:
    """Numeric value of ``e`` under binding ``b``.

    Raises DomainError at poles and negative square roots instead of
    returning inf/nan.
    """
    e = sp.sympify(e)
    syms = tuple(sorted(e.free_symbols, key=lambda s: s.name))
    missing = [s.name for s in syms if s not in b]
    if missing:
        raise UnboundVariable(f"unbound: {', '.join(missing)}")
    vals = [float(b[s]) for s in syms]
    if any(math.isnan(v) for v in vals):
        raise UnboundVariable("binding holds nan for a needed coordinate")
    try:
        out = _compiled(e, syms)(*vals)
    except (ZeroDivisionError, ValueError) as exc:
        raise DomainError(f"{e}: {exc}") from None
    except OverflowError as exc:
        raise DomainError(f"{e}: {exc}") from None
    if isinstance(out, complex):
        raise DomainError(f"{e}: complex value")
    out = float(out)
    if not math.isfinite(out):
        raise DomainError(f"{e}: non-finite value")
    return out


def pole_expressions(e: Expr) -> list[Expr]:
    """Expressions whose vanishing makes ``e`` singular (denominators, tan poles, sqrt branch points)."""
    out = []
    for node in sp.preorder_traversal(e):
        if isinstance(node, sp.Pow) and node.exp.is_number:
            if node.exp.is_negative:
                out.append(node.base)
            elif not node.exp.is_integer:
                out.append(node.base)
        elif isinstance(node, sp.tan):
            out.append(sp.cos(node.args[0]))
    return out


# --------------------------------------------------------------------------
# differentiation


def partial(e: Expr, v: Var | sp.Symbol) -> Expr:
    sym = v.symbol if isinstance(v, Var) else v
    return sp.diff(e, sym)


def cartan_apply(e: Expr, r_max: int = R_MAX) -> Expr:
    """Total time derivative: sum over jet coordinates of next-coordinate times partial."""
    e = sp.sympify(e)
    out = sp.S.Zero
    for s in jet_symbols(e):
        v = var_of(s)
        if v.deriv_order + 1 > r_max:
            raise TruncationOverflow(f"{s} would need order {v.deriv_order + 1} > {r_max}")
        out += v.shifted().symbol * sp.diff(e, s)
    return out


def cartan_power(e: Expr, k: int, r_max: int = R_MAX) -> Expr:
    for _ in range(k):
        e = cartan_apply(e, r_max)
    return e


# --------------------------------------------------------------------------
# simplification


def _pythagorean(e: Expr, target) -> Expr:
    """Rewrite even powers of ``target`` (cos or sin) via sin^2 + cos^2 = 1."""
    other = sp.sin if target is sp.cos else sp.cos

    def match(node):
        return (
            isinstance(node, sp.Pow)
            and isinstance(node.base, target)
            and node.exp.is_Integer
            and node.exp >= 2
            and node.exp % 2 == 0
        )

    def rewrite(node):
        return (1 - other(node.base.args[0]) ** 2) ** (node.exp // 2)

    return e.replace(match, rewrite)


def _size(e: Expr) -> tuple:
    return (sp.count_ops(e), len(str(e)))


@lru_cache(maxsize=8192)
def _simplify_cached(e: Expr) -> Expr:
    if e.is_Number or e.is_Symbol:
        return e
    candidates = [e]
    try:
        c = sp.cancel(e)
        candidates.append(c)
        if e.has(sp.sin, sp.cos):
            for t in (sp.cos, sp.sin):
                candidates.append(sp.cancel(sp.expand(_pythagorean(c, t))))
    except (sp.PolynomialError, TypeError):
        pass
    return min(candidates, key=_size)


def simplify(e: Expr) -> Expr:
    """Cheap normal form: rational cancellation plus the sin^2+cos^2 rule."""
    return _simplify_cached(sp.sympify(e))


def numerator(e: Expr) -> Expr:
    num, _ = sp.fraction(sp.together(e))
    return simplify(num)


def node_count(e: Expr) -> int:
    return sum(1 for _ in sp.preorder_traversal(e))


# --------------------------------------------------------------------------
# randomized zero testing

SAMPLE_LOW, SAMPLE_HIGH = -2.0, 2.0
POLE_GUARD = 1e-3


def uniform_binding(syms: Iterable[sp.Symbol], rng: np.random.Generator) -> dict:
    return {s: float(rng.uniform(SAMPLE_LOW, SAMPLE_HIGH)) for s in syms}


def near_pole(poles: Iterable[Expr], b: Binding, guard: float = POLE_GUARD) -> bool:
    for p in poles:
        try:
            if abs(evaluate(p, b)) < guard:
                return True
        except DomainError:
            return True
    return False


def prolonged(constraints: Iterable[Expr], order: int, r_max: int = R_MAX) -> list[Expr]:
    """Constraints together with their total derivatives up to jet order ``order``."""
    out = []
    for c in constraints:
        c = sp.sympify(c)
        out.append(c)
        k = max_order([c])
        while k < order and k + 1 <= r_max:
            c = cartan_apply(c, r_max)
            k += 1
            out.append(c)
    return out


def newton_sampler(constraints: list[Expr], max_iter: int = 40, tol: float = 1e-13) -> Sampler:
    """Random jets projected onto the common zero set of ``constraints`` (minimum-norm Gauss-Newton)."""

    def sample(rng: np.random.Generator, order: int) -> dict:
        cons = prolonged(constraints, order)
        syms = sorted(set().union(*(c.free_symbols for c in cons)), key=lambda s: s.name)
        if not syms:
            return {}
        jac = sp.Matrix(cons).jacobian(syms)
        fres = sp.lambdify(syms, cons, modules="math")
        fjac = sp.lambdify(syms, jac.tolist(), modules="math")
        v = rng.uniform(SAMPLE_LOW, SAMPLE_HIGH, len(syms))
        for _ in range(max_iter):
            try:
                r = np.asarray(fres(*v), dtype=float)
                if np.max(np.abs(r)) < tol:
                    return dict(zip(syms, map(float, v)))
                J = np.asarray(fjac(*v), dtype=float)
            except (ZeroDivisionError, ValueError, OverflowError):
                break
            v = v - np.linalg.lstsq(J, r, rcond=None)[0]
        raise SamplingFailure("Newton projection did not converge")

    return sample


def is_zero_modulo(
    e: Expr,
    constraints: Iterable[Expr] = (),
    trials: int = 8,
    tol: float = 1e-9,
    *,
    sampler: Sampler | None = None,
    rng: np.random.Generator | None = None,
    max_attempts: int | None = None,
) -> bool:
    """Probabilistic test that ``e`` vanishes on the zero set of ``constraints``.

    Jets are drawn from ``sampler`` (defaulting to Newton projection onto the
    prolonged constraints, or uniform sampling when there are none) and
    points within ``POLE_GUARD`` of a pole of ``e`` are rejected.  A ``True``
    answer is correct with high probability, never with certainty.
    """
    if trials < 1 or tol <= 0:
        raise ValueError("trials must be >= 1 and tol > 0")
    e = sp.sympify(e)
    constraints = [sp.sympify(c) for c in constraints]
    if e == 0:
        return True
    rng = rng if rng is not None else np.random.default_rng(0)
    if sampler is None and constraints:
        sampler = newton_sampler(constraints)
    order = max(max_order([e]), max_order(constraints), 0)
    poles = pole_expressions(e)
    esyms = e.free_symbols
    hits = 0
    attempts = 0
    limit = max_attempts or 50 * trials
    while hits < trials:
        attempts += 1
        if attempts > limit:
            raise SamplingFailure(f"no admissible sample after {limit} attempts")
        try:
            b = dict(sampler(rng, order)) if sampler is not None else {}
        except SamplingFailure:
            continue
        free = [s for s in esyms if s not in b]
        b.update(uniform_binding(sorted(free, key=lambda s: s.name), rng))
        if near_pole(poles, b):
            continue
        try:
            val = evaluate(e, b)
        except DomainError:
            continue
        if abs(val) >= tol:
            return False
        hits += 1
    return True


# --------------------------------------------------------------------------
# text syntax

_FUNCS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "atan": sp.atan,
    "atan2": sp.atan2,
    "sqrt": sp.sqrt,
    "abs": sp.Abs,
    "Abs": sp.Abs,
}
_CONSTS = {"pi": sp.pi, "E": sp.E}

_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<num>\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)
      | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<op>\*\*|[-+*/^(),'])
    )""",
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text, names, params):
        self.toks = _tokenize(text)
        self.i = 0
        self.names = names or {}
        self.params = params or {}

    def peek(self, k=0):
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            raise ParseError(f"expected {value!r}, got {tok[1]!r}")
        self.i += 1
        return tok

    def parse(self):
        e = self.expr()
        if self.peek()[0] is not None:
            raise ParseError(f"trailing input at token {self.peek()[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            e = e * rhs if op == "*" else e / rhs
        return e

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return -self.unary()
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] in ("**", "^"):
            self.take()
            return base ** self.unary()
        return base

    def _jet_symbol(self, name):
        canon = self.names.get(name, name)
        m = re.fullmatch(r"([a-z])(\d+)", canon)
        if not m or m.group(1) not in FAMILIES or int(m.group(2)) < 1:
            return None
        order = 0
        while self.peek()[1] == "'":
            self.take()
            order += 1
        if (
            order == 0
            and self.peek()[1] == "^"
            and self.peek(1)[1] == "("
            and self.peek(2)[0] == "num"
            and self.peek(2)[1].isdigit()
            and self.peek(3)[1] == ")"
        ):
            self.i += 2
            order = int(self.take()[1])
            self.take(")")
        return jet(int(m.group(2)) - 1, order, m.group(1))

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return sp.Integer(val) if val.isdigit() else sp.Float(val)
        if kind == "name":
            self.take()
            if self.peek()[1] == "(" and val in _FUNCS:
                self.take("(")
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take(",")
                    args.append(self.expr())
                self.take(")")
                try:
                    return _FUNCS[val](*args)
                except TypeError as exc:
                    raise ParseError(f"bad call to {val}: {exc}") from None
            if val in self.params:
                return sp.Rational(str(self.params[val]))
            if val in _CONSTS:
                return _CONSTS[val]
            sym = self._jet_symbol(val)
            if sym is None:
                raise ParseError(f"unknown name {val!r}")
            return sym
        if val == "(":
            self.take("(")
            e = self.expr()
            self.take(")")
            return e
        raise ParseError(f"unexpected token {val!r}")


def parse(text: str, names: Mapping[str, str] | None = None, params: Mapping[str, float] | None = None) -> Expr:
    """Parse the infix text syntax.

    ``names`` maps aliases to canonical coordinates (``{"theta": "x3"}``),
    ``params`` substitutes numeric parameters (``{"l": 2.0}``).
    """
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty expression")
    return sp.sympify(_Parser(text, names, params).parse())


class _JetPrinter(StrPrinter):
    def __init__(self, aliases=None):
        super().__init__()
        self.aliases = aliases or {}

    def _print_Symbol(self, expr):
        v = var_of(expr)
        if v is None or not self.aliases:
            return expr.name
        base = self.aliases.get(f"{v.family}{v.base_index + 1}")
        if base is None:
            return expr.name
        if v.deriv_order <= 2:
            return base + "'" * v.deriv_order
        return f"{base}^({v.deriv_order})"


def to_text(e: Expr, names: Mapping[str, str] | None = None) -> str:
    """Print ``e`` in the text syntax; with ``names`` the aliases are used."""
    aliases = {canon: alias for alias, canon in (names or {}).items()}
    return _JetPrinter(aliases).doprint(sp.sympify(e))
