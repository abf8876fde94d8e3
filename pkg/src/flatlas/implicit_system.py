"""Implicit systems F(x, x') = 0, their variational matrix and jet samplers."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import sympy as sp
from scipy.optimize import least_squares

from . import symexpr as sx
from .errors import (
    NoExplicitForm,
    SamplingFailure,
    TruncationOverflow,
)
from .orepoly import OreMatrix, OrePoly

MEMBERSHIP_TOL = 1e-9
FIBER_RESIDUAL = 1e-7


@dataclass(frozen=True)
class JetPoint:
    """Truncated jet: ``values[i, k]`` is ``x_i^(k)``; nan marks unknown entries."""

    values: np.ndarray
    family: str = "x"

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def order(self) -> int:
        return self.values.shape[1] - 1

    def __getitem__(self, ik):
        return self.values[ik]

    def binding(self) -> dict:
        return {
            sx.jet(i, k, self.family): float(self.values[i, k])
            for i in range(self.n)
            for k in range(self.order + 1)
            if not math.isnan(self.values[i, k])
        }

    def truncated(self, order: int) -> "JetPoint":
        return JetPoint(self.values[:, : order + 1], self.family)

    @classmethod
    def from_binding(cls, b: Mapping, n: int, order: int, family: str = "x") -> "JetPoint":
        vals = np.full((n, order + 1), np.nan)
        for s, v in b.items():
            var = sx.var_of(s)
            if var is not None and var.family == family and var.base_index < n and var.deriv_order <= order:
                vals[var.base_index, var.deriv_order] = v
        return cls(vals, family)


@dataclass(frozen=True, eq=False)
class ImplicitSystem:
    n: int
    m: int
    F: tuple
    explicit: tuple | None = None
    names: Mapping[str, str] = field(default_factory=dict)
    params: Mapping[str, float] = field(default_factory=dict)
    name: str = "custom"
    angular: tuple = ()
    input_bounds: tuple | None = None
    fiber_rule: Callable | None = None

    def __post_init__(self):
        if not (self.n > self.m >= 1):
            raise ValueError("need n > m >= 1")
        F = tuple(sp.sympify(f) for f in self.F)
        if len(F) != self.n - self.m:
            raise ValueError(f"F must have n - m = {self.n - self.m} components")
        if sx.max_order(F) > 1:
            raise ValueError("F may only involve jet orders 0 and 1")
        object.__setattr__(self, "F", F)
        if self.explicit is not None:
            ex = tuple(sp.sympify(f) for f in self.explicit)
            if len(ex) != self.n:
                raise ValueError("explicit form needs n components")
            object.__setattr__(self, "explicit", ex)
        object.__setattr__(self, "_cache", {})

    # -- naming
    def state_symbol(self, i: int, k: int = 0) -> sp.Symbol:
        return sx.jet(i, k, "x")

    def alias(self, family: str, i: int) -> str:
        canon = f"{family}{i + 1}"
        for a, c in self.names.items():
            if c == canon:
                return a
        return canon

    def parse(self, text: str) -> sp.Expr:
        return sx.parse(text, self.names, self.params)

    def text(self, e) -> str:
        return sx.to_text(e, self.names)

    # -- explicit model prolongation
    def _explicit_jet_exprs(self, order: int):
        """Symbolic ``x_i^(k)``, k = 1..order, in terms of x and input jets."""
        cached = sorted(k for k in self._cache.get("xjet", {}) if k >= order)
        if cached:
            return self._cache["xjet"][cached[0]]
        if self.explicit is None:
            raise NoExplicitForm(f"system {self.name} has no explicit form")
        xs = [sx.jet(i, 0) for i in range(self.n)]

        def D(e):
            out = sp.S.Zero
            for i, x in enumerate(xs):
                d = sp.diff(e, x)
                if d != 0:
                    out += d * self.explicit[i]
            for s in e.free_symbols:
                v = sx.var_of(s)
                if v is not None and v.family == "u":
                    out += sp.diff(e, s) * v.shifted().symbol
            return out

        levels = [list(self.explicit)]
        for _ in range(order - 1):
            levels.append([D(e) for e in levels[-1]])
        usyms = [sx.jet(j, k, "u") for j in range(self.m) for k in range(max(order, 1))]
        args = xs + usyms
        flat = [e for lvl in levels for e in lvl]
        fn = sp.lambdify(args, flat, modules="math", cse=True)
        poles = []
        for e in self.explicit:
            poles.extend(sx.pole_expressions(e))
        entry = (fn, args, poles, order)
        self._cache.setdefault("xjet", {})[order] = entry
        return entry

    def sample_explicit(self, rng: np.random.Generator, order: int, *, inputs: np.ndarray | None = None,
                        state: np.ndarray | None = None, max_tries: int = 200):
        """Random point of the zero set from the explicit model.

        Draws the state, the inputs and their derivatives, then prolongs the
        explicit equations.  Returns ``(JetPoint, input jet array m x order)``.
        """
        order = max(order, 1)
        fn, args, poles, built = self._explicit_jet_exprs(order)
        for _ in range(max_tries):
            x0 = state if state is not None else rng.uniform(sx.SAMPLE_LOW, sx.SAMPLE_HIGH, self.n)
            if inputs is not None:
                uj = np.zeros((self.m, built))
                given = np.asarray(inputs, dtype=float).reshape(self.m, -1)[:, :built]
                uj[:, : given.shape[1]] = given
            else:
                uj = rng.uniform(sx.SAMPLE_LOW, sx.SAMPLE_HIGH, (self.m, built))
                if self.input_bounds is not None:
                    for j, (lo, hi) in enumerate(self.input_bounds):
                        uj[j, 0] = rng.uniform(lo, hi)
            b = {sx.jet(i, 0): float(x0[i]) for i in range(self.n)}
            b.update({sx.jet(j, k, "u"): float(uj[j, k]) for j in range(self.m) for k in range(built)})
            if sx.near_pole(poles, b):
                if inputs is not None:
                    raise SamplingFailure("requested inputs sit on a pole of the explicit model")
                continue
            try:
                vals = fn(*[b[a] for a in args])
            except (ZeroDivisionError, ValueError, OverflowError):
                continue
            vals = np.asarray(vals, dtype=float).reshape(built, self.n)[:order]
            if not np.all(np.isfinite(vals)):
                continue
            jet_vals = np.column_stack([x0, vals.T])
            return JetPoint(jet_vals), uj[:, :order]
        raise SamplingFailure("explicit model sampling failed")

    def sampler(self) -> sx.Sampler:
        """Binding sampler on the zero set, for :func:`symexpr.is_zero_modulo`."""
        if self.explicit is None:
            return sx.newton_sampler(list(self.F))

        def sample(rng, order):
            jp, uj = self.sample_explicit(rng, max(order, 1))
            b = jp.binding()
            b.update({sx.jet(j, k, "u"): float(uj[j, k]) for j in range(self.m) for k in range(uj.shape[1])})
            return b

        return sample

    def explicit_consistent(self, trials: int = 8, rng=None) -> bool:
        """Substituting x' = f(x, u) into F gives an identity in (x, u)."""
        if self.explicit is None:
            raise NoExplicitForm(self.name)
        subs = {sx.jet(i, 1): self.explicit[i] for i in range(self.n)}
        return all(sx.is_zero_modulo(sx.simplify(f.xreplace(subs)), trials=trials, rng=rng) for f in self.F)


# --------------------------------------------------------------------------
# operations


def p_matrix(sys: ImplicitSystem) -> OreMatrix:
    """Variational matrix dF/dx + dF/dx' tau."""
    rows = []
    for f in sys.F:
        row = []
        for i in range(sys.n):
            c0 = sx.simplify(sx.partial(f, sx.jet(i, 0)))
            c1 = sx.simplify(sx.partial(f, sx.jet(i, 1)))
            row.append(OrePoly([c0, c1]))
        rows.append(row)
    return OreMatrix(rows)


def prolong(sys: ImplicitSystem, k: int, r_max: int = sx.R_MAX) -> list:
    """F and its total derivatives up to order k, simplified."""
    if k + 1 > r_max:
        raise TruncationOverflow(f"prolongation order {k} needs jets of order {k + 1} > {r_max}")
    out = []
    for f in sys.F:
        e = f
        out.append(sx.simplify(e))
        for _ in range(k):
            e = sx.cartan_apply(e, r_max)
            out.append(sx.simplify(e))
    return out


def zero_set_member(sys: ImplicitSystem, j: JetPoint, k: int = 0, tol: float = MEMBERSHIP_TOL) -> bool:
    if j.order < k + 1:
        raise TruncationOverflow(f"jet of order {j.order} cannot check prolongation {k}")
    b = j.binding()
    return all(abs(sx.evaluate(c, b)) < tol for c in prolong(sys, k))


def car_fiber_rule(j: JetPoint, tol: float = MEMBERSHIP_TOL) -> bool:
    xd, yd, thd = j[0, 1], j[1, 1], j[2, 1]
    th = j[2, 0]
    if abs(xd * math.sin(th) - yd * math.cos(th)) >= tol:
        return False
    return not (abs(xd) <= tol and abs(yd) <= tol and abs(thd) > tol)


def fiber_check(sys: ImplicitSystem, j: JetPoint, tol: float = MEMBERSHIP_TOL, *, rng=None,
                starts: int = 8) -> bool:
    """Whether some input u realises the velocities of ``j`` through the explicit model."""
    if sys.explicit is None:
        raise NoExplicitForm(f"system {sys.name} has no explicit form")
    if sys.fiber_rule is not None:
        return bool(sys.fiber_rule(j, tol))
    rng = rng if rng is not None else np.random.default_rng(0)
    usyms = [sx.jet(r, 0, "u") for r in range(sys.m)]
    xb = {sx.jet(i, 0): float(j[i, 0]) for i in range(sys.n)}
    fx = [sp.lambdify(usyms, f.xreplace(xb), modules="math") for f in sys.explicit]
    target = j.values[:, 1]

    def resid(u):
        try:
            return np.array([f(*u) for f in fx]) - target
        except (ZeroDivisionError, ValueError, OverflowError):
            return np.full(sys.n, 1e6)

    for _ in range(starts):
        u0 = rng.uniform(sx.SAMPLE_LOW, sx.SAMPLE_HIGH, sys.m)
        sol = least_squares(resid, u0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if np.linalg.norm(sol.fun) < FIBER_RESIDUAL:
            return True
    return False


def resolve_locus(sys: ImplicitSystem, locus: Sequence, *, rng=None, samples: int = 6) -> dict:
    """Describe {locus = 0, F = 0} through the velocities it forces to zero.

    Handles generators that are linear homogeneous in the velocities: a
    square block of constant nonzero determinant (with zeros elsewhere in
    its rows) forces its velocities to vanish.  With an explicit model the
    remaining velocities are tested numerically for vanishing whenever the
    forced ones do.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    eqs = [sx.simplify(g) for g in locus] + list(sys.F)
    vel = [sx.jet(i, 1) for i in range(sys.n)]
    zero = {v: 0 for v in vel}
    linear = all(
        sx.simplify(e.xreplace(zero)) == 0
        and all(sx.simplify(sp.diff(e, a, b)) == 0 for a in vel for b in vel)
        for e in eqs
    )
    result = {"linear_in_velocities": linear, "forced_zero": [], "description": None}
    if not linear or not locus:
        return result
    C = sp.Matrix([[sx.simplify(sp.diff(e, v)) for v in vel] for e in eqs])
    forced = set()
    dets = []
    for size in range(1, min(len(eqs), sys.n) + 1):
        for rows in itertools.combinations(range(len(eqs)), size):
            for cols in itertools.combinations(range(sys.n), size):
                others = [c for c in range(sys.n) if c not in cols]
                if any(C[r, c] != 0 for r in rows for c in others):
                    continue
                det = sx.simplify(C.extract(list(rows), list(cols)).det())
                if det.is_number and det != 0:
                    forced.update(cols)
                    dets.append(sx.to_text(det))
    if sys.explicit is not None and forced:
        forced |= _implied_by_explicit(sys, sorted(forced), rng, samples)
    names = [f"{sys.alias('x', i)}dot" for i in sorted(forced)]
    result["forced_zero"] = names
    result["determinants"] = dets
    if names:
        result["description"] = "=".join(names) + "=0"
    return result


def _implied_by_explicit(sys, forced, rng, samples) -> set:
    usyms = [sx.jet(r, 0, "u") for r in range(sys.m)]
    rest = [i for i in range(sys.n) if i not in forced]
    implied = set(rest)
    for _ in range(samples):
        x0 = {sx.jet(i, 0): float(rng.uniform(sx.SAMPLE_LOW, sx.SAMPLE_HIGH)) for i in range(sys.n)}
        fs = [sp.lambdify(usyms, sys.explicit[i].xreplace(x0), modules="math") for i in range(sys.n)]

        def resid(u):
            try:
                return np.array([fs[i](*u) for i in forced])
            except (ZeroDivisionError, ValueError, OverflowError):
                return np.full(len(forced), 1e6)

        for _ in range(4):
            u0 = rng.uniform(-1.0, 1.0, sys.m)
            sol = least_squares(resid, u0, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15)
            if np.max(np.abs(sol.fun)) > 1e-10:
                continue
            for i in list(implied):
                try:
                    if abs(fs[i](*sol.x)) > 1e-6:
                        implied.discard(i)
                except (ZeroDivisionError, ValueError, OverflowError):
                    implied.discard(i)
    return implied


# --------------------------------------------------------------------------
# built-ins and files

CAR_NAMES = {"x": "x1", "y": "x2", "theta": "x3", "u": "u1", "phi": "u2"}
CHAIN_NAMES = {"x": "x1", "v": "x2", "a": "u1"}


def car_system(l: float = 2.0) -> ImplicitSystem:
    """Kinematic car with rear-axle position (x, y), heading theta, speed u and steering phi."""
    params = {"l": l}

    def p(t):
        return sx.parse(t, CAR_NAMES, params)

    return ImplicitSystem(
        n=3,
        m=2,
        F=(p("x'*sin(theta) - y'*cos(theta)"),),
        explicit=(p("u*cos(theta)"), p("u*sin(theta)"), p("u/l*tan(phi)")),
        names=dict(CAR_NAMES),
        params=params,
        name="car",
        angular=(2,),
        # forward driving only; steering kept off the tan poles
        input_bounds=((sx.POLE_GUARD, sx.SAMPLE_HIGH), (-1.2, 1.2)),
        fiber_rule=car_fiber_rule,
    )


def chain2_system() -> ImplicitSystem:
    """Double integrator x' = v, v' = a."""

    def p(t):
        return sx.parse(t, CHAIN_NAMES)

    return ImplicitSystem(
        n=2,
        m=1,
        F=(p("x' - v"),),
        explicit=(p("v"), p("a")),
        names=dict(CHAIN_NAMES),
        name="chain2",
    )


BUILTIN_SYSTEMS = {"car": car_system, "chain2": chain2_system}


def system_from_dict(data: Mapping, name: str = "custom") -> ImplicitSystem:
    names = dict(data.get("names", {}))
    params = dict(data.get("params", {}))
    F = tuple(sx.parse(t, names, params) for t in data["F"])
    explicit = data.get("explicit")
    if explicit is not None:
        explicit = tuple(sx.parse(t, names, params) for t in explicit)
    bounds = data.get("input_bounds")
    return ImplicitSystem(
        n=int(data["n"]),
        m=int(data["m"]),
        F=F,
        explicit=explicit,
        names=names,
        params=params,
        name=data.get("name", name),
        angular=tuple(data.get("angular", ())),
        input_bounds=tuple(map(tuple, bounds)) if bounds else None,
    )


def system_to_dict(sys: ImplicitSystem) -> dict:
    out = {
        "name": sys.name,
        "n": sys.n,
        "m": sys.m,
        "F": [sx.to_text(f) for f in sys.F],
        "names": dict(sys.names),
        "params": dict(sys.params),
    }
    if sys.explicit is not None:
        out["explicit"] = [sx.to_text(f) for f in sys.explicit]
    if sys.angular:
        out["angular"] = list(sys.angular)
    return out


def load_system(spec: str | Mapping, l: float = 2.0) -> ImplicitSystem:
    """Built-in name (``car``, ``chain2``), JSON file path or already-parsed dict."""
    if isinstance(spec, Mapping):
        return system_from_dict(spec)
    if spec == "car":
        return car_system(l)
    if spec in BUILTIN_SYSTEMS:
        return BUILTIN_SYSTEMS[spec]()
    path = Path(spec)
    data = json.loads(path.read_text())
    return system_from_dict(data, name=path.stem)


def parse_point(sys: ImplicitSystem, text: str, order: int = 1) -> JetPoint:
    """Parse ``"x=0,y=0,theta=0,xdot=1,..."`` into a state jet of the given order.

    Keys are aliases with optional ``dot``/``ddot`` suffixes or raw jet
    names (``x1'``).  Every coordinate up to ``order`` must be present.
    """
    vals = np.full((sys.n, order + 1), np.nan)
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise sx.ParseError(f"expected key=value, got {item!r}")
        key, val = (t.strip() for t in item.split("=", 1))
        k = 0
        base = key
        for suffix, kk in (("ddot", 2), ("dot", 1)):
            if key.endswith(suffix) and key[: -len(suffix)] in sys.names:
                base, k = key[: -len(suffix)], kk
                break
        try:
            sym = sx.parse(base, sys.names)
        except sx.ParseError:
            raise sx.ParseError(f"unknown coordinate {key!r}") from None
        var = sx.var_of(sym) if isinstance(sym, sp.Symbol) else None
        if var is None or var.family != "x" or var.base_index >= sys.n:
            raise sx.ParseError(f"{key!r} is not a state coordinate")
        k += var.deriv_order
        if k > order:
            continue
        try:
            vals[var.base_index, k] = float(val)
        except ValueError:
            raise sx.ParseError(f"bad number {val!r} for {key}") from None
    if np.isnan(vals).any():
        missing = [sys.alias("x", i) + ("", "dot", "ddot")[k] for i, k in zip(*np.where(np.isnan(vals)))]
        raise sx.ParseError(f"missing coordinates: {', '.join(missing)}")
    return JetPoint(vals)

