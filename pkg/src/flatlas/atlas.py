"""Charts of flat outputs, their compatibility, chart selection and point classification."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import sympy as sp

from . import symexpr as sx
from .errors import (
    DomainError,
    NoChartAvailable,
    OutOfDomain,
    SamplingFailure,
    TruncationOverflow,
    UnboundVariable,
)
from .implicit_system import (
    CAR_NAMES,
    ImplicitSystem,
    JetPoint,
    car_system,
    fiber_check,
    load_system,
    p_matrix,
    system_to_dict,
    zero_set_member,
)
from .orepoly import hyper_regular_locus

DOMAIN_EPS = 1e-6
HYSTERESIS = 10.0
TWO_PI = 2.0 * math.pi


def angle_diff(a: float, b: float) -> float:
    """Signed difference a - b wrapped to (-pi, pi]."""
    return math.remainder(a - b, TWO_PI)


@dataclass(frozen=True, eq=False)
class Chart:
    """Open set given by nonvanishing ``domain`` expressions, flat output ``psi``, inverse ``phi``.

    ``phi`` lists the state components then the input components, written in
    the flat-output jet coordinates ``z1, z1', ...``.  ``flat_domain`` holds
    the flat-side expressions that must not vanish for ``phi`` to be defined.
    """

    id: str
    domain: tuple
    psi: tuple
    phi: tuple
    flat_domain: tuple = ()
    angular_psi: tuple = ()

    def __post_init__(self):
        for name in ("domain", "psi", "phi", "flat_domain"):
            object.__setattr__(self, name, tuple(sp.sympify(e) for e in getattr(self, name)))
        object.__setattr__(self, "_cache", {})

    @property
    def m(self) -> int:
        return len(self.psi)

    def psi_jets(self, order: int) -> list:
        """``[[psi_r, cartan(psi_r), ...] for r]`` up to ``order``."""
        key = ("psi", order)
        if key not in self._cache:
            rows = []
            for p in self.psi:
                lvl = [p]
                for _ in range(order):
                    lvl.append(sx.cartan_apply(lvl[-1]))
                rows.append(lvl)
            self._cache[key] = rows
        return self._cache[key]

    def phi_state_jets(self, n: int, order: int) -> list:
        key = ("phi", n, order)
        if key not in self._cache:
            rows = []
            for p in self.phi[:n]:
                lvl = [p]
                for _ in range(order):
                    lvl.append(sx.cartan_apply(lvl[-1]))
                rows.append(lvl)
            self._cache[key] = rows
        return self._cache[key]

    def margin(self, j: JetPoint) -> float:
        b = j.binding()
        if not self.domain:
            return math.inf
        return min(abs(sx.evaluate(d, b)) for d in self.domain)

    def flat_order_needed(self, n: int) -> int:
        return max(sx.max_order(self.phi, "z"), 0)

    def to_dict(self, names=None) -> dict:
        t = lambda es: [sx.to_text(e, names) for e in es]  # noqa: E731
        out = {"id": self.id, "domain": t(self.domain), "psi": t(self.psi), "phi": t(self.phi)}
        if self.flat_domain:
            out["flat_domain"] = t(self.flat_domain)
        if self.angular_psi:
            out["angular_psi"] = list(self.angular_psi)
        return out


@dataclass(frozen=True, eq=False)
class Atlas:
    charts: tuple
    system: ImplicitSystem
    name: str = "atlas"

    def __post_init__(self):
        object.__setattr__(self, "charts", tuple(self.charts))
        ids = [c.id for c in self.charts]
        if len(set(ids)) != len(ids):
            raise ValueError("chart ids must be unique")
        object.__setattr__(self, "_cache", {})

    def chart(self, cid: str) -> Chart:
        for c in self.charts:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def locus(self) -> list:
        """Generators of the hyper-singular candidate set of the system's P(F)."""
        if "locus" not in self._cache:
            rep = hyper_regular_locus(p_matrix(self.system), constraints=self.system.F)
            self._cache["locus"] = rep.locus
        return self._cache["locus"]

    def to_dict(self) -> dict:
        sysd = self.system.name if self.system.name in ("car", "chain2") else system_to_dict(self.system)
        return {
            "name": self.name,
            "system": sysd,
            "params": dict(self.system.params),
            "charts": [c.to_dict(self.system.names) for c in self.charts],
        }


# --------------------------------------------------------------------------
# chart operations


def chart_contains(c: Chart, j: JetPoint, eps: float = DOMAIN_EPS) -> bool:
    if eps <= 0:
        raise ValueError("eps must be positive")
    return c.margin(j) > eps


def forward(c: Chart, j: JetPoint, order: int = 0, eps: float = DOMAIN_EPS, *, check_domain: bool = True) -> JetPoint:
    """Flat-output jet ``(psi, cartan psi, ...)`` at ``j`` up to ``order``."""
    if check_domain and not chart_contains(c, j, eps):
        raise OutOfDomain(f"point outside chart {c.id}")
    b = j.binding()
    vals = np.empty((c.m, order + 1))
    for r, lvl in enumerate(c.psi_jets(order)):
        for k, e in enumerate(lvl):
            try:
                vals[r, k] = sx.evaluate(e, b)
            except UnboundVariable:
                raise TruncationOverflow(f"jet of order {j.order} too short for {c.id} order {k}") from None
    return JetPoint(vals, "z")


def _check_flat_domain(c: Chart, b: dict, eps: float):
    for d in c.flat_domain:
        try:
            v = sx.evaluate(d, b)
        except UnboundVariable:
            raise TruncationOverflow(f"flat jet too short for chart {c.id}") from None
        if abs(v) <= eps:
            raise OutOfDomain(f"{d} vanishes: outside the image of chart {c.id}")


def inverse(c: Chart, yj: JetPoint, n: int | None = None, eps: float = 0.0) -> tuple:
    """State and input values recovered from a flat jet; ``(state[n], inputs[m])``."""
    n = len(c.phi) - c.m if n is None else n
    b = yj.binding()
    _check_flat_domain(c, b, eps)
    vals = []
    for e in c.phi:
        try:
            vals.append(sx.evaluate(e, b))
        except UnboundVariable:
            raise TruncationOverflow(f"flat jet too short for chart {c.id}") from None
    return np.array(vals[:n]), np.array(vals[n:])


def lift(c: Chart, yj: JetPoint, n: int, order: int, eps: float = 0.0) -> JetPoint:
    """State jet up to ``order`` obtained by prolonging the state part of ``phi``."""
    b = yj.binding()
    _check_flat_domain(c, b, eps)
    vals = np.empty((n, order + 1))
    for i, lvl in enumerate(c.phi_state_jets(n, order)):
        for k, e in enumerate(lvl):
            try:
                vals[i, k] = sx.evaluate(e, b)
            except UnboundVariable:
                raise TruncationOverflow(f"flat jet too short to lift order {k}") from None
    return JetPoint(vals)


def state_distance(sys: ImplicitSystem, a: Sequence[float], b: Sequence[float]) -> float:
    """Max componentwise distance, angular components compared modulo 2 pi."""
    worst = 0.0
    for i, (x, y) in enumerate(zip(a, b)):
        d = abs(angle_diff(x, y)) if i in sys.angular else abs(x - y)
        worst = max(worst, d)
    return worst


def independence_rank(c: Chart, j: JetPoint, levels: int) -> tuple:
    """Numeric rank of the Jacobian of psi prolonged ``levels`` times and the full rank expected."""
    exprs = [e for lvl in c.psi_jets(levels) for e in lvl]
    syms = sorted(set().union(*(e.free_symbols for e in exprs)), key=lambda s: s.name)
    b = j.binding()
    J = np.array([[sx.evaluate(sp.diff(e, s), b) for s in syms] for e in exprs])
    return int(np.linalg.matrix_rank(J, tol=1e-9)), len(exprs)


# --------------------------------------------------------------------------
# compatibility


def transition(ci: Chart, cj: Chart, n: int, order: int) -> list:
    """Symbolic ``psi_j o phi_i`` in the flat coordinates of ``ci``, prolonged to ``order``."""
    key = ("transition", cj.id, id(cj), n, order)
    if key in ci._cache:
        return ci._cache[key]
    need = max(sx.max_order(cj.psi, "x"), 0)
    lifted = ci.phi_state_jets(n, need)
    subs = {sx.jet(i, k): lifted[i][k] for i in range(n) for k in range(need + 1)}
    rows = []
    for p in cj.psi:
        lvl = [p.xreplace(subs)]
        for _ in range(order):
            lvl.append(sx.cartan_apply(lvl[-1]))
        rows.append(lvl)
    ci._cache[key] = rows
    return rows


def _poly_jet(y0: JetPoint, t: float, order: int) -> JetPoint:
    """Jet at time t of the polynomial curve whose Taylor coefficients at 0 are ``y0``."""
    K = y0.order
    out = np.zeros((y0.n, order + 1))
    for k in range(order + 1):
        for q in range(k, K + 1):
            out[:, k] += y0.values[:, q] * t ** (q - k) / math.factorial(q - k)
    return JetPoint(out, y0.family)


def _eval_rows(rows, b, upto):
    return np.array([[sx.evaluate(lvl[k], b) for k in range(upto + 1)] for lvl in rows])


@dataclass
class CompatibilityReport:
    pair: tuple
    samples: int
    identity_residual: float = 0.0
    transition_residual: float = 0.0
    fd_residual: float = 0.0
    passed: bool = True
    no_overlap: bool = False
    messages: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "samples": self.samples,
            "identity_residual": self.identity_residual,
            "transition_residual": self.transition_residual,
            "fd_residual": self.fd_residual,
            "passed": self.passed,
            "no_overlap": self.no_overlap,
            "messages": self.messages,
        }


def _component_diff(a, b, angular_rows):
    d = np.abs(np.asarray(a) - np.asarray(b))
    for r in angular_rows:
        d[r, 0] = abs(angle_diff(a[r][0], b[r][0]))
    return float(np.max(d)) if d.size else 0.0


def compatibility_check(
    ci: Chart,
    cj: Chart,
    sys: ImplicitSystem,
    samples: int = 64,
    tol: float = 1e-6,
    *,
    fd_tol: float = 1e-5,
    fd_h: float = 1e-5,
    eps: float = DOMAIN_EPS,
    rng: np.random.Generator | None = None,
    max_tries: int | None = None,
) -> CompatibilityReport:
    """Numeric check that ``psi_j o phi_i`` is a Lie-Backlund isomorphism on sampled overlaps.

    (a) the transition reproduces ``psi_j`` at the sampled point and the
    reverse transition returns to the start; (b) its first prolongation
    equals the finite-difference time derivative of its order-0 part along
    a polynomial flat trajectory through the sample.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    n = sys.n
    T_ij = transition(ci, cj, n, 1)
    T_ji = transition(cj, ci, n, 0)
    need_i = max(sx.max_order([e for lvl in T_ij for e in lvl], "z"), ci.flat_order_needed(n), 0)
    need_j = max(sx.max_order([lvl[0] for lvl in T_ji], "z"), 0)
    # order-0 round trip needs T_ij prolonged to the order the reverse map reads
    T_ij_full = transition(ci, cj, n, need_j)
    need_i = max(need_i, sx.max_order([e for lvl in T_ij_full for e in lvl], "z"))
    state_order = need_i + max(sx.max_order(ci.psi, "x"), 0) + max(sx.max_order(cj.psi, "x"), 0) + 1
    state_order = min(state_order, sx.R_MAX)
    rep = CompatibilityReport((ci.id, cj.id), 0)
    tries = 0
    limit = max_tries or 50 * samples
    while rep.samples < samples and tries < limit:
        tries += 1
        try:
            j, _ = sys.sample_explicit(rng, state_order)
        except SamplingFailure:
            continue
        if not (chart_contains(ci, j, eps) and chart_contains(cj, j, eps)):
            continue
        try:
            yi = forward(ci, j, need_i, eps)
            yj = forward(cj, j, 1, eps)
            bi = yi.binding()
            comp = _eval_rows(T_ij_full, bi, need_j)
            comp1 = comp[:, :2] if comp.shape[1] >= 2 else _eval_rows(T_ij, bi, 1)
            back = np.array([[sx.evaluate(lvl[0], JetPoint(comp, "z").binding())] for lvl in T_ji])
            # (b) finite differences along the polynomial flat curve through yi
            plus = _eval_rows(T_ij, _poly_jet(yi, fd_h, need_i).binding(), 0)
            minus = _eval_rows(T_ij, _poly_jet(yi, -fd_h, need_i).binding(), 0)
        except (DomainError, OutOfDomain):
            continue
        rep.samples += 1
        ang_j = set(cj.angular_psi)
        ang_i = set(ci.angular_psi)
        rep.transition_residual = max(rep.transition_residual, _component_diff(comp1, yj.values[:, :2], ang_j))
        rep.identity_residual = max(rep.identity_residual, _component_diff(back, yi.values[:, :1], ang_i))
        fd = np.empty(len(plus))
        for r in range(len(plus)):
            delta = angle_diff(plus[r, 0], minus[r, 0]) if r in ang_j else plus[r, 0] - minus[r, 0]
            fd[r] = delta / (2 * fd_h)
        scale = max(1.0, float(np.max(np.abs(comp1[:, 1]))))
        rep.fd_residual = max(rep.fd_residual, float(np.max(np.abs(fd - comp1[:, 1]))) / scale)
    if rep.samples == 0:
        rep.no_overlap = True
        rep.messages.append("no sampled jets in the overlap")
        return rep
    rep.passed = rep.identity_residual < tol and rep.transition_residual < tol and rep.fd_residual < fd_tol
    return rep


def atlas_check(atlas: Atlas, samples: int = 64, tol: float = 1e-6, *, seed: int = 7) -> list:
    """Compatibility reports for every ordered chart pair, in chart-list order."""
    out = []
    for ci in atlas.charts:
        for cj in atlas.charts:
            rng = np.random.default_rng([seed, len(out)])
            out.append(compatibility_check(ci, cj, atlas.system, samples, tol, rng=rng))
    return out


# --------------------------------------------------------------------------
# selection and classification


def select_chart(
    atlas: Atlas,
    j: JetPoint,
    current: str | None = None,
    eps: float = DOMAIN_EPS,
    hysteresis: float = HYSTERESIS,
) -> str:
    """Chart to use at ``j``: keep ``current`` while its margin exceeds eps, else the widest margin."""
    if hysteresis < 1:
        raise ValueError("hysteresis must be >= 1")
    margins = [(c.margin(j), i, c.id) for i, c in enumerate(atlas.charts)]
    if current is not None:
        for mgn, _, cid in margins:
            if cid == current and mgn > eps:
                return cid
    best = max(margins, key=lambda t: (t[0], -t[1]), default=None)
    if best is None or best[0] <= eps:
        raise NoChartAvailable("no chart contains the point")
    # prefer a chart clear of its boundary; accept a marginal one only if nothing else exists
    for mgn, _, cid in sorted(margins, key=lambda t: (-t[0], t[1])):
        if mgn > hysteresis * eps:
            return cid
    return best[2]


@dataclass
class Classification:
    status: str
    charts: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    note: str = ""

    def text(self) -> str:
        if self.status == "Regular":
            s = "Regular [" + ", ".join(self.charts) + "]"
        else:
            s = self.status
        return f"{s} ({self.note})" if self.note else s


def is_equilibrium(sys: ImplicitSystem, j: JetPoint, tol: float = 1e-9) -> bool:
    return bool(np.all(np.abs(j.values[:, 1]) <= tol))


def classify_point(atlas: Atlas, j: JetPoint, eps: float = DOMAIN_EPS, tol: float = 1e-9) -> Classification:
    sys = atlas.system
    b = j.binding()
    diag = {}
    for g in atlas.locus():
        try:
            diag[sys.text(g)] = sx.evaluate(g, b)
        except DomainError:
            diag[sys.text(g)] = float("nan")
    if not zero_set_member(sys, j, 0):
        return Classification("OutsideFiber", diagnostics=diag, note="F does not vanish here")
    if sys.explicit is not None and not fiber_check(sys, j):
        return Classification("OutsideFiber", diagnostics=diag)
    ids = [c.id for c in atlas.charts if c.margin(j) > eps]
    if ids:
        return Classification("Regular", ids, diag)
    if all(abs(v) < tol for v in diag.values()):
        note = "equilibrium: not first-order controllable here" if is_equilibrium(sys, j, tol) else ""
        return Classification("CandidateIntrinsic", [], diag, note)
    return Classification(
        "Regular",
        [],
        diag,
        "apparent for this atlas: no chart covers the point but P(F) is hyper-regular here",
    )


# --------------------------------------------------------------------------
# built-in car atlas and files


def car_atlas(l: float = 2.0) -> Atlas:
    sys = car_system(l)
    names = dict(CAR_NAMES)
    names.update({"z1": "z1", "z2": "z2"})

    def p(t):
        return sx.parse(t, names, sys.params)

    speed = "sqrt(z1'**2 + z2'**2)"
    steer = "atan(l*(z1'*z2'' - z2'*z1'')/(z1'**2 + z2'**2)**(3/2))"
    xy_phi = [p("z1"), p("z2"), p("atan2(z2', z1')"), p(speed), p(steer)]
    u1 = Chart("U1", [p("x'")], [p("x"), p("y")], xy_phi, [p("z1'")])
    u2 = Chart("U2", [p("y'")], [p("x"), p("y")], xy_phi, [p("z2'")])
    x3 = p("z2'/z1'*cos(z1) + z2*sin(z1)")
    y3 = p("z2'/z1'*sin(z1) - z2*cos(z1)")
    speed3 = sx.simplify(sp.sqrt(sx.simplify(sx.cartan_apply(x3) ** 2 + sx.cartan_apply(y3) ** 2)))
    steer3 = sp.atan(sp.Rational(str(l)) * sx.jet(0, 1, "z") / speed3)
    u3 = Chart(
        "U3",
        [p("theta'")],
        [p("theta"), p("x*sin(theta) - y*cos(theta)")],
        [x3, y3, p("z1"), speed3, steer3],
        [p("z1'")],
        angular_psi=(0,),
    )
    return Atlas((u1, u2, u3), sys, "car-atlas")


def atlas_from_dict(data, sys: ImplicitSystem | None = None, l: float = 2.0) -> Atlas:
    if isinstance(data, list):
        data = {"charts": data}
    if sys is None:
        spec = data.get("system", "car")
        params = data.get("params", {})
        sys = load_system(spec, l=params.get("l", l)) if not isinstance(spec, Mapping) else load_system(spec)
    names = dict(sys.names)

    def p(t):
        return sx.parse(t, names, sys.params)

    charts = []
    for cd in data["charts"]:
        charts.append(
            Chart(
                cd["id"],
                [p(t) for t in cd.get("domain", [])],
                [p(t) for t in cd["psi"]],
                [p(t) for t in cd["phi"]],
                [p(t) for t in cd.get("flat_domain", [])],
                tuple(cd.get("angular_psi", ())),
            )
        )
    return Atlas(tuple(charts), sys, data.get("name", "atlas"))


def load_atlas(spec: str, sys: ImplicitSystem | None = None, l: float = 2.0) -> Atlas:
    if spec == "car-atlas":
        return car_atlas(l)
    return atlas_from_dict(json.loads(Path(spec).read_text()), sys, l)
