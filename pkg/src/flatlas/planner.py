"""Route planning for the car: splines, arc length, time scaling, chart-switched lift, replay."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import sympy as sp
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from . import symexpr as sx
from .atlas import DOMAIN_EPS, HYSTERESIS, Atlas, angle_diff, forward, select_chart
from .errors import (
    DegenerateWaypoints,
    DomainError,
    InfeasibleProfile,
    NoChartAvailable,
    NoExplicitForm,
    SingularParametrization,
)
from .implicit_system import ImplicitSystem, JetPoint

U_EPS = 1e-6
HEADING = 2
CSV_HEADER = "t,s,x,y,xdot,ydot,xddot,yddot,theta,thetadot,u,phi,chart_id,excluded".split(",")

# Gauss-Legendre panels used for the cumulative arc-length table
_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)
_PANELS_PER_KNOT = 16


@dataclass
class RouteSpec:
    waypoints: list
    speed_segments: list
    l: float = 2.0
    dt: float = 0.01
    accel: float | None = None
    chart_eps: float = DOMAIN_EPS

    def __post_init__(self):
        self.waypoints = [tuple(map(float, w)) for w in self.waypoints]
        self.speed_segments = [(float(f), float(v)) for f, v in self.speed_segments]
        if self.l <= 0 or self.dt <= 0:
            raise ValueError("l and dt must be positive")
        if not self.speed_segments:
            raise ValueError("at least one speed segment is required")
        fr = [f for f, _ in self.speed_segments]
        if any(b <= a for a, b in zip(fr, fr[1:])) or fr[0] <= 0 or fr[-1] != 1.0:
            raise ValueError("segment fractions must increase strictly and end at 1")
        if any(v <= 0 for _, v in self.speed_segments):
            raise ValueError("target speeds must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "RouteSpec":
        return cls(
            d["waypoints"],
            d["speed_segments"],
            d.get("l", 2.0),
            d.get("dt", 0.01),
            d.get("accel"),
            d.get("chart_eps", DOMAIN_EPS),
        )

    @classmethod
    def load(cls, path) -> "RouteSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def demo_route_path() -> Path:
    return Path(__file__).parent / "data" / "demo_route.json"


# --------------------------------------------------------------------------
# geometry


@dataclass
class ParamCurve:
    """Natural cubic splines over accumulated chord length."""

    p: np.ndarray
    sx: CubicSpline
    sy: CubicSpline

    @property
    def p_end(self) -> float:
        return float(self.p[-1])

    def __call__(self, p, nu: int = 0):
        return self.sx(p, nu), self.sy(p, nu)

    def speed(self, p):
        dx, dy = self(p, 1)
        return np.hypot(dx, dy)


def fit_splines(waypoints: Sequence) -> ParamCurve:
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise DegenerateWaypoints("need at least two (x, y) waypoints")
    if not np.all(np.isfinite(pts)):
        raise DegenerateWaypoints("waypoints must be finite")
    chords = np.hypot(*np.diff(pts, axis=0).T)
    if np.any(chords == 0):
        k = int(np.flatnonzero(chords == 0)[0])
        raise DegenerateWaypoints(f"waypoints {k} and {k + 1} coincide")
    p = np.concatenate([[0.0], np.cumsum(chords)])
    return ParamCurve(p, CubicSpline(p, pts[:, 0], bc_type="natural"), CubicSpline(p, pts[:, 1], bc_type="natural"))


@dataclass
class PlanarCurve:
    """Arc-length parametrised curve ``s -> (x(s), y(s))`` on ``[0, L]``."""

    base: ParamCurve
    L: float
    edges: np.ndarray
    table: np.ndarray
    singular_s: tuple = ()
    singular_p: tuple = ()

    def _S(self, p):
        """Arc length from 0 to ``p`` (vectorised)."""
        p = np.clip(np.asarray(p, dtype=float), 0.0, self.base.p_end)
        k = np.clip(np.searchsorted(self.edges, p, side="right") - 1, 0, len(self.edges) - 2)
        a = self.edges[k]
        half = (p - a) / 2
        nodes = a[..., None] + half[..., None] * (_GL_X + 1)
        return self.table[k] + half * np.sum(_GL_W * self.base.speed(nodes), axis=-1)

    def p_of_s(self, s):
        """Invert the arc-length table by bracketed Newton steps."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.L)
        k = np.clip(np.searchsorted(self.table, s, side="right") - 1, 0, len(self.edges) - 2)
        lo, hi = self.edges[k].copy(), self.edges[k + 1].copy()
        p = lo + (hi - lo) * np.where(
            self.table[k + 1] > self.table[k], (s - self.table[k]) / np.maximum(self.table[k + 1] - self.table[k], 1e-300), 0.0
        )
        for _ in range(60):
            f = self._S(p) - s
            lo = np.where(f < 0, p, lo)
            hi = np.where(f > 0, p, hi)
            sp_ = self.base.speed(p)
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = p - f / sp_
            bad = ~np.isfinite(newton) | (newton <= lo) | (newton >= hi)
            p_new = np.where(bad, (lo + hi) / 2, newton)
            if np.all(np.abs(p_new - p) <= 1e-15 * max(1.0, self.base.p_end)):
                p = p_new
                break
            p = p_new
        return np.where(s <= 0, 0.0, np.where(s >= self.L, self.base.p_end, p))

    def eval(self, s):
        """Position, unit tangent and curvature vector at arc length ``s``."""
        p = self.p_of_s(s)
        x, y = self.base(p)
        dx, dy = self.base(p, 1)
        ddx, ddy = self.base(p, 2)
        v = np.hypot(dx, dy)
        with np.errstate(divide="ignore", invalid="ignore"):
            tx, ty = dx / v, dy / v
            dot = (dx * ddx + dy * ddy) / v**2
            kx = (ddx - dx * dot) / v**2
            ky = (ddy - dy * dot) / v**2
        zero = v == 0
        for q in self.singular_s:
            zero |= np.abs(np.asarray(s) - q) <= 1e-9 * max(1.0, self.L)
        for arr in (tx, ty, kx, ky):
            arr[...] = np.where(zero, 0.0, arr)
        return (x, y), (tx, ty), (kx, ky)


def arc_length_reparam(curve: ParamCurve, tol: float = 1e-12) -> PlanarCurve:
    knots = curve.p
    sub = np.linspace(0, 1, _PANELS_PER_KNOT + 1)[:-1]
    edges = np.concatenate([(a + (b - a) * sub) for a, b in zip(knots[:-1], knots[1:])] + [[knots[-1]]])
    a, b = edges[:-1], edges[1:]
    half = (b - a) / 2
    nodes = a[:, None] + half[:, None] * (_GL_X + 1)
    panel = half * np.sum(_GL_W * curve.speed(nodes), axis=1)
    table = np.concatenate([[0.0], np.cumsum(panel)])
    L = sum(quad(curve.speed, lo, hi, epsabs=tol, epsrel=tol, limit=200)[0] for lo, hi in zip(knots[:-1], knots[1:]))
    if not L > 1e-12:
        raise SingularParametrization("route has zero length")
    table *= L / table[-1]

    # isolated stationary points (cusps) are kept and reported; dense ones are not
    cand = []
    for spl in (curve.sx, curve.sy):
        r = spl.derivative().roots(extrapolate=False)
        if np.any(np.isnan(r)):
            r = r[~np.isnan(r)]
        cand.extend(r.tolist())
    sing_p = sorted({round(float(q), 12) for q in cand if curve.speed(q) < 1e-9 * max(1.0, L)})
    probe = np.linspace(0, curve.p_end, 4001)
    low = curve.speed(probe) < 1e-9 * max(1.0, L)
    if np.count_nonzero(low) > 2 * len(sing_p) + 2:
        raise SingularParametrization("curve speed vanishes on an interval")
    pc = PlanarCurve(curve, L, edges, table)
    pc.singular_p = tuple(sing_p)
    pc.singular_s = tuple(float(pc._S(q)) for q in sing_p)
    return pc


def line_curve(a, b) -> PlanarCurve:
    return arc_length_reparam(fit_splines([a, b]))


# --------------------------------------------------------------------------
# time scaling


@dataclass
class TimeScaling:
    """Piecewise quadratic ``sigma``; each piece is ``(t0, t1, s0, v0, v1)`` with linear speed."""

    pieces: list
    L: float
    accel: float

    @property
    def T(self) -> float:
        return self.pieces[-1][1] if self.pieces else 0.0

    @property
    def breakpoints(self) -> list:
        return [p[0] for p in self.pieces] + [self.T]

    def _piece(self, t: float) -> int:
        starts = [p[0] for p in self.pieces]
        return max(0, min(len(self.pieces) - 1, int(np.searchsorted(starts, t, side="right")) - 1))

    def __call__(self, t):
        """``(sigma, sigma_dot, sigma_ddot)`` with right-sided acceleration at joins."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((3, len(t)))
        for i, ti in enumerate(t):
            if ti >= self.T:
                out[:, i] = (self.L, 0.0, 0.0 if not self.pieces else self._acc(len(self.pieces) - 1))
                continue
            k = self._piece(max(ti, 0.0))
            t0, t1, s0, v0, v1 = self.pieces[k]
            h = max(ti, 0.0) - t0
            acc = self._acc(k)
            out[:, i] = (s0 + v0 * h + 0.5 * acc * h * h, v0 + (v1 - v0) * (h / (t1 - t0)), acc)
        return out

    def _acc(self, k: int) -> float:
        t0, t1, _, v0, v1 = self.pieces[k]
        return (v1 - v0) / (t1 - t0)

    def invert(self, s: float) -> float:
        """Time at which ``sigma`` reaches ``s``."""
        if s <= 0:
            return 0.0
        if s >= self.L:
            return self.T
        for t0, t1, s0, v0, v1 in self.pieces:
            s1 = s0 + 0.5 * (v0 + v1) * (t1 - t0)
            if s <= s1:
                a = (v1 - v0) / (t1 - t0)
                d = s - s0
                if a == 0:
                    return t0 + d / v0
                return t0 + 2 * d / (v0 + math.sqrt(max(v0 * v0 + 2 * a * d, 0.0)))
        return self.T


def minimal_accel(speed_segments, L: float) -> float:
    v = [vv for _, vv in speed_segments]
    lens = np.diff([0.0] + [f for f, _ in speed_segments]) * L
    worst = 0.0
    for i, vi in enumerate(v):
        a = min(vi, v[i - 1]) if i > 0 else 0.0
        b = min(vi, v[i + 1]) if i + 1 < len(v) else 0.0
        worst = max(worst, (2 * vi * vi - a * a - b * b) / (2 * lens[i]))
    return worst


def build_sigma(speed_segments, L: float, accel: float | None = None) -> TimeScaling:
    """Trapezoidal speed per segment: entry ramp when speeding up, exit ramp when slowing down.

    Junction speeds are the smaller of the adjacent plateau speeds and the
    ramp rate defaults to the smallest one that fits every segment.
    """
    if not L > 0:
        raise ValueError("route length must be positive")
    segs = [(float(f), float(v)) for f, v in speed_segments]
    if not segs or segs[-1][0] != 1.0 or any(v <= 0 for _, v in segs):
        raise ValueError("speed segments must end at fraction 1 with positive speeds")
    a_min = minimal_accel(segs, L)
    if accel is None:
        accel = a_min
    elif accel < a_min * (1 - 1e-12):
        raise InfeasibleProfile(f"acceleration {accel} below the feasible minimum {a_min:.6g}")
    v = [vv for _, vv in segs]
    bounds = [0.0] + [f * L for f, _ in segs]
    bounds[-1] = L
    pieces = []
    t = 0.0

    def add(s0, va, vb, dist):
        nonlocal t
        if dist <= 1e-12 * L:
            return
        dur = 2 * dist / (va + vb)
        pieces.append((t, t + dur, s0, va, vb))
        t += dur

    for i, vi in enumerate(v):
        a = min(vi, v[i - 1]) if i > 0 else 0.0
        b = min(vi, v[i + 1]) if i + 1 < len(v) else 0.0
        s0, s1 = bounds[i], bounds[i + 1]
        up = (vi * vi - a * a) / (2 * accel)
        down = (vi * vi - b * b) / (2 * accel)
        plateau = (s1 - s0) - up - down
        if plateau < 0:
            # only reachable through rounding at the minimal rate
            plateau = 0.0
            scale = (s1 - s0) / (up + down)
            up, down = up * scale, down * scale
        add(s0, a, vi, up)
        add(s0 + up, vi, vi, plateau)
        add(s1 - down, vi, b, down)
    return TimeScaling(pieces, L, accel)


# --------------------------------------------------------------------------
# flat samples


@dataclass
class FlatSamples:
    t: np.ndarray
    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    xd: np.ndarray
    yd: np.ndarray
    xdd: np.ndarray
    ydd: np.ndarray


def _merge_times(ts: list, tol: float = 1e-12) -> np.ndarray:
    ts = np.sort(np.asarray(ts, dtype=float))
    keep = [ts[0]]
    for t in ts[1:]:
        if t - keep[-1] > tol:
            keep.append(t)
        else:
            keep[-1] = max(keep[-1], t) if t == ts[-1] else keep[-1]
    return np.array(keep)


def compose_trajectory(curve: PlanarCurve, ts: TimeScaling, dt: float) -> FlatSamples:
    if dt <= 0:
        raise ValueError("dt must be positive")
    T = ts.T
    grid = np.arange(int(math.floor(T / dt + 1e-9)) + 1) * dt
    extra = ts.breakpoints + [ts.invert(s) for s in curve.singular_s]
    t = _merge_times([*grid[grid <= T], *extra])
    sig, sd, sdd = ts(t)
    (x, y), (tx, ty), (kx, ky) = curve.eval(sig)
    return FlatSamples(t, sig, x, y, tx * sd, ty * sd, kx * sd**2 + tx * sdd, ky * sd**2 + ty * sdd)


# --------------------------------------------------------------------------
# lift


@dataclass
class Trajectory:
    t: np.ndarray
    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    xd: np.ndarray
    yd: np.ndarray
    xdd: np.ndarray
    ydd: np.ndarray
    theta: np.ndarray
    thetadot: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    chart_id: list
    excluded: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def rows(self):
        cols = (self.t, self.s, self.x, self.y, self.xd, self.yd, self.xdd, self.ydd, self.theta, self.thetadot, self.u, self.phi)
        for k in range(len(self.t)):
            yield [float(c[k]) for c in cols] + [self.chart_id[k], bool(self.excluded[k])]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows():
            w.writerow([repr(v) for v in r[:12]] + [r[12], int(r[13])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trajectory":
        rd = csv.reader(io.StringIO(text))
        try:
            header = next(rd)
        except StopIteration:
            raise ValueError("empty trajectory file") from None
        if header != CSV_HEADER:
            raise ValueError("trajectory header does not match")
        cols = [[] for _ in range(14)]
        for ln, row in enumerate(rd, start=2):
            if len(row) != 14:
                raise ValueError(f"line {ln}: expected 14 fields, got {len(row)}")
            try:
                for i in range(12):
                    cols[i].append(float(row[i]))
                cols[13].append(bool(int(row[13])))
            except ValueError:
                raise ValueError(f"line {ln}: malformed number") from None
            cols[12].append(row[12])
        arr = [np.array(c, dtype=float) for c in cols[:12]]
        if len(arr[0]) > 1 and np.any(np.diff(arr[0]) <= 0):
            raise ValueError("time column is not increasing")
        return cls(*arr, cols[12], np.array(cols[13], dtype=bool))


def _chart_theta(chart, j: JetPoint, n: int) -> tuple:
    """Heading and its rate as recovered through ``chart`` from the flat jet of ``j``."""
    lvl = chart.phi_state_jets(n, 1)[HEADING]
    y = forward(chart, j, max(sx.max_order(lvl, "z"), 0), check_domain=False)
    b = y.binding()
    return sx.evaluate(lvl[0], b), sx.evaluate(lvl[1], b)


def lift_trajectory(
    flat: FlatSamples,
    atlas: Atlas,
    u_eps: float = U_EPS,
    chart_eps: float = DOMAIN_EPS,
    hysteresis: float = HYSTERESIS,
) -> Trajectory:
    """Heading, steering and speed along the flat samples, switching charts as needed."""
    N = len(flat.t)
    l = float(atlas.system.params.get("l", 2.0))
    u = np.hypot(flat.xd, flat.yd)
    excluded = u < u_eps
    live = np.flatnonzero(~excluded)
    if len(live):
        inner = excluded[live[0] : live[-1] + 1]
        if np.any(inner):
            k = live[0] + int(np.flatnonzero(inner)[0])
            raise NoChartAvailable(f"speed vanishes at interior time t={flat.t[k]:.6g}", t=float(flat.t[k]))
    theta = np.full(N, np.nan)
    thetadot = np.zeros(N)
    phi = np.full(N, np.nan)
    charts = [""] * N
    current = None
    switches = []
    worst_switch = 0.0
    prev = None
    for k in live:
        th0 = math.atan2(flat.yd[k], flat.xd[k])
        thd0 = (flat.ydd[k] * flat.xd[k] - flat.xdd[k] * flat.yd[k]) / u[k] ** 2
        vals = np.array([[flat.x[k], flat.xd[k], flat.xdd[k]], [flat.y[k], flat.yd[k], flat.ydd[k]], [th0, thd0, np.nan]])
        j = JetPoint(vals)
        try:
            cid = select_chart(atlas, j, current, chart_eps, hysteresis)
        except NoChartAvailable:
            raise NoChartAvailable(f"no chart at t={flat.t[k]:.6g}", t=float(flat.t[k])) from None
        th, thd = _chart_theta(atlas.chart(cid), j, atlas.system.n)
        if current is not None and cid != current:
            try:
                th_old, _ = _chart_theta(atlas.chart(current), j, atlas.system.n)
                gap = abs(angle_diff(th, th_old))
            except DomainError:
                gap = float("nan")
            switches.append({"t": float(flat.t[k]), "from": current, "to": cid, "theta_gap": gap})
            if gap == gap:
                worst_switch = max(worst_switch, gap)
        current = cid
        th = th if prev is None else prev + angle_diff(th, prev)
        prev = th
        theta[k], thetadot[k], charts[k] = th, thd, cid
        phi[k] = math.atan(l * thd / u[k])
    if len(live):
        theta[: live[0]] = theta[live[0]]
        theta[live[-1] + 1 :] = theta[live[-1]]
    spans = []
    if len(live) == 0:
        spans = [(float(flat.t[0]), float(flat.t[-1]))] if N else []
    else:
        if live[0] > 0:
            spans.append((float(flat.t[0]), float(flat.t[live[0] - 1])))
        if live[-1] < N - 1:
            spans.append((float(flat.t[live[-1] + 1]), float(flat.t[-1])))
    meta = {"excluded_intervals": spans, "switches": switches, "max_switch_gap": worst_switch, "l": l}
    return Trajectory(
        flat.t, flat.s, flat.x, flat.y, flat.xd, flat.yd, flat.xdd, flat.ydd, theta, thetadot, u, phi, charts, excluded, meta
    )


def f_residual(traj: Trajectory) -> np.ndarray:
    live = ~traj.excluded
    return np.abs(traj.xd[live] * np.sin(traj.theta[live]) - traj.yd[live] * np.cos(traj.theta[live]))


# --------------------------------------------------------------------------
# closed-loop replay


def explicit_rhs(sys: ImplicitSystem):
    if sys.explicit is None:
        raise NoExplicitForm(f"system {sys.name} has no explicit form")
    xs = [sx.jet(i) for i in range(sys.n)]
    us = [sx.jet(i, 0, "u") for i in range(sys.m)]
    f = sp.lambdify(xs + us, list(sys.explicit), modules="math")
    return lambda x, u: np.array(f(*x, *u), dtype=float)


def _replay(traj: Trajectory, rhs, h: float, lo: int, hi: int) -> np.ndarray:
    """RK4 through samples ``lo..hi`` with linearly interpolated controls; states at each sample."""
    X = np.empty((hi - lo + 1, 3))
    X[0] = (traj.x[lo], traj.y[lo], traj.theta[lo])
    for k in range(lo, hi):
        t0, t1 = traj.t[k], traj.t[k + 1]
        c0 = np.array([traj.u[k], traj.phi[k]])
        c1 = np.array([traj.u[k + 1], traj.phi[k + 1]])
        nsub = max(1, math.ceil((t1 - t0) / h - 1e-9))
        dt = (t1 - t0) / nsub
        x = X[k - lo].copy()
        for q in range(nsub):
            a = q / nsub
            b = (q + 0.5) / nsub
            c = (q + 1) / nsub
            ua, ub, uc = c0 + (c1 - c0) * a, c0 + (c1 - c0) * b, c0 + (c1 - c0) * c
            k1 = rhs(x, ua)
            k2 = rhs(x + 0.5 * dt * k1, ub)
            k3 = rhs(x + 0.5 * dt * k2, ub)
            k4 = rhs(x + dt * k3, uc)
            x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        X[k - lo + 1] = x
    return X


def _live_range(traj: Trajectory):
    live = np.flatnonzero(~traj.excluded)
    if len(live) < 2:
        return None
    return int(live[0]), int(live[-1])


def validate_closed_loop(traj: Trajectory, sys: ImplicitSystem, integrator_dt: float = 1e-3) -> dict:
    """Re-integrate the explicit model under the planned controls and compare with the plan."""
    if integrator_dt <= 0:
        raise ValueError("integrator_dt must be positive")
    rng_ = _live_range(traj)
    fr = f_residual(traj) if len(traj) else np.zeros(0)
    rep = {
        "samples": 0,
        "max_position_error": 0.0,
        "max_heading_error": 0.0,
        "f_residual_max": float(fr.max()) if fr.size else 0.0,
        "f_residual_mean": float(fr.mean()) if fr.size else 0.0,
        "integrator_dt": integrator_dt,
    }
    if rng_ is None:
        return rep
    lo, hi = rng_
    X = _replay(traj, explicit_rhs(sys), integrator_dt, lo, hi)
    pos = np.hypot(X[:, 0] - traj.x[lo : hi + 1], X[:, 1] - traj.y[lo : hi + 1])
    head = np.abs(np.remainder(X[:, 2] - traj.theta[lo : hi + 1] + math.pi, 2 * math.pi) - math.pi)
    rep.update(samples=hi - lo + 1, max_position_error=float(pos.max()), max_heading_error=float(head.max()))
    return rep


def convergence_ratios(traj: Trajectory, sys: ImplicitSystem, h: float, halvings: int = 3) -> list:
    """Ratios of successive Richardson differences of the replay as the integrator step halves.

    Order four shows up as ratios near 16.
    """
    rng_ = _live_range(traj)
    if rng_ is None:
        return []
    rhs = explicit_rhs(sys)
    runs = [_replay(traj, rhs, h / 2**k, *rng_) for k in range(halvings + 1)]
    diffs = [float(np.max(np.abs(a - b))) for a, b in zip(runs, runs[1:])]
    return [a / b for a, b in zip(diffs, diffs[1:]) if b > 0]


# --------------------------------------------------------------------------
# pipeline and plot data


@dataclass
class Plan:
    spec: RouteSpec
    curve: PlanarCurve
    sigma: TimeScaling
    traj: Trajectory


def plan_route(spec: RouteSpec, atlas: Atlas | None = None) -> Plan:
    from .atlas import car_atlas

    atlas = atlas if atlas is not None else car_atlas(spec.l)
    curve = arc_length_reparam(fit_splines(spec.waypoints))
    sigma = build_sigma(spec.speed_segments, curve.L, spec.accel)
    flat = compose_trajectory(curve, sigma, spec.dt)
    traj = lift_trajectory(flat, atlas, chart_eps=spec.chart_eps)
    traj.metadata.update(L=curve.L, T=sigma.T, accel=sigma.accel)
    return Plan(spec, curve, sigma, traj)


def _table(header, cols) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*cols):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def plot_tables(traj: Trajectory) -> dict:
    """CSV text per figure role: route by arc length, speed profile, flat outputs, heading and steering."""
    return {
        "route.csv": _table(["s", "x", "y"], [traj.s, traj.x, traj.y]),
        "speed_profile.csv": _table(["t", "s", "sdot"], [traj.t, traj.s, traj.u]),
        "flat_outputs.csv": _table(["t", "s", "x", "y"], [traj.t, traj.s, traj.x, traj.y]),
        "theta_phi.csv": _table(["t", "theta", "phi"], [traj.t, traj.theta, traj.phi]),
    }
