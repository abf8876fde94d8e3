"""``flatlas`` command line: singularity analysis, atlas checks, classification, planning."""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import symexpr as sx
from .atlas import atlas_check, atlas_from_dict, car_atlas, classify_point, load_atlas
from .errors import FlatlasError
from .implicit_system import load_system, p_matrix, parse_point, resolve_locus
from .orepoly import hyper_regular_locus
from .planner import RouteSpec, Trajectory, plan_route, plot_tables, validate_closed_loop

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class MalformedInput(FlatlasError):
    pass


def atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(report, out: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=False) + "\n"
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _seed(args) -> int:
    env = os.environ.get("FLATLAS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"FLATLAS_SEED must be an integer, got {env!r}") from None
    return args.seed


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _system(spec: str, l: float):
    if spec in ("car", "chain2"):
        return load_system(spec, l)
    try:
        data = json.loads(_read(spec))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{spec}: invalid JSON ({exc.msg})") from None
    return load_system(data)


def _atlas(spec: str, system, l: float):
    if spec == "car-atlas":
        return load_atlas(spec, system, l)
    try:
        data = json.loads(_read(spec))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{spec}: invalid JSON ({exc.msg})") from None
    try:
        return atlas_from_dict(data, system, l)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"{spec}: malformed atlas ({exc})") from None


# --------------------------------------------------------------------------
# subcommands


def cmd_analyze(args) -> int:
    system = _system(args.system, args.l)
    rng = np.random.default_rng(_seed(args))
    M = p_matrix(system)
    rep = hyper_regular_locus(M, args.pivots, constraints=system.F, rng=rng)
    best = rep.best
    names = system.names
    locus = [sx.to_text(sx.simplify(g), names) for g in rep.locus]
    report = {
        "system": system.name,
        "P": M.to_json(names),
        "hyper_regular": bool(best.hyper_regular),
        "U": best.U.to_json(names),
        "Delta": best.Delta.to_json(names),
        "locus": locus,
        "strategies": len(rep.results),
        "best_strategy": list(best.strategy),
    }
    if rep.locus:
        res = resolve_locus(system, rep.locus, rng=rng)
        report["resolved"] = res
    _emit(report, args.out)
    return EXIT_OK


def cmd_atlas_check(args) -> int:
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    atlas = _atlas(args.atlas, None, args.l)
    reports = atlas_check(atlas, args.samples, args.tol, seed=_seed(args))
    ids = [c.id for c in atlas.charts]
    matrix = [["pass" if r.passed else "FAIL" for r in reports[i * len(ids) : (i + 1) * len(ids)]] for i in range(len(ids))]
    ok = all(r.passed for r in reports)
    _emit({"atlas": atlas.name, "charts": ids, "matrix": matrix, "passed": ok, "pairs": [r.to_dict() for r in reports]}, args.out)
    return EXIT_OK if ok else EXIT_DOMAIN


def cmd_classify(args) -> int:
    system = _system(args.system, args.l)
    if args.atlas:
        atlas = _atlas(args.atlas, system, args.l)
    elif system.name == "car":
        atlas = car_atlas(args.l)
    else:
        raise UsageError("--atlas is required for systems other than car")
    try:
        j = parse_point(system, args.point, order=1)
    except sx.ParseError as exc:
        raise UsageError(f"bad point: {exc}") from None
    cls = classify_point(atlas, j)
    print(cls.text())
    if args.verbose:
        print(json.dumps({"status": cls.status, "charts": cls.charts, "diagnostics": cls.diagnostics}))
    return EXIT_OK


def _route(path) -> RouteSpec:
    try:
        data = json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc.msg})") from None
    try:
        return RouteSpec.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"{path}: malformed route ({exc})") from None
    except ValueError as exc:
        raise MalformedInput(f"{path}: {exc}") from None


def _write_plots(traj: Trajectory, out_dir) -> list:
    d = Path(out_dir)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {d}: {exc.strerror or exc}") from None
    written = []
    for name, text in plot_tables(traj).items():
        atomic_write(d / name, text)
        written.append(str(d / name))
    return written


def cmd_plan(args) -> int:
    spec = _route(args.route)
    try:
        plan = plan_route(spec)
    except ValueError as exc:
        raise MalformedInput(str(exc)) from None
    traj = plan.traj
    atomic_write(args.out, traj.to_csv())
    summary = {
        "samples": len(traj),
        "L": plan.curve.L,
        "T": plan.sigma.T,
        "accel": plan.sigma.accel,
        "charts": sorted({c for c in traj.chart_id if c}),
        "switches": traj.metadata["switches"],
        "excluded_intervals": traj.metadata["excluded_intervals"],
        "trajectory": str(args.out),
    }
    if args.plots:
        summary["plots"] = _write_plots(traj, args.plots)
    _emit(summary, None)
    return EXIT_OK


def _load_traj(path) -> Trajectory:
    text = _read(path)
    try:
        return Trajectory.from_csv(text)
    except ValueError as exc:
        raise MalformedInput(f"{path}: {exc}") from None


def cmd_validate(args) -> int:
    if args.dt <= 0:
        raise UsageError("--dt must be positive")
    traj = _load_traj(args.traj)
    system = _system(args.system, args.l)
    rep = validate_closed_loop(traj, system, args.dt)
    rep["path_length"] = float(traj.s[-1]) if len(traj) else 0.0
    _emit(rep, args.out)
    return EXIT_OK


def cmd_export_plots(args) -> int:
    traj = _load_traj(args.traj)
    _emit({"plots": _write_plots(traj, args.out_dir)}, None)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flatlas", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, system=True):
        p.add_argument("--seed", type=int, default=7)
        p.add_argument("--l", type=float, default=2.0, help="car length in meters")
        if system:
            p.add_argument("--system", default="car", help="car, chain2 or a system JSON file")

    p = sub.add_parser("analyze", help="hyper-regularity locus of P(F)")
    common(p)
    p.add_argument("--pivots", type=int, default=None, help="number of pivot orderings to try")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("atlas-check", help="pairwise chart compatibility")
    common(p, system=False)
    p.add_argument("--atlas", default="car-atlas")
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_atlas_check)

    p = sub.add_parser("classify", help="classify a jet point")
    common(p)
    p.add_argument("--atlas")
    p.add_argument("--point", required=True)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("plan", help="plan a car route")
    p.add_argument("--route", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--plots")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("validate", help="replay a planned trajectory")
    common(p)
    p.add_argument("--traj", required=True)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("export-plots", help="plot-data CSVs from a trajectory")
    p.add_argument("--traj", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_export_plots)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FlatlasError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
