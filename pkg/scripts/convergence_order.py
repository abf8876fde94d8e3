"""Empirical order of the RK4 replay: error ratios under step halving on a coarse replan of a route."""

import argparse

from flatlas.implicit_system import car_system
from flatlas.planner import RouteSpec, convergence_ratios, demo_route_path, plan_route


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--route", default=str(demo_route_path()))
    ap.add_argument("--dt", type=float, default=0.1, help="sample spacing of the replan")
    ap.add_argument("--halvings", type=int, default=4)
    args = ap.parse_args()

    spec = RouteSpec.load(args.route)
    spec.dt = args.dt
    traj = plan_route(spec).traj
    # at fine sampling the differences fall to roundoff and the ratios stop meaning anything
    ratios = convergence_ratios(traj, car_system(spec.l), args.dt, args.halvings)
    for k, q in enumerate(ratios):
        print(f"h = {args.dt / 2 ** k:.4g} -> {args.dt / 2 ** (k + 1):.4g}: ratio {q:.2f}")
    print("fourth order expects ratios near 16")


if __name__ == "__main__":
    main()
