"""Singularity analysis of the kinematic car: P(F), the U certificate, the locus, and a few classified points."""

import argparse
import json

import numpy as np

from flatlas import symexpr as sx
from flatlas.atlas import car_atlas, classify_point
from flatlas.implicit_system import car_system, p_matrix, parse_point, resolve_locus
from flatlas.orepoly import hyper_regular_locus

POINTS = [
    "x=0,y=0,theta=0,xdot=1,ydot=0,thetadot=0",
    "x=0,y=0,theta=1.5707963267948966,xdot=0,ydot=1,thetadot=0.3",
    "x=1,y=2,theta=0.4,xdot=0,ydot=0,thetadot=0",
    "x=0,y=0,theta=0,xdot=0,ydot=0,thetadot=1",
    "x=0,y=0,theta=0,xdot=0,ydot=2,thetadot=0",
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--l", type=float, default=2.0)
    args = ap.parse_args()

    car = car_system(args.l)
    rng = np.random.default_rng(args.seed)
    M = p_matrix(car)
    rep = hyper_regular_locus(M, constraints=car.F, rng=rng)
    print("P(F) =", M)
    print("hyper-regular:", rep.best.hyper_regular, "| strategies tried:", len(rep.results))
    print("U =", rep.best.U)
    locus = [sx.to_text(sx.simplify(g), car.names) for g in rep.locus]
    print("locus generators:", locus)
    print("resolved:", json.dumps(resolve_locus(car, rep.locus, rng=rng)))

    atlas = car_atlas(args.l)
    for text in POINTS:
        print(f"{text:60s} -> {classify_point(atlas, parse_point(car, text, order=1)).text()}")


if __name__ == "__main__":
    main()
