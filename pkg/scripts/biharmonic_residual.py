"""Consistency residual of the biharmonic discretisation for an exact quadratic.

For u = c0 + c1 x + c2 y + c3 x^2 + c4 xy + c5 y^2 the background interpolant
d_I is exact, so r = K d_I - F measures the inconsistency of the interpolated
(C0, non-conforming) space. The script splits max|r| by which pair of
rotated-square sides the background function sits next to.

    python3 scripts/biharmonic_residual.py [--coef 0,0,0,1,0,1] [--split two|four]
"""
from __future__ import annotations

import argparse

import numpy as np

import interpfe.verify.cases as cases
from interpfe.verify.study import run_case


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--coef", default="0,0,0,1,0,1", help="c0..c5 of the quadratic")
    ap.add_argument("--split", default="two", choices=("two", "four"))
    ap.add_argument("--levels", default="1,2,3,4")
    args = ap.parse_args()
    coef = tuple(float(v) for v in args.coef.split(","))
    cases.CASES["quadratic-biharmonic"] = lambda: cases._polynomial_case(
        "quadratic-biharmonic", "biharmonic", coef, cases.ROTATED_SQUARE, 0.0)
    cases.CASE_FORMS["quadratic-biharmonic"] = "biharmonic"
    print(" R   max|r| (x+y sides)   max|r| (x-y sides)   H2-broken error")
    for R in (int(v) for v in args.levels.split(",")):
        res = run_case({"problem": "biharmonic", "case": {"name": "quadratic-biharmonic"},
                        "background": {"degree": 2, "level": R},
                        "foreground": {"degree": 2, "cell_split": args.split}})
        space, M = res.space, res.extraction
        d_I = M.restrict(space.interpolate_function(res.case.u))
        r = res.K @ d_I - res.F
        kx, ky = space.knots
        act = M.active_map
        g = np.column_stack([kx.greville()[act % kx.n_funcs], ky.greville()[act // kx.n_funcs]])
        q13 = g[:, 0] * g[:, 1] > 0  # next to the sides x + y = +-1/2
        print(f"{R:2d}   {abs(r[q13]).max():18.3e}   {abs(r[~q13]).max():18.3e}   "
              f"{res.errors['H2_broken']:.3e}")


if __name__ == "__main__":
    main()
