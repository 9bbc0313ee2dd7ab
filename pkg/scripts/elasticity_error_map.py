"""Where does the plate-with-hole stress error live?

Splits the element-wise stress error into hole, outer-boundary and
symmetry-axis bands and reports conditioning and mesh quality per level.

    python3 scripts/elasticity_error_map.py [--degree 2] [--refine 1] [--beta 10]
"""
from __future__ import annotations

import argparse

import numpy as np

from interpfe.meshgen import quality_report
from interpfe.verify.cases import lame
from interpfe.verify.norms import _element_data
from interpfe.verify.study import run_case


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--degree", type=int, default=2)
    ap.add_argument("--refine", type=int, default=1)
    ap.add_argument("--beta", type=float, default=10.0)
    ap.add_argument("--levels", default="3,4,5")
    args = ap.parse_args()
    k = args.degree
    lam, mu = lame(200e9, 0.3)
    for R in (int(v) for v in args.levels.split(",")):
        res = run_case({"problem": "elasticity", "background": {"degree": k, "level": R},
                        "foreground": {"degree": k, "refine_levels": args.refine},
                        "form": {"variant": "nitsche-sym", "beta": args.beta}})
        mesh = res.mesh
        nodes, dm = mesh.lagrange_nodes(k)
        nn = len(nodes)
        x, w, _, G, _ = _element_data(mesh, k, 1)
        gu = np.stack([np.einsum("tqla,tl->tqa", G, res.c[:nn][dm]),
                       np.einsum("tqla,tl->tqa", G, res.c[nn:][dm])], axis=-2)
        eps = 0.5 * (gu + np.swapaxes(gu, -1, -2))
        sig = 2 * mu * eps + lam * (eps[..., 0, 0] + eps[..., 1, 1])[..., None, None] * np.eye(2)
        err = np.sum(w * np.sum((sig - res.case.stress(x[..., 0], x[..., 1])) ** 2, axis=(-1, -2)),
                     axis=1)
        cen = mesh.vertices[mesh.triangles].mean(axis=1)
        rad = np.hypot(*cen.T)
        band = lambda m: np.sqrt(err[m].sum())  # noqa: E731
        q = quality_report(mesh)
        print(f"R={R}: total {np.sqrt(err.sum()):.3e}  hole {band(rad < 0.3):.3e}  "
              f"outer {band(cen.max(axis=1) > 0.9):.3e}  axes {band(cen.min(axis=1) < 0.05):.3e}  "
              f"cond {res.solve_report['condition_estimate']:.2g}  "
              f"max aspect {q.max_aspect_ratio:.3g}")


if __name__ == "__main__":
    main()
