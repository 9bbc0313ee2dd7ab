"""Run every convergence suite and write CSV/JSON reports plus a rate table.

    python3 scripts/run_studies.py [--out results] [--only poisson_k1 ...]
"""
from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from interpfe.verify.study import convergence_study

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def suites():
    def load(name):
        return json.loads((CONFIGS / f"{name}.json").read_text())

    out = {n: load(n) for n in ("poisson_k1", "poisson_k2", "biharmonic", "kirsch_k1",
                                "kirsch_k2_refined", "unfitted_lagrange_k2")}
    unref = load("kirsch_k2_refined")
    unref["foreground"]["refine_levels"] = 0
    unref["study"]["windows"] = {}
    out["kirsch_k2_unrefined"] = unref
    for kind, k in (("simplicial-lagrange", 1), ("tensor-bspline", 1), ("tensor-bspline", 2)):
        cfg = load("poisson_k1" if k == 1 else "poisson_k2")
        cfg["background"]["kind"] = kind
        cfg["foreground"]["mode"] = "unfitted"
        out[f"unfitted_{kind.split('-')[-1]}_k{k}"] = cfg
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", nargs="*")
    args = ap.parse_args()
    out = Path(args.out)
    for name, cfg in suites().items():
        if args.only and name not in args.only:
            continue
        t0 = time.perf_counter()
        rep = convergence_study(cfg)
        rep.write(out, name)
        rates = ", ".join(f"{k}={v:.3f}" for k, v in rep.rates.items() if v is not None)
        flag = "ok" if not rep.window_violations() else "OUTSIDE WINDOW"
        print(f"{name:24s} {rates:45s} {flag:15s} {time.perf_counter() - t0:5.1f}s", flush=True)


if __name__ == "__main__":
    main()
