"""Command-line entry point.

    interpfe run <config.json> [--out DIR]
    interpfe study <config.json> [--levels a..b] [--out DIR]
    interpfe export <config.json> --what mesh,extraction,system [--out DIR]

Exit codes: 0 success, 1 invalid configuration, 2 geometry/mesh failure,
3 solver failure, 4 a fitted rate outside its configured window.
Progress goes to stderr; machine-readable output only to files.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .errors import (ArgumentError, CapabilityError, ConfigError, GeometryError,
                     OutOfRangeError, PreconditionError, SolverError, StageError)

EXIT_OK, EXIT_CONFIG, EXIT_GEOMETRY, EXIT_SOLVER, EXIT_RATE = 0, 1, 2, 3, 4
EXPORT_TARGETS = ("mesh", "extraction", "system")

log = logging.getLogger("interpfe")


def exit_code_for(exc: BaseException) -> int:
    """Map a toolkit exception onto the documented exit codes."""
    if isinstance(exc, StageError):
        return exit_code_for(exc.error)
    if isinstance(exc, SolverError):
        return EXIT_SOLVER
    if isinstance(exc, (GeometryError, OutOfRangeError)):
        return EXIT_GEOMETRY
    if isinstance(exc, (ConfigError, ArgumentError, CapabilityError, PreconditionError)):
        return EXIT_CONFIG
    raise exc


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.output.dir or "results")
    out.mkdir(parents=True, exist_ok=True)
    cfg.output.dir = str(out)
    return out


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = int(args.seed)
    return cfg


def _stem(cfg: RunConfig) -> str:
    return (f"{cfg.problem}_{cfg.case.name}_{cfg.background.kind}_k{cfg.background.degree}"
            f"_kappa{cfg.foreground.degree}_{cfg.foreground.mode}")


def _level_stem(cfg: RunConfig) -> str:
    bg = cfg.background
    return _stem(cfg) + (f"_R{bg.level}" if bg.level is not None else f"_n{bg.cells}")


def cmd_run(args) -> int:
    from .io import solution_point_data, write_vtk
    from .verify.study import _json_default, run_case

    cfg = _load(args)
    out = _out_dir(args, cfg)
    res = run_case(cfg)
    stem = _level_stem(cfg)
    report = out / f"{stem}.json"
    report.write_text(json.dumps(res.summary(), indent=2, sort_keys=True, default=_json_default))
    print(f"wrote {report}", file=sys.stderr)
    if cfg.output.vtk:
        ncomp = 2 if cfg.problem == "elasticity" else 1
        vtk = write_vtk(out / f"{stem}.vtk", res.mesh,
                        point_data=solution_point_data(res.mesh, res.c, ncomp))
        print(f"wrote {vtk}", file=sys.stderr)
    err = {k: v for k, v in res.errors.items() if v is not None}
    print("errors: " + ", ".join(f"{k}={v:.3e}" for k, v in err.items()), file=sys.stderr)
    return EXIT_OK


def cmd_study(args) -> int:
    from .verify.study import convergence_study

    cfg = _load(args)
    out = _out_dir(args, cfg)
    stem = _stem(cfg)
    try:
        rep = convergence_study(cfg, args.levels)
    except StageError as exc:
        partial = getattr(exc, "partial", None)
        if partial is not None:
            pc, pj = partial.write(out, stem + "_partial")
            print(f"wrote partial report {pj}", file=sys.stderr)
        raise
    pc, pj = rep.write(out, stem)
    print(f"wrote {pc} and {pj}", file=sys.stderr)
    print("rates: " + ", ".join(f"{k}={v:.3f}" for k, v in rep.rates.items() if v is not None),
          file=sys.stderr)
    bad = rep.window_violations()
    for key, val, (lo, hi) in bad:
        shown = "n/a" if val is None else f"{val:.3f}"
        print(f"rate {key}={shown} outside window [{lo}, {hi}]", file=sys.stderr)
    return EXIT_RATE if bad else EXIT_OK


def cmd_export(args) -> int:
    from .extraction import build_extraction
    from .io import write_matrix_market, write_mesh_json, write_vector, write_vtk
    from .verify.study import _Stage, build_background, build_foreground, run_case

    cfg = _load(args)
    targets = [t.strip() for t in args.what.split(",") if t.strip()]
    unknown = sorted(set(targets) - set(EXPORT_TARGETS))
    if unknown or not targets:
        raise ConfigError(f"--what takes a comma list of {', '.join(EXPORT_TARGETS)}; "
                          f"got {args.what!r}")
    out = _out_dir(args, cfg)
    stem = _level_stem(cfg)
    written = []
    if "system" in targets:
        res = run_case(cfg)
        space, mesh, M = res.space, res.mesh, res.extraction
    else:
        timings = {}
        with _Stage("space", timings):
            space = build_background(cfg)
        with _Stage("mesh", timings):
            mesh = build_foreground(cfg, space.grid)
        if "extraction" in targets:
            with _Stage("extraction", timings):
                M = build_extraction(space, mesh, cfg.foreground.degree)
    if "mesh" in targets:
        written.append(write_vtk(out / f"{stem}_mesh.vtk", mesh))
        written.append(write_mesh_json(out / f"{stem}_mesh.json", mesh))
    if "extraction" in targets:
        written.append(write_matrix_market(out / f"{stem}_M.mtx", M.matrix,
                                           comment="extraction matrix, columns = active background dofs"))
        written.append(write_vector(out / f"{stem}_active_map.txt", M.active_map))
    if "system" in targets:
        written.append(write_matrix_market(out / f"{stem}_A.mtx", res.system.A))
        written.append(write_vector(out / f"{stem}_B.txt", res.system.B))
        written.append(write_matrix_market(out / f"{stem}_K.mtx", res.K))
        written.append(write_vector(out / f"{stem}_F.txt", res.F))
        written.append(write_vector(out / f"{stem}_d.txt", res.d))
    for p in written:
        print(f"wrote {p}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="interpfe", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="JSON run configuration")
        sp.add_argument("--out", help="output directory (default: config output.dir or ./results)")
        sp.add_argument("--seed", type=int, default=None,
                        help="seed recorded in the effective config (randomized tests only)")

    common(sub.add_parser("run", help="run one case and write a JSON report"))
    st = sub.add_parser("study", help="convergence study over refinement levels")
    common(st)
    st.add_argument("--levels", help="level range 'a..b' (default: config study.levels)")
    ex = sub.add_parser("export", help="export mesh, extraction matrix and/or system")
    common(ex)
    ex.add_argument("--what", default="mesh", help="comma list of mesh,extraction,system")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    handler = {"run": cmd_run, "study": cmd_study, "export": cmd_export}[args.command]
    try:
        return handler(args)
    except Exception as exc:  # mapped onto exit codes, anything else propagates
        code = exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
