"""End-to-end runs and convergence studies.

The pipeline of one run is: manufactured case -> background space ->
foreground mesh -> extraction ``M`` -> foreground system ``A, B`` ->
``K = M^T A M``, ``F = M^T B`` -> solve ``K d = F`` -> ``c = M d`` -> error
norms. Failures are re-raised as :class:`~interpfe.errors.StageError`
tagged with the stage name.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..assembly import (FormParams, assemble_biharmonic, assemble_elasticity,
                        assemble_poisson)
from ..config import RunConfig
from ..domains import make_domain
from ..errors import ConfigError, GeometryError, InterpFEError, StageError
from ..extraction import build_extraction, vector_extraction
from ..meshgen import (filter_slivers, generate_fitted_foreground,
                       generate_unfitted_foreground, quality_report,
                       refine_near_boundary)
from ..solver import recover_foreground, restrict_rhs, solve, triple_product
from ..spaces import BackgroundGrid, make_background_space
from .cases import lame, make_case
from .norms import displacement_error, error_norms, stress_error

log = logging.getLogger("interpfe")

CSV_COLUMNS = ["R", "h", "eta", "n_background", "nu_foreground",
               "errL2", "errH1", "errH2broken", "rateL2", "rateH1", "rateH2"]
STRESS_COLUMNS = ["errStress", "rateStress"]
_ERR_OF_RATE = {"rateL2": "errL2", "rateH1": "errH1", "rateH2": "errH2broken",
                "rateStress": "errStress"}


def level_h(level: int) -> float:
    """Background element size ``2^-(R+1)`` of refinement level ``R``."""
    return 2.0 ** (-(level + 1))


@dataclass(eq=False)
class CaseResult:
    config: dict
    level: int | None
    h: float
    eta: float
    n_background: int
    nu_foreground: int
    errors: dict
    solve_report: dict
    mesh_info: dict
    timings: dict = field(default_factory=dict)
    # heavy objects, not serialised
    case: Any = None
    space: Any = None
    mesh: Any = None
    extraction: Any = None
    system: Any = None
    K: Any = None
    F: Any = None
    d: Any = None
    c: Any = None

    def summary(self) -> dict:
        return {"level": self.level, "h": self.h, "eta": self.eta,
                "n_background": self.n_background, "nu_foreground": self.nu_foreground,
                "errors": self.errors, "solve": self.solve_report, "mesh": self.mesh_info,
                "config": self.config}


class _Stage:
    """Context manager that tags errors with the stage name and times it."""

    def __init__(self, name, timings):
        self.name, self.timings = name, timings

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.name] = time.perf_counter() - self.t0
        if exc is not None and not isinstance(exc, StageError):
            if isinstance(exc, (InterpFEError, ValueError, NotImplementedError,
                                np.linalg.LinAlgError)):
                raise StageError(self.name, exc) from exc
        return False


def _as_config(config) -> RunConfig:
    if isinstance(config, RunConfig):
        return config
    return RunConfig.from_dict(config)


def build_background(cfg: RunConfig):
    bg = cfg.background
    xmin, xmax, ymin, ymax = bg.bounds
    if bg.level is not None:
        h = level_h(bg.level)
    else:
        h = (xmax - xmin) / bg.cells
    grid = BackgroundGrid.from_bounds(bg.bounds, h)
    return make_background_space(bg.kind, grid, bg.degree)


def build_foreground(cfg: RunConfig, grid: BackgroundGrid):
    fg = cfg.foreground
    domain = make_domain(cfg.domain.kind, **cfg.domain.params)
    if fg.mode == "fitted":
        mesh = generate_fitted_foreground(grid, domain, fg.cell_split)
    else:
        mesh = generate_unfitted_foreground(domain, fg.eta_ratio * grid.h)
    if fg.refine_levels > 0:
        marker = fg.refine_marker
        if marker is None:
            raise ConfigError("refine_levels > 0 needs a refine_marker for this domain")
        mesh = refine_near_boundary(mesh, fg.refine_levels, marker)
    if fg.sliver_rel_tol > 0:
        mesh = filter_slivers(mesh, fg.sliver_rel_tol)
    if mesh.n_triangles == 0:
        raise GeometryError("empty foreground mesh")
    return mesh


def run_case(config, keep_objects: bool = True) -> CaseResult:
    """Run one configuration end to end and measure the errors."""
    cfg = _as_config(config)
    timings: dict[str, float] = {}
    kappa = cfg.foreground.degree
    with _Stage("case", timings):
        case = make_case(cfg.case.name, **cfg.case.params)
    with _Stage("space", timings):
        space = build_background(cfg)
    with _Stage("mesh", timings):
        mesh = build_foreground(cfg, space.grid)
        q = quality_report(mesh)
    with _Stage("extraction", timings):
        M = build_extraction(space, mesh, kappa)
    with _Stage("assembly", timings):
        fc = cfg.form
        params = FormParams(variant=fc.variant, C_pen=fc.C_pen, alpha=fc.alpha, beta=fc.beta,
                            h=space.h, E=fc.E, nu=fc.nu,
                            dirichlet_markers=tuple(sorted(mesh.domain.markers.values())),
                            allow_negative_penalty=fc.allow_negative_penalty)
        if cfg.problem == "poisson":
            system = assemble_poisson(mesh, kappa, params, case.f, case.g)
        elif cfg.problem == "biharmonic":
            system = assemble_biharmonic(mesh, kappa, params, case.f, case.sigma)
        else:
            system = assemble_elasticity(mesh, kappa, params, case.traction, case.sym_markers)
        Mop = vector_extraction(M, 2) if cfg.problem == "elasticity" else M.matrix
    with _Stage("triple-product", timings):
        K = triple_product(Mop, system.A)
        F = restrict_rhs(Mop, system.B)
    with _Stage("solve", timings):
        d, report = solve(K, F, cfg.solver.method, cfg.solver.tol, symmetric=system.symmetric,
                          observe=Mop)
        c = recover_foreground(Mop, d)
    with _Stage("norms", timings):
        errors = _errors(cfg, case, mesh, kappa, c, M.node_coords)
    srep = report.to_dict()
    srep.pop("wall_time", None)  # keep reports reproducible
    ncomp = 2 if cfg.problem == "elasticity" else 1
    mesh_info = {"n_triangles": mesh.n_triangles, "n_facets": mesh.n_facets,
                 "slivers_removed": int(mesh.info.get("slivers_removed", 0)),
                 "min_area": q.min_area, "max_area": q.max_area,
                 "max_aspect_ratio": q.max_aspect_ratio, "fitted": mesh.fitted}
    res = CaseResult(config=cfg.to_dict(), level=cfg.background.level, h=space.h, eta=mesh.eta,
                     n_background=Mop.shape[1], nu_foreground=Mop.shape[0], errors=errors,
                     solve_report=srep, mesh_info=mesh_info, timings=timings)
    assert res.n_background == ncomp * M.shape[1]
    if keep_objects:
        res.case, res.space, res.mesh, res.extraction = case, space, mesh, M
        res.system, res.K, res.F, res.d, res.c = system, K, F, d, c
    log.info("%s R=%s h=%.4g: %s (%.2fs)", cfg.problem, cfg.background.level, space.h,
             ", ".join(f"{k}={v:.3e}" for k, v in errors.items() if v is not None),
             sum(timings.values()))
    return res


def _errors(cfg, case, mesh, kappa, c, nodes):
    if cfg.problem == "elasticity":
        lam, mu = lame(cfg.form.E, cfg.form.nu)
        l2, h1 = displacement_error(mesh, kappa, c, case.u, case.grad)
        nn = len(nodes)
        u_ex = case.u(nodes[:, 0], nodes[:, 1])
        nodal = float(max(np.max(np.abs(c[:nn] - u_ex[:, 0])), np.max(np.abs(c[nn:] - u_ex[:, 1]))))
        return {"L2": l2, "H1_semi": h1, "H2_broken": None,
                "stress_L2": stress_error(mesh, kappa, c, case.stress, lam, mu),
                "nodal_max": nodal}
    out = error_norms(mesh, kappa, c, case)
    if cfg.problem != "biharmonic":  # broken H2 is only meaningful for the fourth-order form
        out["H2_broken"] = None
    out["nodal_max"] = float(np.max(np.abs(c - case.u(nodes[:, 0], nodes[:, 1]))))
    return out


# ------------------------------------------------------------ convergence

def fit_rate(h, err) -> float | None:
    """Least-squares slope of ``log(err)`` against ``log(h)``."""
    h = np.asarray(h, dtype=float)
    e = np.asarray([np.nan if v is None else v for v in err], dtype=float)
    if len(h) < 2 or not np.all(np.isfinite(e)) or np.any(e <= 0):
        return None
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


@dataclass(eq=False)
class ConvergenceReport:
    """Per-level errors and sizes, plus rates fitted over the finest levels."""

    config: dict
    rows: list
    rates: dict
    fit_levels: list
    windows: dict = field(default_factory=dict)
    problem: str = "poisson"
    complete: bool = True
    failure: str | None = None

    @property
    def columns(self):
        return CSV_COLUMNS + (STRESS_COLUMNS if self.problem == "elasticity" else [])

    def errors(self, key: str) -> list:
        return [r[key] for r in self.rows]

    def window_violations(self) -> list:
        """``(rate_key, value, [low, high])`` for every rate outside its window."""
        bad = []
        for key, (lo, hi) in sorted(self.windows.items()):
            v = self.rates.get(key)
            if v is None or (lo is not None and v < lo) or (hi is not None and v > hi):
                bad.append((key, v, [lo, hi]))
        return bad

    def monotone(self, key: str) -> bool:
        e = [v for v in self.errors(key) if v is not None]
        return all(b < a for a, b in zip(e, e[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r.get(col)) for col in self.columns])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"problem": self.problem, "config": self.config, "rows": self.rows,
                "rates": self.rates, "fit_levels": self.fit_levels, "windows": self.windows,
                "window_violations": [list(v) for v in self.window_violations()],
                "complete": self.complete, "failure": self.failure}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)

    def write(self, out_dir, stem: str = "study") -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        pc, pj = out / f"{stem}.csv", out / f"{stem}.json"
        pc.write_text(self.to_csv())
        pj.write_text(self.to_json())
        return pc, pj


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % float(v)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _row(res: CaseResult) -> dict:
    e = res.errors
    return {"R": res.level, "h": res.h, "eta": res.eta, "n_background": res.n_background,
            "nu_foreground": res.nu_foreground, "errL2": e.get("L2"), "errH1": e.get("H1_semi"),
            "errH2broken": e.get("H2_broken"), "errStress": e.get("stress_L2"),
            "nodal_max": e.get("nodal_max"), "slivers_removed": res.mesh_info["slivers_removed"],
            "n_triangles": res.mesh_info["n_triangles"]}


def _local_rates(rows):
    for i, r in enumerate(rows):
        for rk, ek in _ERR_OF_RATE.items():
            r[rk] = None if i == 0 else fit_rate([rows[i - 1]["h"], r["h"]],
                                                 [rows[i - 1][ek], r[ek]])


def _parse_levels(levels):
    if isinstance(levels, str):
        try:
            a, b = levels.split("..")
            return list(range(int(a), int(b) + 1))
        except ValueError:
            raise ConfigError(f"levels must look like 'a..b', got {levels!r}") from None
    levels = list(levels)
    if len(levels) == 2 and levels[0] <= levels[1]:
        return list(range(int(levels[0]), int(levels[1]) + 1))
    return [int(v) for v in levels]


def convergence_study(config, levels=None) -> ConvergenceReport:
    """Run ``run_case`` per level and fit rates over the last ``fit_last`` levels.

    ``levels`` is ``'a..b'``, ``[a, b]`` or taken from the config's study
    section. If a level fails, a :class:`StageError` is raised whose
    ``partial`` attribute holds the report of the completed levels.
    """
    cfg = _as_config(config)
    if levels is None:
        if cfg.study.levels is None:
            raise ConfigError("no study levels given")
        levels = cfg.study.levels
    lv = _parse_levels(levels)
    if len(lv) < 3:
        raise ConfigError("at least 3 levels required for a convergence study")
    cfg.study.levels = [lv[0], lv[-1]]
    eff = cfg.to_dict()
    rows = []
    nfit = min(cfg.study.fit_last, len(lv))
    windows = {k: list(v) for k, v in cfg.study.windows.items()}
    for R in lv:
        try:
            res = run_case(cfg.with_level(R), keep_objects=False)
        except StageError as exc:
            _local_rates(rows)
            exc.partial = ConvergenceReport(eff, rows, {}, [], windows, cfg.problem,
                                            complete=False, failure=f"level {R}: {exc}")
            raise
        rows.append(_row(res))
    _local_rates(rows)
    tail = rows[-nfit:]
    rates = {rk: fit_rate([r["h"] for r in tail], [r[ek] for r in tail])
             for rk, ek in _ERR_OF_RATE.items()}
    if cfg.problem != "elasticity":
        rates.pop("rateStress")
    return ConvergenceReport(eff, rows, rates, [r["R"] for r in tail], windows, cfg.problem)


def elasticity_study(config, refine_levels=(0, 1, 2), levels=None) -> dict:
    """Stress-error convergence for several levels of hole refinement.

    Returns ``{refine_level: ConvergenceReport}``.
    """
    cfg = _as_config(config)
    if cfg.problem != "elasticity":
        raise ConfigError("elasticity_study needs an elasticity configuration")
    out = {}
    for r in refine_levels:
        c = RunConfig.from_dict(cfg.to_dict())
        c.foreground.refine_levels = int(r)
        out[int(r)] = convergence_study(c, levels)
    return out

