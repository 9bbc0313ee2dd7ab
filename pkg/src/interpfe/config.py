"""Run configuration: a single JSON document validated into dataclasses.

Unknown keys are rejected at every level, and the effective configuration
(with all defaults filled in) is what gets embedded in reports, so running
again from it reproduces the same numbers.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .assembly import VARIANTS
from .domains import HOLE
from .errors import ConfigError

PROBLEMS = ("poisson", "biharmonic", "elasticity")
BACKGROUND_KINDS = ("tensor-bspline", "simplicial-lagrange")
FOREGROUND_MODES = ("fitted", "unfitted")
DOMAIN_KINDS = ("rotated-square", "axis-square", "half-plane", "square-with-hole-quadrant")
RATE_KEYS = ("rateL2", "rateH1", "rateH2", "rateStress")

DEFAULT_CASE = {"poisson": "poisson-sincos", "biharmonic": "biharmonic-cos", "elasticity": "kirsch"}


def _from_dict(cls, data, where):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return cls(**data)


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


@dataclass
class CaseConfig:
    name: str | None = None
    params: dict = field(default_factory=dict)


@dataclass
class DomainConfig:
    kind: str | None = None
    params: dict | None = None


@dataclass
class BackgroundConfig:
    kind: str = "tensor-bspline"
    degree: int = 1
    level: int | None = 2
    cells: int | None = None
    bounds: list | None = None

    def validate(self):
        _require(self.kind in BACKGROUND_KINDS, f"unknown background kind {self.kind!r}")
        _require(_is_int(self.degree) and self.degree in (1, 2),
                 f"unsupported background degree {self.degree!r}")
        _require((self.level is None) != (self.cells is None),
                 "background needs exactly one of 'level' or 'cells'")
        if self.level is not None:
            _require(_is_int(self.level) and 0 <= self.level <= 10, "background level must be in 0..10")
        if self.cells is not None:
            _require(_is_int(self.cells) and self.cells >= 1, "background cells must be a positive integer")
        if self.bounds is not None:
            _require(isinstance(self.bounds, list) and len(self.bounds) == 4
                     and all(_is_num(b) for b in self.bounds)
                     and self.bounds[0] < self.bounds[1] and self.bounds[2] < self.bounds[3],
                     "background bounds must be [xmin, xmax, ymin, ymax]")


@dataclass
class ForegroundConfig:
    mode: str = "fitted"
    degree: int = 1
    refine_levels: int = 0
    refine_marker: int | None = None
    sliver_rel_tol: float = 1e-5
    cell_split: str = "two"
    eta_ratio: float = 1.0

    def validate(self):
        _require(self.mode in FOREGROUND_MODES, f"unknown foreground mode {self.mode!r}")
        _require(_is_int(self.degree) and self.degree in (1, 2),
                 f"unsupported foreground degree {self.degree!r}")
        _require(_is_int(self.refine_levels) and self.refine_levels >= 0,
                 "refine_levels must be a nonnegative integer")
        _require(self.refine_marker is None or _is_int(self.refine_marker), "refine_marker must be an integer")
        _require(_is_num(self.sliver_rel_tol) and self.sliver_rel_tol >= 0, "sliver_rel_tol must be >= 0")
        _require(self.cell_split in ("two", "four"), f"unknown cell_split {self.cell_split!r}")
        _require(_is_num(self.eta_ratio) and self.eta_ratio > 0, "eta_ratio must be positive")


@dataclass
class FormConfig:
    variant: str = "nitsche-nonsym"
    C_pen: float | None = None
    alpha: float = 5.0
    beta: float | None = None
    E: float = 200e9
    nu: float = 0.3
    allow_negative_penalty: bool = False

    def validate(self):
        _require(self.variant in VARIANTS, f"unknown Nitsche variant {self.variant!r}")
        for name in ("C_pen", "beta"):
            v = getattr(self, name)
            _require(v is None or _is_num(v), f"{name} must be a number")
        _require(_is_num(self.alpha) and _is_num(self.E) and _is_num(self.nu),
                 "alpha, E and nu must be numbers")
        _require(isinstance(self.allow_negative_penalty, bool),
                 "allow_negative_penalty must be true or false")
        if self.C_pen is not None and not self.allow_negative_penalty:
            _require(self.C_pen >= 0, "C_pen must be nonnegative")
            _require(self.variant != "nitsche-sym" or self.C_pen > 0,
                     "the symmetric Nitsche variant requires C_pen > 0")


@dataclass
class SolverConfig:
    method: str = "direct"
    tol: float | None = None

    def validate(self):
        _require(self.method in ("direct", "iterative"), f"unknown solver method {self.method!r}")
        _require(self.tol is None or (_is_num(self.tol) and self.tol > 0), "solver tol must be positive")


@dataclass
class StudyConfig:
    levels: list | None = None
    fit_last: int = 3
    windows: dict = field(default_factory=dict)

    def validate(self):
        if self.levels is not None:
            _require(isinstance(self.levels, list) and len(self.levels) == 2
                     and all(_is_int(v) for v in self.levels) and self.levels[0] <= self.levels[1],
                     "study levels must be [first, last]")
        _require(_is_int(self.fit_last) and self.fit_last >= 2, "fit_last must be an integer >= 2")
        _require(isinstance(self.windows, dict), "windows must be an object")
        for k, v in self.windows.items():
            _require(k in RATE_KEYS, f"unknown rate window {k!r}; expected one of {RATE_KEYS}")
            _require(isinstance(v, list) and len(v) == 2 and all(b is None or _is_num(b) for b in v),
                     f"window {k} must be [low, high] (either may be null)")


@dataclass
class OutputConfig:
    dir: str | None = None
    vtk: bool = False


@dataclass
class RunConfig:
    problem: str = "poisson"
    case: CaseConfig = field(default_factory=CaseConfig)
    domain: DomainConfig = field(default_factory=DomainConfig)
    background: BackgroundConfig = field(default_factory=BackgroundConfig)
    foreground: ForegroundConfig = field(default_factory=ForegroundConfig)
    form: FormConfig = field(default_factory=FormConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    study: StudyConfig = field(default_factory=StudyConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0

    _SECTIONS = {"case": CaseConfig, "domain": DomainConfig, "background": BackgroundConfig,
                 "foreground": ForegroundConfig, "form": FormConfig, "solver": SolverConfig,
                 "study": StudyConfig, "output": OutputConfig}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        data = copy.deepcopy(data)
        allowed = {"problem", "seed", *cls._SECTIONS}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
        bg = data.get("background")
        if isinstance(bg, dict) and "cells" in bg and "level" not in bg:
            bg["level"] = None
        kw: dict[str, Any] = {}
        for name, sec in cls._SECTIONS.items():
            try:
                kw[name] = _from_dict(sec, data.get(name), name)
            except TypeError as exc:  # pragma: no cover - guarded by _from_dict
                raise ConfigError(f"bad {name} section: {exc}") from exc
        cfg = cls(problem=data.get("problem", "poisson"), seed=data.get("seed", 0), **kw)
        cfg.validate()
        cfg.fill_defaults()
        return cfg

    def validate(self):
        from .verify.cases import CASE_FORMS

        _require(self.problem in PROBLEMS, f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        _require(_is_int(self.seed), "seed must be an integer")
        for name in self._SECTIONS:
            sec = getattr(self, name)
            if hasattr(sec, "validate"):
                sec.validate()
        cname = self.case.name or DEFAULT_CASE[self.problem]
        _require(cname in CASE_FORMS, f"unknown case {cname!r}")
        _require(CASE_FORMS[cname] == self.problem,
                 f"case {cname!r} belongs to problem {CASE_FORMS[cname]!r}, not {self.problem!r}")
        _require(isinstance(self.case.params, dict), "case params must be an object")
        if self.domain.kind is not None:
            _require(self.domain.kind in DOMAIN_KINDS, f"unknown domain kind {self.domain.kind!r}")
        if self.problem == "biharmonic":
            _require(self.foreground.degree == 2, "the biharmonic problem needs foreground degree 2")
        if self.foreground.mode == "unfitted":
            _require(self.domain.kind in (None, "rotated-square", "axis-square"),
                     "unfitted foreground meshes support square domains only")

    def fill_defaults(self):
        from .verify.cases import make_case

        if self.case.name is None:
            self.case.name = DEFAULT_CASE[self.problem]
        if self.domain.kind is None:
            dom = make_case(self.case.name, **self.case.params).domain
            self.domain.kind = dom["kind"]
            self.domain.params = dict(dom["params"])
        if self.domain.params is None:
            self.domain.params = {}
        if self.background.bounds is None:
            self.background.bounds = default_bounds(self.domain.kind, self.domain.params)
        if self.foreground.refine_marker is None and self.domain.kind == "square-with-hole-quadrant":
            self.foreground.refine_marker = HOLE
        if self.form.C_pen is None:
            self.form.C_pen = 10.0 if self.form.variant == "nitsche-sym" else 0.0
        if self.form.beta is None and self.problem != "poisson":
            self.form.beta = 5.0 if self.problem == "biharmonic" else 10.0
        if self.problem == "elasticity" and self.case.name == "kirsch":
            self.case.params.setdefault("E", self.form.E)
            self.case.params.setdefault("nu", self.form.nu)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    def with_level(self, level: int) -> "RunConfig":
        cfg = copy.deepcopy(self)
        cfg.background.level = int(level)
        cfg.background.cells = None
        return cfg


def default_bounds(kind: str, params: dict) -> list:
    """Background bounds: the bi-unit square for the rotated square, the
    bounding box otherwise."""
    if kind == "rotated-square":
        return [-1.0, 1.0, -1.0, 1.0]
    if kind == "square-with-hole-quadrant":
        L = params.get("hole_radius", 0.25) * params.get("side_factor", 4.0)
        return [0.0, float(L), 0.0, float(L)]
    if kind == "axis-square":
        cx, cy = params.get("center", [0.5, 0.5])
        hw = params.get("half_width", 0.5)
        return [cx - hw, cx + hw, cy - hw, cy + hw]
    return [-1.0, 1.0, -1.0, 1.0]


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {str(p)!r}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {str(p)!r} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(data)
