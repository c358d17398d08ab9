"""Run configuration: a YAML tree merged over defaults, unknown keys rejected.

Layout (every key optional)::

    seed: 0
    problem:
      p: 2.0
      bc: dirichlet            # or mixed
      dim_axial: 1             # 0 solves on the cross-section alone
      half_length: 1.0         # used by `solve`
      section: [[0, 1]]        # box extents of the cross-section
      coefficient: {family: identity}
    solver: {tol: 1.0e-8, max_iter: 50000, restarts: 0, resolution: 16, precondition: true}
    sweep:
      ells: [2, 4, 8, 16]      # or {start: 2, stop: 16, num: 4} (geometric)
      warm_start: true
      jobs: 1
      upper_bound: true
      certificate: true        # mixed only
      beta: 0.5
      gap_threshold: 1.0e-3
      gap_tol: 1.0e-6
    picone: {draws: 200, ps: [2, 2.5, 3, 4]}
    output: {directory: out, formats: [csv, json]}

Coefficient families: ``identity``; ``coupled`` (key ``a``); ``constant``
(key ``matrix``); ``polynomial`` (keys ``a11``, ``a12``, ``a22``,
``lambda_min``, ``M``). ``lambda_min`` and ``M`` may override the bounds of
any family.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .anisotropy import CoeffSpec, from_config
from .errors import ConfigError
from .grid import BC, GridSpec, _check_extents, _check_resolution

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "problem": {
        "p": 2.0,
        "bc": "dirichlet",
        "dim_axial": 1,
        "half_length": 1.0,
        "section": [[0.0, 1.0]],
        "coefficient": {"family": "identity"},
    },
    "solver": {"tol": 1e-8, "max_iter": 50000, "restarts": 0, "resolution": 16, "precondition": True},
    "sweep": {
        "ells": [2.0, 4.0, 8.0, 16.0],
        "warm_start": True,
        "jobs": 1,
        "upper_bound": True,
        "certificate": True,
        "beta": 0.5,
        "gap_threshold": 1e-3,
        "gap_tol": 1e-6,
    },
    "picone": {"draws": 200, "ps": [2.0, 2.5, 3.0, 4.0]},
    "output": {"directory": "out", "formats": ["csv", "json"]},
}

# subtrees whose content is validated elsewhere
_OPAQUE = {("problem", "coefficient"), ("sweep", "ells")}
FORMATS = {"csv", "json"}


def _merge(base: dict, override: Mapping, path: tuple = ()) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = path + (key,)
        if key not in base:
            raise ConfigError(f"unknown config key {'.'.join(map(str, here))!r}")
        if here in _OPAQUE:
            out[key] = copy.deepcopy(value)
        elif isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"config key {'.'.join(here)!r} must be a mapping")
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = value
    return out


def _number(value, name: str, kind=float):
    if isinstance(value, str):
        # YAML 1.1 reads exponent literals without a dot (1e-8) as strings
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if kind is int and int(value) != value:
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return kind(value)


def _flag(value, name: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{name} must be true or false")
    return value


def resolve_ells(value) -> list[float]:
    if isinstance(value, Mapping):
        extra = set(value) - {"start", "stop", "num"}
        if extra or len(value) != 3:
            raise ConfigError("sweep.ells range needs exactly start, stop, num")
        start = _number(value["start"], "sweep.ells.start")
        stop = _number(value["stop"], "sweep.ells.stop")
        num = _number(value["num"], "sweep.ells.num", int)
        if start <= 0 or stop <= 0 or num < 1:
            raise ConfigError("sweep.ells range needs positive start, stop and num")
        return [float(x) for x in np.geomspace(start, stop, num)]
    if not isinstance(value, (list, tuple)):
        raise ConfigError("sweep.ells must be a list or a {start, stop, num} range")
    ells = [_number(v, "sweep.ells entry") for v in value]
    if not ells:
        raise ConfigError("sweep.ells must not be empty")
    if any(e <= 0 for e in ells):
        raise ConfigError("sweep.ells entries must be positive")
    return ells


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration plus the plain resolved tree it came from."""

    tree: dict
    p: float
    bc: BC
    dim_axial: int
    half_length: float
    section: tuple[tuple[float, float], ...]
    coeff: CoeffSpec
    tol: float
    max_iter: int
    restarts: int
    resolution: int
    precondition: bool
    ells: tuple[float, ...]
    warm_start: bool
    jobs: int
    seed: int

    def grid_spec(self, half_length: float | None = None) -> GridSpec:
        return GridSpec(
            self.dim_axial,
            self.half_length if half_length is None else half_length,
            self.section,
            self.resolution,
            self.bc,
        )


def parse_config(raw: Mapping | None, overrides: Mapping | None = None) -> RunConfig:
    """Merge ``raw`` (and then ``overrides``) over the defaults and validate."""
    raw = {} if raw is None else raw
    if not isinstance(raw, Mapping):
        raise ConfigError("config must be a mapping at the top level")
    tree = _merge(DEFAULTS, raw)
    if overrides:
        tree = _merge(tree, overrides)
    prob, solv, swp = tree["problem"], tree["solver"], tree["sweep"]

    p = _number(prob["p"], "problem.p")
    if not p >= 2:
        raise ConfigError(f"p must be ≥ 2, got {p:g}")
    bc = BC.parse(prob["bc"])
    dim_axial = _number(prob["dim_axial"], "problem.dim_axial", int)
    if dim_axial < 0:
        raise ConfigError("problem.dim_axial must be >= 0")
    if dim_axial == 0 and bc is not BC.DIRICHLET:
        raise ConfigError("a cross-section-only problem is always Dirichlet")
    try:
        section = tuple((float(lo), float(hi)) for lo, hi in prob["section"])
    except (TypeError, ValueError):
        raise ConfigError("problem.section must be a list of [lo, hi] pairs") from None
    _check_extents(section)
    half_length = _number(prob["half_length"], "problem.half_length")
    if not isinstance(prob["coefficient"], Mapping):
        raise ConfigError("problem.coefficient must be a mapping")
    try:
        coeff = from_config(prob["coefficient"], dim_axial, len(section))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad coefficient block: {exc}") from None

    resolution = _number(solv["resolution"], "solver.resolution", int)
    _check_resolution(resolution)
    tol = _number(solv["tol"], "solver.tol")
    if not tol > 0:
        raise ConfigError("solver.tol must be positive")
    max_iter = _number(solv["max_iter"], "solver.max_iter", int)
    restarts = _number(solv["restarts"], "solver.restarts", int)
    if max_iter < 1 or restarts < 0:
        raise ConfigError("solver.max_iter must be >= 1 and solver.restarts >= 0")

    ells = resolve_ells(swp["ells"])
    tree["sweep"]["ells"] = ells
    jobs = _number(swp["jobs"], "sweep.jobs", int)
    if jobs < 1:
        raise ConfigError("sweep.jobs must be >= 1")
    for key in ("warm_start", "upper_bound", "certificate"):
        _flag(swp[key], f"sweep.{key}")
    _flag(solv["precondition"], "solver.precondition")
    beta = _number(swp["beta"], "sweep.beta")
    if not 0 < beta < 1:
        raise ConfigError("sweep.beta must lie in (0, 1)")

    pic = tree["picone"]
    if _number(pic["draws"], "picone.draws", int) < 1:
        raise ConfigError("picone.draws must be >= 1")
    if not pic["ps"] or any(_number(q, "picone.ps entry") < 2 for q in pic["ps"]):
        raise ConfigError("picone.ps entries must be >= 2")
    formats = tree["output"]["formats"]
    if not isinstance(formats, list) or not set(formats) <= FORMATS:
        raise ConfigError(f"output.formats must be a subset of {sorted(FORMATS)}")

    seed = _number(tree["seed"], "seed", int)
    tree["seed"] = seed
    prob.update(p=p, bc=bc.value, dim_axial=dim_axial, half_length=half_length, section=[list(e) for e in section])
    solv.update(tol=tol, max_iter=max_iter, restarts=restarts, resolution=resolution)
    swp.update(jobs=jobs, beta=beta, gap_threshold=_number(swp["gap_threshold"], "sweep.gap_threshold"),
               gap_tol=_number(swp["gap_tol"], "sweep.gap_tol"))
    pic["draws"] = int(pic["draws"])
    pic["ps"] = [float(_number(q, "picone.ps entry")) for q in pic["ps"]]
    if dim_axial:
        GridSpec(dim_axial, half_length, section, resolution, bc)
    return RunConfig(
        tree=tree,
        p=p,
        bc=bc,
        dim_axial=dim_axial,
        half_length=half_length,
        section=section,
        coeff=coeff,
        tol=tol,
        max_iter=max_iter,
        restarts=restarts,
        resolution=resolution,
        precondition=solv["precondition"],
        ells=tuple(ells),
        warm_start=swp["warm_start"],
        jobs=jobs,
        seed=seed,
    )


def load_config(path: str | Path | None, overrides: Mapping | None = None) -> RunConfig:
    if path is None:
        return parse_config({}, overrides)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return parse_config(raw, overrides)
