"""Command-line front end.

    plap solve  --config run.yaml [--out DIR] [--dump-eigenfunction]
    plap sweep  --config run.yaml [--out DIR] [--jobs N]
    plap picone --config run.yaml [--seed N]
    plap report --out DIR

Exit codes: 0 ok, 1 a checked property failed, 2 configuration error,
3 the eigensolver did not converge (results are still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .asymptotics import SweepReport, decide_gap, fit_rate, sweep
from .config import RunConfig, load_config
from .constructions import gap_certificate
from .eigensolver import cross_section_mu1, minimize_rayleigh, section_problem
from .energy import Problem
from .errors import ConfigError, InsufficientData, NonPositiveGap, PlapError
from .grid import BC, Field, build_grid, build_section_grid
from .picone import picone_L, picone_fuzz

log = logging.getLogger("plap")

EXIT_OK, EXIT_PROPERTY, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2, 3
SWEEP_COLUMNS = (
    "ell", "lambda", "residual", "iterations", "converged",
    "upper_bound", "mu1", "reduced_lambda", "coupling_measure",
)


# -- serialization ---------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ""
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows, config: dict) -> None:
    """CSV with a leading ``# config: {...}`` provenance line."""
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(_clean(config), sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    path.write_text(buf.getvalue(), encoding="utf-8")


def dump_eigenfunction(path: Path, u: Field, config: dict) -> None:
    grid = u.grid
    names = [f"x{d + 1}" for d in range(grid.ndim)]
    coords = np.stack(np.meshgrid(*grid.axes, indexing="ij"), axis=-1).reshape(-1, grid.ndim)
    rows = (dict(zip(names + ["u"], list(map(float, c)) + [float(v)])) for c, v in zip(coords, u.values.ravel()))
    write_csv(path, names + ["u"], rows, config)


# -- commands ----------------------------------------------------------------------

def _outdir(cfg: RunConfig, override: str | None) -> Path:
    out = Path(override if override is not None else cfg.tree["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _problem_for_solve(cfg: RunConfig) -> Problem:
    if cfg.dim_axial == 0:
        return Problem(build_section_grid(cfg.section, cfg.resolution), cfg.coeff, cfg.p)
    return Problem(build_grid(cfg.grid_spec()), cfg.coeff, cfg.p)


def cmd_solve(cfg: RunConfig, out: Path, dump: bool = False) -> int:
    prob = _problem_for_solve(cfg)
    res = minimize_rayleigh(
        prob, tol=cfg.tol, max_iter=cfg.max_iter, precondition=cfg.precondition,
        restarts=cfg.restarts, seed=cfg.seed,
    )
    formats = cfg.tree["output"]["formats"]
    if "json" in formats:
        write_json(out / "solve.json", {"config": cfg.tree, "result": res.summary(), "version": __version__})
    if "csv" in formats:
        write_csv(out / "solve.csv", list(res.summary()), [res.summary()], cfg.tree)
    if dump:
        dump_eigenfunction(out / "eigenfunction.csv", res.eigenfunction, cfg.tree)
    print(f"lambda = {res.lam:.10g}  residual = {res.residual:.3g}  iterations = {res.iterations}")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _sweep_rows(report: SweepReport) -> list[dict]:
    rows = []
    for r in report.records:
        rows.append({
            "ell": r.ell, "lambda": r.lam, "residual": r.residual, "iterations": r.iterations,
            "converged": r.converged, "upper_bound": r.upper_bound, "mu1": report.mu1,
            "reduced_lambda": report.reduced_Lambda, "coupling_measure": report.coupling_measure,
        })
    return rows


def _summarize(rows: list[dict], extra: dict, cfg_tree: dict) -> tuple[dict, int]:
    """Rate fit and gap verdict from stored rows; returns (summary, exit code)."""
    code = EXIT_OK
    bc = BC.parse(cfg_tree["problem"]["bc"])
    mu1 = extra["mu1"]
    summary = dict(extra, fitted_C=None, fitted_exponent=None, gap=None, fit_note=None)
    conv = [r for r in rows if r["converged"]]
    if bc is BC.DIRICHLET:
        try:
            summary.update(fit_rate([r["ell"] for r in conv], [r["lambda"] for r in conv], mu1))
        except InsufficientData as exc:
            summary["fit_note"] = str(exc)
        except NonPositiveGap as exc:
            summary["fit_note"] = str(exc)
            code = EXIT_PROPERTY
    elif extra.get("coupling_measure") is not None:
        deviation = max((abs(r["lambda"] - mu1) for r in conv), default=None)
        cert = extra.get("certificate") or {}
        verdict = decide_gap(
            extra["coupling_measure"], extra["coupling_scale"], bool(cert.get("found")), deviation,
            threshold=cfg_tree["sweep"]["gap_threshold"], tol=cfg_tree["sweep"]["gap_tol"],
        )
        summary["gap"] = verdict.value
        summary["mixed_deviation"] = deviation
    return summary, code


def _write_sweep(out: Path, cfg_tree: dict, rows: list[dict], summary: dict) -> None:
    formats = cfg_tree["output"]["formats"]
    if "csv" in formats:
        write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows, cfg_tree)
    # the JSON always holds the records so that `report` can rebuild everything
    write_json(out / "sweep.json", {"config": cfg_tree, "summary": summary, "records": rows, "version": __version__})


def cmd_sweep(cfg: RunConfig, out: Path, jobs: int = 1, dump: bool = False) -> int:
    if cfg.dim_axial == 0:
        raise ConfigError("a sweep needs dim_axial >= 1")
    swp = cfg.tree["sweep"]
    section = cross_section_mu1(section_problem(cfg.coeff, cfg.section, cfg.resolution, cfg.p),
                                tol=cfg.tol, max_iter=cfg.max_iter)
    report = sweep(
        cfg.grid_spec(), cfg.coeff, cfg.p, cfg.ells, tol=cfg.tol, max_iter=cfg.max_iter,
        warm_start=cfg.warm_start, jobs=jobs, section=section,
        upper_bounds=swp["upper_bound"], keep_eigenfunctions=dump,
    )
    extra = {
        "mu1": report.mu1, "reduced_Lambda": report.reduced_Lambda,
        "coupling_measure": report.coupling_measure, "coupling_scale": report.coupling_scale,
        "certificate": None,
    }
    if cfg.bc is BC.MIXED and swp["certificate"]:
        cert = gap_certificate(cfg.coeff, cfg.p, cfg.section, cfg.resolution, beta=swp["beta"],
                               tol=cfg.tol, max_iter=cfg.max_iter)
        extra["certificate"] = cert.to_dict()
    rows = _sweep_rows(report)
    summary, code = _summarize(rows, extra, cfg.tree)
    _write_sweep(out, cfg.tree, rows, summary)
    if dump:
        for ell, u in report.eigenfunctions.items():
            dump_eigenfunction(out / f"eigenfunction_ell={ell!r}.csv", u, cfg.tree)
    for r in rows:
        print(f"ell = {r['ell']:<10g} lambda = {r['lambda']:.10g}  converged = {r['converged']}")
    print(f"mu1 = {report.mu1:.10g}  C = {summary['fitted_C']}  q = {summary['fitted_exponent']}  gap = {summary['gap']}")
    if not all(r["converged"] for r in rows):
        return EXIT_NOT_CONVERGED
    return code


def cmd_picone(cfg: RunConfig, out: Path, sign_flip: bool = False) -> int:
    pic = cfg.tree["picone"]
    l_func = (lambda *a: -picone_L(*a)) if sign_flip else picone_L
    rep = picone_fuzz(pic["draws"], seed=cfg.seed, ps=tuple(pic["ps"]), l_func=l_func)
    write_json(out / "picone.json", {"config": cfg.tree, "seed": cfg.seed, "report": rep.to_dict(), "version": __version__})
    print(f"picone: {'pass' if rep.passed else 'FAIL'}  max rel |L-R| = {rep.max_rel_L_minus_R:.3g}  min L = {rep.min_L_scaled:.3g}")
    return EXIT_OK if rep.passed else EXIT_PROPERTY


def cmd_report(out: Path) -> int:
    """Rebuild ``sweep.csv`` and the summary in ``sweep.json`` from stored records."""
    src = out / "sweep.json"
    if not src.exists():
        raise ConfigError(f"no stored sweep at {src}")
    stored = json.loads(src.read_text(encoding="utf-8"))
    tree = stored["config"]
    rows = stored["records"]
    old = stored["summary"]
    keep = ("mu1", "reduced_Lambda", "coupling_measure", "coupling_scale", "certificate")
    summary, code = _summarize(rows, {k: old.get(k) for k in keep}, tree)
    _write_sweep(out, tree, rows, summary)
    print(f"report: {len(rows)} records, C = {summary['fitted_C']}, q = {summary['fitted_exponent']}, gap = {summary['gap']}")
    return code


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("--seed", type=int, help="random seed (overrides seed)")
    common.add_argument("--jobs", type=int, help="max worker processes (overrides PLAP_JOBS)")
    common.add_argument("--dump-eigenfunction", action="store_true", help="write nodal eigenfunction CSVs")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="plap", description="First eigenvalues of anisotropic p-Laplacians on long cylinders.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="first eigenpair on one domain")
    sub.add_parser("sweep", parents=[common], help="eigenvalues over a list of lengths")
    pic = sub.add_parser("picone", parents=[common], help="randomized check of the Picone identity")
    pic.add_argument("--inject-sign-flip", action="store_true", help=argparse.SUPPRESS)
    sub.add_parser("report", parents=[common], help="rebuild summaries from a stored sweep")
    return ap


def _jobs(flag: int | None, cfg: RunConfig) -> int:
    if flag is not None:
        jobs = flag
    elif os.environ.get("PLAP_JOBS"):
        try:
            jobs = int(os.environ["PLAP_JOBS"])
        except ValueError:
            raise ConfigError(f"PLAP_JOBS must be an integer, got {os.environ['PLAP_JOBS']!r}") from None
    else:
        jobs = cfg.jobs
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return jobs


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            out = Path(args.out if args.out is not None else "out")
            return cmd_report(out)
        overrides = {"seed": args.seed} if args.seed is not None else None
        cfg = load_config(args.config, overrides)
        out = _outdir(cfg, args.out)
        if args.command == "solve":
            return cmd_solve(cfg, out, args.dump_eigenfunction)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, _jobs(args.jobs, cfg), args.dump_eigenfunction)
        return cmd_picone(cfg, out, args.inject_sign_flip)
    except ConfigError as exc:
        print(f"plap: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PlapError as exc:
        print(f"plap: error: {exc}", file=sys.stderr)
        return EXIT_PROPERTY


if __name__ == "__main__":
    raise SystemExit(main())
