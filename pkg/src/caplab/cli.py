"""Command-line front end.

Exit codes: 0 success, 1 verification checks failed, 2 usage or
configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .capacity import SolverConfig, check_potential, ring_capacity_oracle, solve_potential
from .errors import CapLabError, ConfigError, SolverError
from .export import write_capacity_json, write_field_csv, write_field_vtk, write_json, write_levelset_csv, write_metric_json
from .geometry import Sphere, three_spheres, three_spheres_center, three_spheres_radius
from .grid import CompactMask, DomainConfig, build_domain, polarize_mask, rasterize_polyline, write_mask_rle
from .harness import GRID_PRESETS, SUITES, SuiteConfig, resolve_jobs, richardson, ring_sequence, run_suites
from .metric import OptConfig, modulus_metric, mu_sphere, roundness_ratio, unit_directions

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass
class RunConfig:
    """Fully resolved inputs of one invocation (written into every output)."""

    command: str
    domain: dict | None = None
    plate: dict | None = None
    out: str = "."
    seed: int = 0
    jobs: int = 1
    solver: dict = field(default_factory=dict)
    opt: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"version": __version__, **asdict(self)}


# --- argument helpers -------------------------------------------------------------


def _point(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _polyline(text: str) -> list[list[float]]:
    return [_point(p) for p in text.split(";") if p.strip()]


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


def _dataclass_overrides(cls, base: dict, overrides: dict):
    names = {f.name for f in fields(cls)}
    merged = {**base, **{k: v for k, v in overrides.items() if v is not None}}
    unknown = set(merged) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    return cls(**merged)


def _run_file(args) -> dict:
    """Run configuration from --config: either a bare domain or {"domain": ..., ...}."""
    if not getattr(args, "config", None):
        return {}
    data = _load_json(args.config)
    if "grid" in data:
        return {"domain": data}
    return data


def _domain_config(args, run: dict) -> DomainConfig:
    if args.ball is not None or "domain" not in run:
        radius = args.ball if args.ball is not None else 1.0
        cells = args.cells or GRID_PRESETS[args.grid]["cells" if args.dim == 2 else "cells_3d"]
        return DomainConfig.ball(args.dim, radius, cells, margin=2.0 * radius / cells)
    dc = DomainConfig.from_dict(run["domain"])
    if args.cells:
        g = dc.to_dict()
        g["grid"]["cells"] = [args.cells] * dc.dim
        dc = DomainConfig.from_dict(g)
    return dc


def build_plate(spec: dict, domain) -> CompactMask:
    """Plate from {"type": "ball" | "box" | "polyline" | "point", ...}; balls and boxes are closed."""
    kind = spec.get("type")
    X = domain.spec.centers()
    try:
        if kind == "ball":
            c = np.asarray(spec["center"], dtype=float)
            cells = sum((X[a] - c[a]) ** 2 for a in range(domain.dim)) <= float(spec["radius"]) ** 2
        elif kind == "box":
            lo, hi = np.asarray(spec["lo"], float), np.asarray(spec["hi"], float)
            cells = np.ones(domain.shape, dtype=bool)
            for a in range(domain.dim):
                cells &= (X[a] >= lo[a]) & (X[a] <= hi[a])
        elif kind == "polyline":
            return rasterize_polyline(np.asarray(spec["vertices"], dtype=float), domain)
        elif kind == "point":
            idx = domain.cell_of(spec["at"])
            if idx is None:
                raise ConfigError("plate point is off the grid")
            cells = np.zeros(domain.shape, dtype=bool)
            cells[idx] = True
        else:
            raise ConfigError(f"unknown plate type {kind!r}")
    except KeyError as exc:
        raise ConfigError(f"plate {kind!r} is missing {exc}") from None
    return CompactMask(cells & domain.inside, domain)


def _plate_spec(args, run: dict) -> dict:
    if getattr(args, "plate_ball", None):
        *c, r = args.plate_ball
        return {"type": "ball", "center": c, "radius": r}
    if getattr(args, "plate_polyline", None):
        return {"type": "polyline", "vertices": args.plate_polyline}
    if "plate" in run:
        return dict(run["plate"])
    raise ConfigError("no plate given: use --plate-ball, --plate-polyline or a 'plate' entry in --config")


def _solver(args, run: dict) -> SolverConfig:
    return _dataclass_overrides(SolverConfig, run.get("solver", {}), {})


def _opt(args, run: dict) -> OptConfig:
    return _dataclass_overrides(OptConfig, run.get("opt", {}), {
        "m": getattr(args, "m", None),
        "restarts": getattr(args, "restarts", None),
        "seed": args.seed,
    })


def _outdir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def _resolve(args, run: dict, **extra) -> RunConfig:
    return RunConfig(command=args.command, out=str(args.out), seed=args.seed,
                     jobs=resolve_jobs(args.jobs), **extra)


# --- commands ----------------------------------------------------------------------


def cmd_capacity(args) -> int:
    run = _run_file(args)
    dc = _domain_config(args, run)
    domain = build_domain(dc)
    plate = _plate_spec(args, run)
    K = build_plate(plate, domain)
    solver = _solver(args, run)
    out = _outdir(args)
    rc = _resolve(args, run, domain=dc.to_dict(), plate=plate, solver=asdict(solver),
                  options={"n_exp": args.n_exp})
    res = solve_potential(domain, K, args.n_exp, solver)
    report = check_potential(res)
    cfg = rc.to_dict()
    write_capacity_json(out / "capacity.json", res, cfg)
    if args.export_field:
        write_field_vtk(out / "field.vtk", res, cfg)
    if args.field_csv:
        write_field_csv(out / "field.csv", res, cfg)
    print(f"capacity {res.value:.10g}  (n={res.n}, h={res.h:.4g}, iterations {res.iterations}, "
          f"residual {res.residual:.2e})")
    if not report.ok:
        print(f"warning: potential checks flagged {report.violations}", file=sys.stderr)
    return EXIT_OK


def cmd_metric(args) -> int:
    run = _run_file(args)
    dc = _domain_config(args, run)
    domain = build_domain(dc)
    opt = _opt(args, run)
    solver = _solver(args, run)
    out = _outdir(args)
    rc = _resolve(args, run, domain=dc.to_dict(), solver=asdict(solver), opt=asdict(opt),
                  options={"x": args.x, "y": args.y, "n_exp": args.n_exp})
    res = modulus_metric(domain, args.x, args.y, args.n_exp, opt, solver)
    write_metric_json(out / "metric.json", res, rc.to_dict())
    print(f"mu {res.value:.10g}  (evaluations {res.evals}, converged {res.converged})")
    return EXIT_OK


def cmd_sphere(args) -> int:
    run = _run_file(args)
    dc = _domain_config(args, run)
    domain = build_domain(dc)
    opt = _opt(args, run)
    solver = _solver(args, run)
    out = _outdir(args)
    dirs = unit_directions(domain.dim, args.directions)
    rc = _resolve(args, run, domain=dc.to_dict(), solver=asdict(solver), opt=asdict(opt),
                  options={"x0": args.x0, "levels": args.level, "directions": args.directions, "tol": args.tol})
    ratios = []
    for j, level in enumerate(args.level):
        ls = mu_sphere(domain, args.x0, level, dirs, args.tol, args.n_exp, opt, solver)
        name = "levelset.csv" if len(args.level) == 1 else f"levelset_{j}.csv"
        write_levelset_csv(out / name, ls, {**rc.to_dict(), "level": level})
        ratios.append(roundness_ratio(ls))
        r = ls.radii()
        print(f"level {level:.6g}: radii {r.min():.5g}..{r.max():.5g}, roundness {ratios[-1]:.5f}")
    if len(ratios) > 1:
        trend = all(b <= a for a, b in zip(ratios, ratios[1:]))
        print(f"roundness trend: {' -> '.join(f'{r:.4f}' for r in ratios)} "
              f"({'non-increasing' if trend else 'not monotone'})")
    return EXIT_OK


def cmd_polarize(args) -> int:
    run = _run_file(args)
    dc = _domain_config(args, run)
    domain = build_domain(dc)
    plate = _plate_spec(args, run)
    K = build_plate(plate, domain)
    *c, r = args.sphere
    s = Sphere(c, r)
    out = _outdir(args)
    rc = _resolve(args, run, domain=dc.to_dict(), plate=plate, options={"sphere": s.to_dict(), "n_exp": args.n_exp})
    info = polarize_mask(K, s, info=True)
    cfg = rc.to_dict()
    write_mask_rle(info.cells, out / "polarized.csv", cfg)
    result = {"cells_before": K.count, "cells_after": int(info.cells.sum()), "off_grid": info.off_grid}
    if args.capacity:
        solver = _solver(args, run)
        before = solve_potential(domain, K, args.n_exp, solver).value
        after = solve_potential(domain, CompactMask(info.cells, domain, validate=False), args.n_exp, solver).value
        result.update(capacity_before=before, capacity_after=after)
        print(f"capacity {before:.8g} -> {after:.8g}")
    write_json(out / "polarize.json", result, cfg)
    print(f"cells {result['cells_before']} -> {result['cells_after']} ({info.off_grid} reflections off grid)")
    return EXIT_OK


def cmd_three_spheres(args) -> int:
    if args.x1 is not None:
        if args.x2 is None or args.x0 is None:
            raise ConfigError("--x1 needs --x2 and --x0")
        res = three_spheres(args.x1, args.x2, args.x0, args.R, args.k)
        center, radius, theta, branch = res.sphere.center.tolist(), res.sphere.radius, res.theta, res.branch
    else:
        if args.theta is None:
            raise ConfigError("give --theta, or --x0/--x1/--x2")
        lam, height, branch = three_spheres_center(args.k, args.theta)
        center, radius, theta = [lam, height], three_spheres_radius(args.k, args.theta), args.theta
    print(json.dumps({"center": center, "radius": radius, "theta": theta, "branch": branch.value}))
    return EXIT_OK


def cmd_verify(args) -> int:
    names = args.suites or ["all"]
    cfg = SuiteConfig(seed=args.seed, cases=args.cases, preset=args.grid, cells=args.cells, dim=args.dim,
                      slack=args.slack, jobs=args.jobs, opt=_opt(args, {}))
    reports = run_suites(names, cfg)
    out = _outdir(args)
    for rep in reports:
        (out / f"report_{rep.name}.json").write_text(rep.to_json() + "\n")
        print(rep.table())
    ok = all(r.passed for r in reports)
    print(f"overall: {'PASS' if ok else 'FAIL'} ({sum(r.passed for r in reports)}/{len(reports)} suites)")
    return EXIT_OK if ok else EXIT_CHECKS


def cmd_convergence(args) -> int:
    n = args.n_exp or args.dim
    base = args.cells or (64 if args.dim == 2 else 16)
    seq = ring_sequence(args.dim, base, args.levels, n)
    oracle = ring_capacity_oracle(0.5, 1.0, n)
    caps = [c for _, c in seq]
    rows = []
    print(f"{'h':>10}{'capacity':>14}{'rel. error':>12}")
    for h, c in seq:
        rows.append({"h": h, "capacity": c, "rel_error": c / oracle - 1})
        print(f"{h:>10.5f}{c:>14.8f}{c / oracle - 1:>+12.4%}")
    rich = richardson(caps) if len(caps) > 1 else math.nan
    print(f"oracle {oracle:.8f}; extrapolated {rich:.8f} ({rich / oracle - 1:+.4%})")
    out = _outdir(args)
    rc = RunConfig(command="convergence", out=str(args.out), seed=args.seed, jobs=resolve_jobs(args.jobs),
                   options={"dim": args.dim, "n_exp": n, "base_cells": base, "levels": args.levels})
    write_json(out / "convergence.json", {"rows": rows, "oracle": oracle, "extrapolated": rich}, rc.to_dict())
    return EXIT_OK


# --- parser ---------------------------------------------------------------------------


def _domain_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("domain")
    g.add_argument("--config", help="domain or run configuration JSON")
    g.add_argument("--ball", type=float, help="use a ball of this radius about the origin")
    g.add_argument("--dim", type=int, choices=(2, 3), default=2)
    g.add_argument("--cells", type=int, help="cells per axis (overrides the preset)")
    g.add_argument("--grid", choices=sorted(GRID_PRESETS), default="default", help="grid preset")
    g.add_argument("--n-exp", type=int, choices=(2, 3), default=None, help="energy exponent (default: dim)")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default $MODMETRIC_JOBS or 1)")


def _plate_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--plate-ball", type=float, nargs="+", metavar="C_R",
                   help="closed ball plate: center coordinates then radius")
    p.add_argument("--plate-polyline", type=_polyline, help="polyline plate 'x,y;x,y;...'")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="caplab", description="Condenser capacity and modulus metric on grids.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("capacity", help="capacity of a condenser (D, K)")
    _domain_args(c)
    _plate_args(c)
    _common(c)
    c.add_argument("--export-field", action="store_true", help="write the potential as VTK")
    c.add_argument("--field-csv", action="store_true", help="write the potential as CSV")
    c.set_defaults(func=cmd_capacity)

    m = sub.add_parser("metric", help="modulus metric between two points")
    _domain_args(m)
    _common(m)
    m.add_argument("--x", type=_point, required=True)
    m.add_argument("--y", type=_point, required=True)
    m.add_argument("--m", type=int, help="interior control points")
    m.add_argument("--restarts", type=int)
    m.set_defaults(func=cmd_metric)

    s = sub.add_parser("sphere", help="level set of the modulus metric about a point")
    _domain_args(s)
    _common(s)
    s.add_argument("--x0", type=_point, required=True)
    s.add_argument("--level", type=float, nargs="+", required=True, help="one or more levels")
    s.add_argument("--directions", type=int, default=16)
    s.add_argument("--tol", type=float, default=0.01)
    s.add_argument("--m", type=int)
    s.add_argument("--restarts", type=int)
    s.set_defaults(func=cmd_sphere)

    z = sub.add_parser("polarize", help="polarize a plate with respect to a sphere")
    _domain_args(z)
    _plate_args(z)
    _common(z)
    z.add_argument("--sphere", type=float, nargs="+", required=True, metavar="C_R",
                   help="center coordinates then radius")
    z.add_argument("--capacity", action="store_true", help="also compare capacities")
    z.set_defaults(func=cmd_polarize)

    t = sub.add_parser("three-spheres", help="symmetrizing sphere of the three-spheres construction")
    t.add_argument("--k", type=float, required=True)
    t.add_argument("--theta", type=float)
    t.add_argument("--R", type=float, default=1.0)
    t.add_argument("--x0", type=_point)
    t.add_argument("--x1", type=_point)
    t.add_argument("--x2", type=_point)
    t.set_defaults(func=cmd_three_spheres)

    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("suites", nargs="*", help=f"suite names ({', '.join(SUITES)}) or all")
    v.add_argument("--grid", choices=sorted(GRID_PRESETS), default="default")
    v.add_argument("--cells", type=int)
    v.add_argument("--dim", type=int, choices=(2, 3), default=2)
    v.add_argument("--cases", type=int)
    v.add_argument("--slack", type=float)
    v.add_argument("--m", type=int, help="interior control points of metric curves")
    v.add_argument("--restarts", type=int)
    _common(v)
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("convergence", help="ring capacity under grid refinement")
    g.add_argument("--dim", type=int, choices=(2, 3), default=2)
    g.add_argument("--cells", type=int, help="coarsest cells per axis")
    g.add_argument("--levels", type=int, default=3)
    g.add_argument("--n-exp", type=int, choices=(2, 3))
    _common(g)
    g.set_defaults(func=cmd_convergence)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.diagnostics:
            print(f"diagnostics: {json.dumps(exc.diagnostics, default=str)}", file=sys.stderr)
        return EXIT_NUMERIC
    except CapLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
