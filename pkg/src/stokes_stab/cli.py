"""Command-line front end: stokes-stab <command> [options].

Commands
--------
solve            single solve of a builtin case, VTK + manifest output
uniform-study    convergence table over uniformly refined meshes
adaptive-study   estimator-driven refinement loop
audit            mesh sanity checks on a builtin case or a mesh file

Configuration comes from an optional `key = value` file plus flag
overrides; unknown keys are rejected so a config file fully describes
a run. All artifacts are written atomically and contain no timestamps,
making repeated runs byte-identical.
"""

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, estimator, forms, mesh as meshmod, solver, study
from .space import ElementPair, FeSpace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MESH = 3
EXIT_SOLVER = 4
EXIT_IO = 5

COMMANDS = ("solve", "uniform-study", "adaptive-study", "audit")

# every key a config file or flag may set, with its parser
_SCHEMA = {
    "case": str,
    "pair": str,
    "alpha": str,
    "levels": int,
    "theta": float,
    "max_iters": int,
    "target_eta": float,
    "n0": int,
    "out": str,
    "seed": int,
}

_DEFAULTS = {
    "case": "SMOOTH_SQUARE",
    "pair": "P1P1",
    "alpha": "auto",
    "levels": 4,
    "theta": 0.5,
    "max_iters": 10,
    "target_eta": None,
    "n0": None,
    "out": ".",
    "seed": 0,
}


class ConfigError(Exception):
    pass


def parse_config_file(path):
    """Read `key = value` lines; '#' starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', "
                              f"got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            known = ", ".join(sorted(_SCHEMA))
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r} "
                              f"(known keys: {known})")
        try:
            out[key] = _SCHEMA[key](value)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value {value!r} for "
                              f"{key}") from None
    return out


def resolve_config(args):
    """Merge defaults, config file, and flag overrides."""
    cfg = dict(_DEFAULTS)
    if args.config:
        cfg.update(parse_config_file(args.config))
    for key in _SCHEMA:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            cfg[key] = flag
    if cfg["pair"] not in ("P1P1", "P2P1"):
        raise ConfigError(f"pair must be P1P1 or P2P1, got {cfg['pair']!r}")
    if cfg["alpha"] != "auto":
        try:
            cfg["alpha"] = float(cfg["alpha"])
        except (TypeError, ValueError):
            raise ConfigError(
                f"alpha must be a number or 'auto', got {cfg['alpha']!r}") \
                from None
    else:
        cfg["alpha"] = None
    return cfg


def _atomic_write(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{x:.12e}"


def _printed(x):
    """The value a reader recovers from the formatted CSV field."""
    s = _fmt(x)
    return float("nan") if s == "nan" else float(s)


def write_table_csv(path, rows):
    """Rows are dicts with the full column set except `rate`.

    The rate column is log2 of the ratio of successive combined errors
    (eta when no closed form is available), computed from the printed
    precision so the column is exactly recomputable from the file.
    """
    header = ("level,h,n_u,n_p,err_H1_u,err_L2_p,eta,osc_f,"
              "effectivity,rate")
    lines = [header]
    prev = None
    for row in rows:
        e1 = _printed(row["err_H1_u"])
        e0 = _printed(row["err_L2_p"])
        cur = e1 + e0
        if math.isnan(cur):
            cur = _printed(row["eta"])
        rate = ""
        if prev is not None and prev > 0 and cur > 0:
            rate = _fmt(math.log2(prev / cur))
        prev = cur
        lines.append(",".join([
            str(row["level"]), _fmt(row["h"]), str(row["n_u"]),
            str(row["n_p"]), _fmt(row["err_H1_u"]), _fmt(row["err_L2_p"]),
            _fmt(row["eta"]), _fmt(row["osc_f"]),
            _fmt(row["effectivity"]), rate,
        ]))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_vtk(path, mesh, u, p, eta_K, title="stokes-stab output"):
    """Legacy ASCII unstructured-grid file with the solution fields."""
    nv = mesh.n_vertices
    nt = mesh.n_triangles
    out = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
    ]
    for x, y in mesh.vertices:
        out.append(f"{float(x)!r} {float(y)!r} 0.0")
    out.append(f"CELLS {nt} {4 * nt}")
    for a, b, c in mesh.triangles:
        out.append(f"3 {int(a)} {int(b)} {int(c)}")
    out.append(f"CELL_TYPES {nt}")
    out.extend(["5"] * nt)
    out.append(f"POINT_DATA {nv}")
    out.append("VECTORS velocity double")
    for v in range(nv):
        out.append(f"{float(u[2 * v])!r} {float(u[2 * v + 1])!r} 0.0")
    out.append("SCALARS pressure double 1")
    out.append("LOOKUP_TABLE default")
    for v in range(nv):
        out.append(f"{float(p[v])!r}")
    out.append(f"CELL_DATA {nt}")
    out.append("SCALARS eta_K double 1")
    out.append("LOOKUP_TABLE default")
    for k in range(nt):
        out.append(f"{float(eta_K[k])!r}")
    _atomic_write(path, "\n".join(out) + "\n")


def write_manifest(path, cfg, command, alpha, c_i, quad_degrees):
    lines = [
        f"tool = stokes-stab {__version__}",
        f"command = {command}",
        f"case = {cfg['case']}",
        f"pair = {cfg['pair']}",
        f"alpha = {alpha!r}",
        f"c_i = {c_i!r}",
        f"levels = {cfg['levels']}",
        f"theta = {cfg['theta']!r}",
        f"max_iters = {cfg['max_iters']}",
        f"target_eta = {cfg['target_eta']!r}",
        f"n0 = {cfg['n0']!r}",
        f"seed = {cfg['seed']}",
    ]
    for name in sorted(quad_degrees):
        lines.append(f"quad_{name} = {quad_degrees[name]}")
    _atomic_write(path, "\n".join(lines) + "\n")


def _out_dir(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _norm_rows_from_table(table):
    rows = []
    for r in table.rows:
        rows.append({
            "level": r.level, "h": r.h, "n_u": r.n_u, "n_p": r.n_p,
            "err_H1_u": r.err_H1_u, "err_L2_p": r.err_L2_p,
            "eta": r.eta, "osc_f": r.osc_f, "effectivity": r.effectivity,
        })
    return rows


def cmd_solve(cfg):
    case = study.get_case(cfg["case"])
    pair = ElementPair.from_label(cfg["pair"])
    mesh = case.make_mesh(cfg["n0"] or case.default_n0)
    space = FeSpace(mesh, pair)
    problem = case.problem(alpha=cfg["alpha"])
    system = forms.assemble_system(space, problem)
    sol = solver.solve(system)
    rep = estimator.global_report(sol, space, problem)

    out = _out_dir(cfg)
    if rep.true_errors is not None:
        e1 = rep.true_errors["err_H1_u"]
        e0 = rep.true_errors["err_L2_p"]
        eff = rep.effectivity
    else:
        e1 = e0 = eff = float("nan")
    write_table_csv(out / "table.csv", [{
        "level": 0, "h": float(mesh.diameters.max()),
        "n_u": space.n_u, "n_p": space.n_p,
        "err_H1_u": e1, "err_L2_p": e0, "eta": rep.eta, "osc_f": rep.osc_f,
        "effectivity": eff,
    }])
    write_vtk(out / "solution_0.vtk", mesh, sol.u, sol.p, rep.eta_K,
              title=f"{case.name} {pair.label}")
    write_manifest(out / "manifest.txt", cfg, "solve", system.alpha,
                   system.c_i, system.quad_degrees)
    print(f"{case.name} {pair.label}: {mesh.n_triangles} triangles, "
          f"eta = {rep.eta:.6e}, residual = {sol.residual:.3e}")
    return EXIT_OK


def cmd_uniform_study(cfg):
    case = study.get_case(cfg["case"])
    pair = ElementPair.from_label(cfg["pair"])
    table = study.uniform_study(case, pair, cfg["levels"],
                                alpha=cfg["alpha"], n0=cfg["n0"])
    out = _out_dir(cfg)
    write_table_csv(out / "table.csv", _norm_rows_from_table(table))

    # re-solve per level for the field output
    mesh = case.make_mesh(cfg["n0"] or case.default_n0)
    problem = case.problem(alpha=table.alpha)
    quad_degrees = None
    for level in range(cfg["levels"]):
        if level > 0:
            mesh = mesh.refine_uniform()
        space = FeSpace(mesh, pair)
        system = forms.assemble_system(space, problem)
        quad_degrees = system.quad_degrees
        sol = solver.solve(system)
        rep = estimator.global_report(sol, space, problem)
        write_vtk(out / f"solution_{level}.vtk", mesh, sol.u, sol.p,
                  rep.eta_K, title=f"{case.name} {pair.label} level {level}")
    write_manifest(out / "manifest.txt", cfg, "uniform-study", table.alpha,
                   table.c_i, quad_degrees)
    print(table)
    return EXIT_OK


def cmd_adaptive_study(cfg):
    case = study.get_case(cfg["case"])
    pair = ElementPair.from_label(cfg["pair"])
    log = study.adaptive_study(case, pair, theta=cfg["theta"],
                               max_iters=cfg["max_iters"],
                               target_eta=cfg["target_eta"],
                               alpha=cfg["alpha"], n0=cfg["n0"])
    out = _out_dir(cfg)
    problem = case.problem(alpha=log.alpha)
    rows = []
    quad_degrees = None
    c_i = None
    for step in log.steps:
        space = FeSpace(step.mesh, pair)
        system = forms.assemble_system(space, problem)
        quad_degrees = system.quad_degrees
        c_i = system.c_i
        sol = solver.solve(system)
        rep = estimator.global_report(sol, space, problem)
        if rep.true_errors is not None:
            e1 = rep.true_errors["err_H1_u"]
            e0 = rep.true_errors["err_L2_p"]
            eff = rep.effectivity
        else:
            e1 = e0 = eff = float("nan")
        rows.append({
            "level": step.iteration, "h": step.h_max,
            "n_u": space.n_u, "n_p": space.n_p,
            "err_H1_u": e1, "err_L2_p": e0, "eta": rep.eta,
            "osc_f": rep.osc_f, "effectivity": eff,
        })
        write_vtk(out / f"solution_{step.iteration}.vtk", step.mesh,
                  sol.u, sol.p, rep.eta_K,
                  title=f"{case.name} {pair.label} iteration "
                        f"{step.iteration}")
        print(f"iter {step.iteration}: {step.n_triangles} triangles, "
              f"{step.n_dofs} dofs, eta = {step.eta:.6e}, "
              f"marked {len(step.marked)}")
    write_table_csv(out / "table.csv", rows)
    write_manifest(out / "manifest.txt", cfg, "adaptive-study", log.alpha,
                   c_i, quad_degrees)
    return EXIT_OK


def cmd_audit(cfg):
    name = cfg["case"]
    try:
        case = study.get_case(name)
    except KeyError:
        case = None
    if case is not None:
        target = case.make_mesh(cfg["n0"] or case.default_n0)
        label = case.name
    else:
        if not Path(name).exists():
            known = ", ".join(c.name for c in study.builtin_cases())
            raise ConfigError(f"{name!r} is neither a builtin case "
                              f"({known}) nor an existing mesh file")
        target = meshmod.TriMesh.read(name, validate=False)
        label = name
    report = target.audit()
    print(report)
    if not report.ok:
        bad = [c for c, (ok, _) in report.checks.items() if not ok]
        raise meshmod.MeshError(
            f"mesh audit of {label} failed: {', '.join(bad)}")
    print(f"audit passed: {target.n_vertices} vertices, "
          f"{target.n_triangles} triangles, min angle "
          f"{target.min_angle_deg:.2f} deg")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stokes-stab",
        description="Stabilized mixed finite elements for the Stokes "
                    "equations: solves, convergence studies, adaptive "
                    "refinement, mesh audits.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--case",
                        help="builtin case name (or mesh file for audit)")
    parser.add_argument("--pair", help="element pair: P1P1 or P2P1")
    parser.add_argument("--alpha",
                        help="stabilization parameter, or 'auto'")
    parser.add_argument("--levels", type=int,
                        help="number of uniform refinement levels")
    parser.add_argument("--theta", type=float,
                        help="marking fraction in (0, 1)")
    parser.add_argument("--max-iters", type=int, dest="max_iters",
                        help="adaptive iteration cap")
    parser.add_argument("--target-eta", type=float, dest="target_eta",
                        help="stop refining once eta falls below this")
    parser.add_argument("--n0", type=int,
                        help="initial structured mesh resolution")
    parser.add_argument("--out", help="output directory (default: .)")
    parser.add_argument("--seed", type=int,
                        help="seed recorded in the manifest")
    parser.add_argument("--version", action="version",
                        version=f"stokes-stab {__version__}")
    return parser


def _fail(code, category, exc):
    msg = " ".join(str(exc).split())
    print(f"stokes-stab: {category} error: {msg}", file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)

    dispatch = {
        "solve": cmd_solve,
        "uniform-study": cmd_uniform_study,
        "adaptive-study": cmd_adaptive_study,
        "audit": cmd_audit,
    }
    try:
        return dispatch[args.command](cfg)
    except (ConfigError, KeyError) as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except (forms.InadmissibleAlphaError, ValueError) as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except meshmod.MeshError as exc:
        return _fail(EXIT_MESH, "mesh", exc)
    except solver.SolverError as exc:
        return _fail(EXIT_SOLVER, "solver", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)


if __name__ == "__main__":
    sys.exit(main())
