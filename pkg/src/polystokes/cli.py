"""Batch command line: solve, converge, verify, meshinfo.

Exit codes are a stable contract: 0 success, 2 solver failure, 3
configuration error, 4 convergence-rate regression, 5 failed verification
checks.
"""

import argparse
import json
import sys

import numpy as np

from . import mesh as meshmod
from .checks import run_verify_suite
from .spaces import DiscreteSpaces
from .stokes import (SolverError, StokesProblem, assemble, convergence_study,
                     error_report, manufactured, rows_to_csv, solve)

EXIT_OK = 0
EXIT_SOLVER = 2
EXIT_CONFIG = 3
EXIT_RATE = 4
EXIT_VERIFY = 5


class ConfigError(Exception):
    pass


def _fmt(x):
    return f"{x:.17g}"


def _parse_int_list(text):
    try:
        return [int(t) for t in str(text).split(",") if t != ""]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}") from exc


def _load_mesh_arg(args, level=None):
    if args.mesh:
        paths = str(args.mesh).split(",")
        path = paths[0] if level is None else paths[level]
        try:
            with open(path, "rb") as fh:
                return meshmod.load_mesh(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read mesh file {path}: {exc}") from exc
        except meshmod.MeshError as exc:
            raise ConfigError(str(exc)) from exc
    if args.family:
        levels = _parse_int_list(args.levels or "")
        if not levels:
            raise ConfigError("--family needs --levels")
        lvl = levels[0] if level is None else levels[level]
        if args.family == "cartesian":
            return meshmod.generate_cartesian(lvl)
        if args.family == "hexagonal":
            return meshmod.generate_hexagonal(lvl)
        if args.family == "tilted":
            return meshmod.perturb(meshmod.generate_cartesian(lvl),
                                   args.amplitude, args.seed)
        raise ConfigError(f"unknown family {args.family!r}")
    raise ConfigError("either --mesh or --family is required")


def _emit(args, text):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_solve(args):
    mesh = _load_mesh_arg(args)
    k = _parse_int_list(args.degree)[0]
    _warn_degree(k)
    gamma_d = _gamma_d(args, mesh)
    if args.solution == "zero":
        ref = None
        f = lambda pts: np.zeros((np.asarray(pts).shape[0], 2))
        problem = StokesProblem(mesh=mesh, k=k, mu=args.mu, bc=args.bc,
                                gamma_d=gamma_d, f=f)
    else:
        ref = manufactured(args.solution, args.mu)
        problem = StokesProblem(mesh=mesh, k=k, mu=args.mu, bc=args.bc,
                                gamma_d=gamma_d, reference=ref)
    try:
        system = assemble(problem)
        u, p, diag = solve(system)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    report = {
        "h": mesh.h, "k": k, "bc": args.bc, "dofs": diag["unknowns"],
        "error_abs": None, "error_rel": None, "slopes": [],
        "residual": diag["residual"],
        "div_residual_rel": diag["div_residual_rel"],
        "timings": {"assemble": diag["assemble_time"], "solve": diag["solve_time"]},
    }
    if ref is not None:
        err = error_report(system, u, p, diag)
        report["error_abs"] = err.velocity_error + err.pressure_error
        report["error_rel"] = err.relative_error
    _emit(args, json.dumps(report, indent=2, default=float) + "\n")
    return EXIT_OK if diag["residual"] <= 1e-9 else EXIT_SOLVER


def cmd_converge(args):
    degrees = _parse_int_list(args.degree)
    levels = _parse_int_list(args.levels or "")
    paths = str(args.mesh).split(",") if args.mesh else None
    family = "files" if paths else args.family
    if family is None:
        raise ConfigError("converge needs --family or --mesh")
    if paths and len(paths) < 2 or not paths and len(levels) < 2:
        raise ConfigError("converge needs at least two levels")
    all_rows = {}
    ok = True
    for k in degrees:
        _warn_degree(k)
        rows = convergence_study(
            family, k, levels if not paths else list(range(len(paths))),
            args.bc, solution=args.solution, mu=args.mu,
            amplitude=args.amplitude, seed=args.seed, paths=paths)
        all_rows[k] = rows
        final = rows[-1]["rate"]
        if final is None or final < k + 0.8:
            ok = False
    csv = "".join(rows_to_csv(all_rows[k]) if i == 0 else
                  "\n".join(rows_to_csv(all_rows[k]).splitlines()[1:]) + "\n"
                  for i, k in enumerate(degrees))
    _emit(args, csv)
    if args.svg:
        with open(args.svg, "w") as fh:
            fh.write(render_svg(all_rows))
    return EXIT_OK if ok else EXIT_RATE


def cmd_verify(args):
    mesh = _load_mesh_arg(args)
    degrees = _parse_int_list(args.degree)
    all_results = []
    failed = []
    for k in degrees:
        _warn_degree(k)
        spaces = DiscreteSpaces(mesh, k)
        results = run_verify_suite(spaces, flip_vrot=args.flip_vrot)
        for r in results:
            r["k"] = k
            all_results.append(r)
            if not r["passed"]:
                failed.append(f"k={k}:{r['name']}")
    _emit(args, json.dumps({"checks": all_results, "failed": failed},
                           indent=2, default=float) + "\n")
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_meshinfo(args):
    mesh = _load_mesh_arg(args)
    rep = meshmod.regularity_report(mesh)
    payload = {
        "vertices": mesh.n_vertices,
        "edges": mesh.n_edges,
        "cells": mesh.n_cells,
        "boundary_edges": int(mesh.boundary_edges.sum()),
        "h": mesh.h,
        "total_area": float(mesh.cell_areas.sum()),
        "min_inscribed_ratio": rep.min_inscribed_ratio,
        "min_edge_ratio": rep.min_edge_ratio,
        "max_vertex_valence": rep.max_vertex_valence,
        "edges_per_cell_min": int(rep.edges_per_cell.min()),
        "edges_per_cell_max": int(rep.edges_per_cell.max()),
        "nonconvex_cells": list(rep.nonconvex_cells),
        "canonical_roundtrip": meshmod.canonical_json(
            meshmod.load_mesh(meshmod.canonical_json(mesh)))
        == meshmod.canonical_json(mesh),
    }
    _emit(args, json.dumps(payload, indent=2, default=float) + "\n")
    return EXIT_OK


def _warn_degree(k):
    if not 0 <= k <= 3:
        print(f"warning: degree {k} outside the validated range [0, 3]",
              file=sys.stderr)


def _gamma_d(args, mesh):
    if args.bc != "mixed":
        return None
    if not args.gamma_d:
        raise ConfigError("mixed boundary conditions need --gamma-d")
    return tuple(_parse_int_list(args.gamma_d))


def render_svg(rows_by_degree, width=640, height=480):
    """Log-log error plot with one polyline per degree and slope triangles."""
    margin = 60
    xs, ys = [], []
    for rows in rows_by_degree.values():
        xs += [r["h"] for r in rows]
        ys += [r["err"] for r in rows]
    lx = [np.log10(v) for v in xs]
    ly = [np.log10(max(v, 1e-300)) for v in ys]
    x0, x1 = min(lx), max(lx)
    y0, y1 = min(ly), max(ly)
    x0, x1 = x0 - 0.1 * (x1 - x0 + 1e-9) - 0.05, x1 + 0.1 * (x1 - x0 + 1e-9) + 0.05
    y0, y1 = y0 - 0.1 * (y1 - y0 + 1e-9) - 0.05, y1 + 0.1 * (y1 - y0 + 1e-9) + 0.05

    def px(v):
        return margin + (v - x0) / (x1 - x0) * (width - 2 * margin)

    def py(v):
        return height - margin - (v - y0) / (y1 - y0) * (height - 2 * margin)

    colors = ["#1f77b4", "#d62728", "#8c5e10", "#444444"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" '
        f'height="{height - 2 * margin}" fill="none" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 15}" text-anchor="middle" '
        f'font-size="14">h (log)</text>',
        f'<text x="18" y="{height / 2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 18 {height / 2})">relative error (log)</text>',
    ]
    for d in range(int(np.floor(x0)), int(np.ceil(x1)) + 1):
        if x0 <= d <= x1:
            parts.append(f'<line x1="{px(d):.1f}" y1="{py(y0):.1f}" x2="{px(d):.1f}" '
                         f'y2="{py(y1):.1f}" stroke="#dddddd"/>')
            parts.append(f'<text x="{px(d):.1f}" y="{height - margin + 18}" '
                         f'text-anchor="middle" font-size="12">1e{d}</text>')
    for d in range(int(np.floor(y0)), int(np.ceil(y1)) + 1):
        if y0 <= d <= y1:
            parts.append(f'<line x1="{px(x0):.1f}" y1="{py(d):.1f}" x2="{px(x1):.1f}" '
                         f'y2="{py(d):.1f}" stroke="#dddddd"/>')
            parts.append(f'<text x="{margin - 8}" y="{py(d):.1f}" '
                         f'text-anchor="end" font-size="12">1e{d}</text>')
    for i, (k, rows) in enumerate(sorted(rows_by_degree.items())):
        col = colors[i % len(colors)]
        pts = " ".join(f"{px(np.log10(r['h'])):.2f},{py(np.log10(max(r['err'], 1e-300))):.2f}"
                       for r in rows)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{col}" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{px(np.log10(rows[-1]["h"])) + 6:.1f}" '
                     f'y="{py(np.log10(max(rows[-1]["err"], 1e-300))):.1f}" '
                     f'fill="{col}" font-size="12">k={k}</text>')
        # slope reference triangle of order k+1 below the last segment
        r0, r1 = rows[-2], rows[-1]
        ax, ay = np.log10(r1["h"]), np.log10(max(r1["err"], 1e-300)) - 0.25
        bx = np.log10(r0["h"])
        slope = k + 1
        by = ay + slope * (bx - ax)
        parts.append(
            f'<polyline points="{px(ax):.1f},{py(ay):.1f} {px(bx):.1f},{py(ay):.1f} '
            f'{px(bx):.1f},{py(by):.1f} {px(ax):.1f},{py(ay):.1f}" fill="none" '
            f'stroke="{col}" stroke-dasharray="3 2"/>')
        parts.append(f'<text x="{(px(ax) + px(bx)) / 2:.1f}" y="{py(ay) + 14:.1f}" '
                     f'fill="{col}" font-size="11">{slope}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def build_parser():
    ap = argparse.ArgumentParser(prog="polystokes",
                                 description="Discrete Stokes complex toolkit")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in (("solve", cmd_solve), ("converge", cmd_converge),
                     ("verify", cmd_verify), ("meshinfo", cmd_meshinfo)):
        p = sub.add_parser(name)
        p.add_argument("--mesh", help="mesh JSON path (comma list for converge)")
        p.add_argument("--family", choices=["cartesian", "hexagonal", "tilted"])
        p.add_argument("--levels", help="comma-separated family levels")
        p.add_argument("--degree", default="1", help="polynomial degree (comma list ok)")
        p.add_argument("--bc", choices=["neumann", "dirichlet", "mixed"],
                       default="dirichlet")
        p.add_argument("--gamma-d", dest="gamma_d",
                       help="comma-separated Dirichlet edge ids (mixed bc)")
        p.add_argument("--solution", default="superbubble",
                       help="manufactured solution name, or 'zero'")
        p.add_argument("--mu", type=float, default=1.0)
        p.add_argument("--amplitude", type=float, default=0.2,
                       help="perturbation amplitude for the tilted family")
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--svg", help="write a log-log SVG plot (converge)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--flip-vrot", dest="flip_vrot", action="store_true",
                       help=argparse.SUPPRESS)  # negative control for verify
        p.set_defaults(fn=fn)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, meshmod.MeshError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
