"""Command-line front end.

Subcommands: curvature, verify, spectrum, evolve, dump.  Exit codes:
0 success (all checks passed for `verify`), 1 verification failure,
2 usage / configuration / parse error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import dynamics as dyn
from . import operators as ops
from .expr import ExprError, evaluate
from .geometry import (ChartError, builtin_chart, curvature_data, load_chart)
from .grids import GridError, build_grid
from .verify import DEFAULT_TOLERANCES, run_suite


class UsageError(Exception):
    pass


def _add_common(p):
    p.add_argument("--chart", choices=["sphere", "cylinder", "ring"],
                   help="built-in chart name")
    p.add_argument("--R", type=float, default=1.0, help="surface radius")
    p.add_argument("--Lz", type=float, help="cylinder axial period")
    p.add_argument("--chart-file", help="path to a chart JSON file")
    p.add_argument("--hbar", type=float, default=1.0)
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--res", help="grid resolution N1xN2 (ring: N1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", action="append", default=[], metavar="CHECKID=VALUE",
                   help="tolerance override, repeatable")
    p.add_argument("--out", help="output directory")


def _make_chart(args, need_Lz=True):
    from .geometry import PhysParams
    if args.chart_file:
        return load_chart(args.chart_file)
    if not args.chart:
        raise UsageError("need --chart or --chart-file")
    Lz = args.Lz
    if args.chart == "cylinder" and Lz is None:
        if need_Lz:
            raise UsageError("cylinder needs --Lz")
        Lz = 1.0  # curvature does not depend on the axial period
    return builtin_chart(args.chart, args.R, Lz=Lz,
                         params=PhysParams(args.hbar, args.mass))


def _parse_res(args, chart):
    if not args.res:
        raise UsageError("need --res N1xN2")
    parts = args.res.lower().split("x")
    try:
        if len(parts) == 1:
            n1, n2 = int(parts[0]), 1 if chart.kind == "ring" else -1
        else:
            n1, n2 = int(parts[0]), int(parts[1])
    except ValueError:
        raise UsageError(f"malformed --res {args.res!r}") from None
    if n2 == -1:
        raise UsageError("need --res N1xN2 for this chart")
    return n1, n2


def _parse_tols(args):
    out = {}
    for item in args.tol:
        if "=" not in item:
            raise UsageError(f"malformed --tol {item!r}, expected CHECKID=VALUE")
        key, val = item.split("=", 1)
        if key not in DEFAULT_TOLERANCES:
            raise UsageError(f"unknown check id {key!r}")
        try:
            out[key] = float(val)
        except ValueError:
            raise UsageError(f"malformed tolerance value {val!r}") from None
        if out[key] <= 0:
            raise UsageError("tolerances must be positive")
    return out


def _outdir(args):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_curvature(args):
    chart = _make_chart(args, need_Lz=False)
    data = curvature_data(chart)
    lines = []
    if chart.kind in ("sphere", "cylinder", "ring"):
        from .geometry import evaluate_curvature_constant
        for name, e in (("M", data.M), ("K", data.K), ("Vgeo", data.Vgeo)):
            val, const = evaluate_curvature_constant(chart, e)
            tag = "" if const else "  (not constant)"
            lines.append(f"{name} = {val + 0.0:.15g}{tag}")
    else:
        q1, q2 = chart.sample_points(n=5)
        lines.append(f"{'q1':>12} {'q2':>12} {'M':>15} {'K':>15} {'Vgeo':>15}")
        for i in range(len(q1)):
            b = chart.bindings(q1[i], q2[i])
            lines.append(
                f"{q1[i]:>12.6f} {q2[i]:>12.6f} "
                f"{evaluate(data.M, b):>15.8g} {evaluate(data.K, b):>15.8g} "
                f"{evaluate(data.Vgeo, b):>15.8g}")
    text = "\n".join(lines)
    print(text)
    out = _outdir(args)
    if out:
        with open(os.path.join(out, "curvature.txt"), "w", encoding="utf-8") as f:
            f.write(text + "\n")
    return 0


def cmd_verify(args):
    chart = _make_chart(args)
    n1, n2 = _parse_res(args, chart)
    grid = build_grid(chart, n1, n2)
    report = run_suite(chart, grid, args.seed, tolerances=_parse_tols(args))
    print(report.to_text())
    out = _outdir(args)
    if out:
        with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as f:
            f.write(report.to_json() + "\n")
        with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as f:
            f.write(report.to_text() + "\n")
    return 0 if report.all_passed else 1


def _analytic_level(chart, mode):
    hbar, mass, R = chart.params.hbar, chart.params.mass, chart.a
    if chart.kind == "sphere":
        l, _ = mode
        return hbar ** 2 * l * (l + 1) / (2 * mass * R * R)
    n, k = mode
    Lz = chart.domains[1].length
    return (hbar ** 2 * n * n / (2 * mass * R * R)
            + hbar ** 2 * (2 * math.pi * k / Lz) ** 2 / (2 * mass)
            - hbar ** 2 / (8 * mass * R * R))


def cmd_spectrum(args):
    chart = _make_chart(args)
    n1, n2 = _parse_res(args, chart)
    grid = build_grid(chart, n1, n2)
    if args.count > grid.basis.K:
        raise UsageError(f"--count exceeds the number of resolved modes ({grid.basis.K})")
    H = ops.hamiltonian(chart, grid)
    vals, _ = H.eigh()
    vals = np.sort(vals)[:args.count]
    analytic = np.sort([_analytic_level(chart, m) for m in grid.basis.modes])[:args.count]
    scale = np.maximum(np.abs(analytic), 1e-30)
    lines = ["index,eigenvalue,analytic,rel_err"]
    for i in range(args.count):
        rel = abs(vals[i] - analytic[i]) / scale[i]
        lines.append(f"{i},{vals[i]:.17g},{analytic[i]:.17g},{rel:.3e}")
    text = "\n".join(lines)
    print(text)
    out = _outdir(args)
    if out:
        with open(os.path.join(out, "spectrum.csv"), "w", encoding="utf-8") as f:
            f.write(text + "\n")
    return 0


def cmd_evolve(args):
    chart = _make_chart(args)
    n1, n2 = _parse_res(args, chart)
    grid = build_grid(chart, n1, n2)
    if args.initial == "packet":
        if args.sigma is None:
            raise UsageError("packet initial state needs --sigma")
        psi0 = dyn.gaussian_packet(grid, sigma=args.sigma, l0=args.l0,
                                   theta0=args.theta0, phi0=args.phi0)
    else:
        if args.l is None:
            raise UsageError("ylm initial state needs --l (and --m)")
        psi0 = dyn.stationary_state(grid, (args.l, args.m))
    H = ops.hamiltonian(chart, grid)
    run = dyn.propagate(H, psi0, args.dt, args.steps)
    summary = {
        "steps": args.steps,
        "dt": args.dt,
        "max_norm_drift": run.drift("norm"),
        "max_E_drift": run.drift("E"),
        "max_Lz_drift": run.drift("Lz"),
    }
    if args.initial == "packet":
        F, _, _ = ops.force_closed_form(chart, grid)
        Rop = ops.position_op(chart, grid)
        v2 = ops.velocity_squared(chart, grid)
        fexp = np.real(dyn.expectation(F, psi0))
        rexp = np.real(dyn.expectation(Rop, psi0)) / chart.a
        v2exp = dyn.expectation(v2, psi0)
        cosang = float(np.dot(fexp, -rexp) / (np.linalg.norm(fexp) * np.linalg.norm(rexp)))
        summary["F_dir_cos_vs_minus_rhat"] = cosang
        summary["F_mag_over_mv2_R"] = float(
            np.linalg.norm(fexp) / (chart.params.mass * v2exp / chart.a))
    out = _outdir(args)
    if out:
        run.to_csv(os.path.join(out, "evolve.csv"))
        with open(os.path.join(out, "evolve_summary.json"), "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


_DUMPABLE = ("H", "v2", "px", "py", "pz", "Lx", "Ly", "Lz", "Fx", "Fy", "Fz")


def cmd_dump(args):
    chart = _make_chart(args)
    n1, n2 = _parse_res(args, chart)
    grid = build_grid(chart, n1, n2)
    name = args.op
    if name not in _DUMPABLE:
        raise UsageError(f"unknown operator {name!r}; choose from {_DUMPABLE}")
    if name == "H":
        op = ops.hamiltonian(chart, grid)
    elif name == "v2":
        op = ops.velocity_squared(chart, grid)
    elif name[0] == "p":
        op = ops.surface_momentum(chart, grid)["xyz".index(name[1])]
    elif name[0] == "L":
        op = ops.angular_momentum(chart, grid)["xyz".index(name[1])]
    else:
        F, _, _ = ops.force_closed_form(chart, grid)
        op = F["xyz".index(name[1])]
    ops.write_operator(op, args.file)
    print(f"wrote {name} ({grid.N}x{grid.N}) to {args.file}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cqop",
        description="Construct and verify quantum operators on curved surfaces")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curvature", help="print M, K, and the geometric potential")
    _add_common(p)
    p.set_defaults(fn=cmd_curvature)

    p = sub.add_parser("verify", help="run the operator identity suite")
    _add_common(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("spectrum", help="eigenvalues with analytic comparison")
    _add_common(p)
    p.add_argument("--count", type=int, default=16)
    p.set_defaults(fn=cmd_spectrum)

    p = sub.add_parser("evolve", help="propagate a state and log observables")
    _add_common(p)
    p.add_argument("--initial", choices=["ylm", "packet"], default="ylm")
    p.add_argument("--l", type=int, help="mode degree (ylm initial state)")
    p.add_argument("--m", type=int, default=0, help="mode order")
    p.add_argument("--sigma", type=float, help="packet width (radians)")
    p.add_argument("--l0", type=int, default=4, help="packet azimuthal boost")
    p.add_argument("--theta0", type=float, default=math.pi / 2)
    p.add_argument("--phi0", type=float, default=0.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=1000)
    p.set_defaults(fn=cmd_evolve)

    p = sub.add_parser("dump", help="export an operator matrix (binary container)")
    _add_common(p)
    p.add_argument("--op", required=True, help=f"one of {', '.join(_DUMPABLE)}")
    p.add_argument("--file", required=True, help="output path")
    p.set_defaults(fn=cmd_dump)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (UsageError, ChartError, GridError, ExprError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
