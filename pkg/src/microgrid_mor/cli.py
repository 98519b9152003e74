"""Command-line front end.

Exit status: 0 success (and stable, where a verdict applies), 2 unstable,
1 error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    critical_gain,
    eigen_report,
    gain_builder,
    region_builder,
    stability_region,
)
from .errors import MicrogridError
from .models import MODEL_KINDS, build_network_model, build_network_nonlinear
from .reduction import PartitionedLinear, reduce_first_order, reduce_zero_order
from .scenario import (
    identical_cascade,
    read_document,
    scenario_from_dict,
    with_gains,
    with_line_length,
    with_rating_scale,
)
from .sim import SOLVERS, angle_kick, bench, integrate

EXIT_OK, EXIT_ERROR, EXIT_UNSTABLE = 0, 1, 2


def _grid(text: str) -> tuple[int, int]:
    try:
        n, m = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 40x30, got {text!r}") from None
    if n < 2 or m < 2:
        raise argparse.ArgumentTypeError("grid needs at least 2 points per axis")
    return n, m


def _scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", help="scenario JSON file or bundled fixture name (table1_cascade, twobus)")
    p.add_argument("--kp-scale", type=float, default=1.0, help="multiplier on every inverter's kp")
    p.add_argument("--kq-scale", type=float, default=1.0, help="multiplier on every inverter's kq")
    p.add_argument("--kp", type=float, help="absolute kp in percent for every inverter (before scaling)")
    p.add_argument("--kq", type=float, help="absolute kq in percent for every inverter (before scaling)")
    p.add_argument("--line-length-km", type=float, help="set every line to this length")
    p.add_argument("--rating-scale", type=float, help="multiply every inverter rating, keeping normalized gains")


def _load(args):
    doc = read_document(args.scenario)
    if args.line_length_km is not None:
        doc = with_line_length(doc, args.line_length_km)
    if args.rating_scale is not None:
        doc = with_rating_scale(doc, args.rating_scale)
    sc = scenario_from_dict(doc)
    if args.kp is not None or args.kq is not None:
        sc = with_gains(
            sc,
            None if args.kp is None else args.kp / 100.0,
            None if args.kq is None else args.kq / 100.0,
        )
    return sc.scaled(args.kp_scale, args.kq_scale)


def _out_dir(args) -> Path | None:
    if getattr(args, "out", None) is None:
        return None
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_rows(path: Path | None, header, rows) -> None:
    if path is None:
        writer = csv.writer(sys.stdout, lineterminator="\n")
    else:
        fh = open(path, "w", encoding="utf-8", newline="")
        writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([f"{v:.15g}" if isinstance(v, float) else v for v in row])
    if path is not None:
        fh.close()


def cmd_eig(args) -> int:
    sc = _load(args)
    ss = build_network_model(sc.network, sc.inverters, args.model, sc.virtual_resistance)
    rep = eigen_report(ss, args.zero_tol or sc.zero_tol)
    order = np.lexsort((rep.eigenvalues.imag, -rep.eigenvalues.real))
    rows = [(float(e.real), float(e.imag), args.model) for e in rep.eigenvalues[order]]
    out = _out_dir(args)
    _write_rows(out / f"eig_{args.model}.csv" if out else None, ["re", "im", "kind"], rows)
    verdict = "stable" if rep.stable else "unstable"
    print(f"{args.model}: {verdict} (abscissa {rep.abscissa:.6g} 1/s, {ss.dimension} states)", file=sys.stderr)
    return EXIT_OK if rep.stable else EXIT_UNSTABLE


def _sweep_one(sc, kind, kp_values, kq_values, out: Path | None):
    region = stability_region(region_builder(sc.network, sc.inverters, kind, sc.virtual_resistance), kp_values, kq_values, kind, sc.zero_tol)
    grid_rows = [
        (float(kp * 100), float(kq * 100), int(region.verdicts[i, j]))
        for i, kq in enumerate(region.kq)
        for j, kp in enumerate(region.kp)
    ]
    bnd_rows = [(kp * 100, kq * 100) for kp, kq in region.boundary]
    if out is None:
        _write_rows(None, ["kp", "kq", "stable"], grid_rows)
    else:
        target = out / kind
        target.mkdir(exist_ok=True)
        _write_rows(target / "grid.csv", ["kp", "kq", "stable"], grid_rows)
        _write_rows(target / "boundary.csv", ["kp", "kq"], bnd_rows)
    return region


def cmd_sweep(args) -> int:
    sc = _load(args)
    n, m = args.grid
    kp_values = np.linspace(*args.kp_range, n) / 100.0
    kq_values = np.linspace(*args.kq_range, m) / 100.0
    out = _out_dir(args)
    for kind in args.model or ["full"]:
        region = _sweep_one(sc, kind, kp_values, kq_values, out)
        print(f"{kind}: {int(region.verdicts.sum())}/{region.verdicts.size} stable grid points, "
              f"{len(region.boundary)} boundary points", file=sys.stderr)
    return EXIT_OK


def cmd_critical(args) -> int:
    sc = _load(args)
    builder = gain_builder(sc.network, sc.inverters, args.model, args.axis, virtual_resistance=sc.virtual_resistance)
    lo, hi = (v / 100.0 for v in args.bracket)
    res = critical_gain(builder, (lo, hi), args.rel_tol, sc.zero_tol, full_output=True)
    print(f"critical {args.axis} ({args.model}) = {res.gain * 100:.4f}%")
    print(f"final bracket [{res.bracket[0] * 100:.6f}%, {res.bracket[1] * 100:.6f}%] after {res.iterations} bisections")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _load(args)
    model = build_network_nonlinear(sc.network, sc.inverters, args.model, sc.virtual_resistance)
    if args.perturb == "angle":
        x0 = angle_kick(model, 0, args.kick)
    else:
        rng = np.random.default_rng(args.seed)
        x0 = model.equilibrium.copy()
        idx = [k for k, lab in enumerate(model.labels) if lab.kind == "angle"]
        x0[idx] += args.kick * rng.standard_normal(len(idx))
    traj = integrate(model, x0, args.t_end, args.solver, rtol=args.rtol, atol=args.atol)
    out = _out_dir(args)
    text = traj.to_csv(out / f"trajectory_{args.model}.csv" if out else None)
    if out is None:
        sys.stdout.write(text)
    status = "diverged" if traj.diverged else "finished"
    print(f"{args.model}: {status} at t = {traj.t[-1]:.6g} s, {traj.accepted} steps ({traj.rejected} rejected)", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args) -> int:
    scenarios = [identical_cascade(n) for n in args.n]
    records = bench(scenarios, solvers=args.solver or ["trapezoidal"], t_end=args.t_end, repeats=args.repeats)
    header = ["model", "n", "n_states", "solver", "wall_time_s", "accepted", "rejected", "error"]
    rows = [
        (r.kind, r.n_inverters, r.n_states, r.solver, r.wall_time, r.accepted, r.rejected, r.error or "")
        for r in records
    ]
    out = _out_dir(args)
    if out is not None:
        _write_rows(out / "bench.csv", header, rows)
    print("| " + " | ".join(header[:-1]) + " |")
    print("|" + "---|" * (len(header) - 1))
    for r in records:
        wall = "NA" if math.isnan(r.wall_time) else f"{r.wall_time:.4f}"
        print(f"| {r.kind} | {r.n_inverters} | {r.n_states} | {r.solver} | {wall} | {r.accepted} | {r.rejected} |")
    return EXIT_OK


def cmd_reduce(args) -> int:
    try:
        doc = json.loads(Path(args.matrices).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MicrogridError(f"{args.matrices}: malformed JSON at line {exc.lineno}: {exc.msg}") from exc
    missing = [k for k in ("a_ss", "a_sf", "a_fs", "a_ff", "gamma") if k not in doc]
    if missing:
        raise MicrogridError(f"{args.matrices}: missing keys {missing}")
    p = PartitionedLinear(doc["a_ss"], doc["a_sf"], doc["a_fs"], doc["a_ff"], doc["gamma"])
    a = reduce_zero_order(p) if args.order == 0 else reduce_first_order(p)
    out = _out_dir(args)
    _write_rows(out / f"reduced_order{args.order}.csv" if out else None, [f"c{k}" for k in range(a.shape[1])], [tuple(map(float, r)) for r in a])
    return EXIT_OK


def _gnuplot(path: Path | None, header, blocks) -> None:
    """Whitespace columns; blank lines separate blocks."""
    lines = ["# " + " ".join(header)]
    for k, block in enumerate(blocks):
        if k:
            lines += ["", ""]
        lines += [" ".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in row) for row in block]
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def cmd_plotdata(args) -> int:
    from . import plotdata

    out = _out_dir(args)
    n, m = args.grid
    name, header, blocks = plotdata.FIGURES[args.figure](n, m)
    _gnuplot(out / f"{name}.dat" if out else None, header, blocks)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="microgrid-mor", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eig", help="eigenvalues and stability verdict")
    _scenario_args(p)
    p.add_argument("--model", choices=MODEL_KINDS, default="hifi3")
    p.add_argument("--zero-tol", type=float, help="reference-mode tolerance in 1/s (scenario default otherwise)")
    p.add_argument("--out", help="directory for eig_<model>.csv (stdout otherwise)")
    p.set_defaults(func=cmd_eig)

    p = sub.add_parser("sweep", help="stability region on a kp x kq grid")
    _scenario_args(p)
    p.add_argument("--model", choices=MODEL_KINDS, action="append", help="repeat for several models")
    p.add_argument("--kp-range", type=float, nargs=2, default=(0.1, 5.0), metavar=("LO", "HI"), help="percent")
    p.add_argument("--kq-range", type=float, nargs=2, default=(0.5, 50.0), metavar=("LO", "HI"), help="percent")
    p.add_argument("--grid", type=_grid, default=(40, 40), help="NxM: N kp points by M kq points")
    p.add_argument("--out", help="directory receiving <model>/grid.csv and <model>/boundary.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("critical", help="critical droop gain by bisection")
    _scenario_args(p)
    p.add_argument("--model", choices=MODEL_KINDS, default="hifi3")
    p.add_argument("--axis", choices=("kp", "kq"), default="kp")
    p.add_argument("--bracket", type=float, nargs=2, default=(0.05, 20.0), metavar=("LO", "HI"), help="percent")
    p.add_argument("--rel-tol", type=float, default=1e-3)
    p.set_defaults(func=cmd_critical)

    p = sub.add_parser("simulate", help="nonlinear time-domain run after a small perturbation")
    _scenario_args(p)
    p.add_argument("--model", choices=MODEL_KINDS, default="hifi3")
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--solver", choices=SOLVERS, default="trapezoidal")
    p.add_argument("--rtol", type=float, default=1e-6)
    p.add_argument("--atol", type=float, default=1e-9)
    p.add_argument("--perturb", choices=("angle", "random"), default="angle",
                   help="kick inverter 1's angle, or all angles with seeded noise")
    p.add_argument("--kick", type=float, default=1e-3, help="perturbation size in rad")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for trajectory_<model>.csv (stdout otherwise)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="runtime and state counts on identical cascades")
    p.add_argument("--n", type=int, nargs="+", default=[5, 25])
    p.add_argument("--solver", choices=SOLVERS, action="append")
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out", help="directory for bench.csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("reduce", help="zero- or first-order elimination of a partitioned system")
    p.add_argument("matrices", help="JSON with a_ss, a_sf, a_fs, a_ff and gamma (diagonal entries)")
    p.add_argument("--order", type=int, choices=(0, 1), default=1)
    p.add_argument("--out", help="directory for reduced_order<k>.csv (stdout otherwise)")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("plotdata", help="gnuplot columns for the stability and response figures")
    p.add_argument("figure", choices=("fig2", "fig3", "fig4", "fig5", "fig6"))
    p.add_argument("--grid", type=_grid, default=(40, 40))
    p.add_argument("--out")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MicrogridError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
