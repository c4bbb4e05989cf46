"""Command line entry point: ``halfflow <subcommand> --config FILE [--seed N] [--out DIR]``.

Every run writes ``config.resolved``, ``calibration.json`` and ``plot.gp`` next
to its outputs.  Failures produce ``error.json`` ({code, message, context})
in the output directory, the same record on stderr, and a nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from . import bubbling as bb
from . import config as cf
from . import flow as fl
from . import fraccalc as fc
from . import io
from . import variational as va
from .initial import InitialDataSpec, make_initial
from .spectral import CircleGrid, LineGrid

log = logging.getLogger("halfflow")

EXIT_CONFIG, EXIT_INPUT, EXIT_NUMERIC, EXIT_ACCEPT = 2, 3, 4, 5


class CliError(RuntimeError):
    def __init__(self, code, message, context=None, exit_code=EXIT_INPUT):
        super().__init__(message)
        self.code, self.context, self.exit_code = code, context or {}, exit_code


def _initial(cfg):
    spec = InitialDataSpec.parse(cfg["initial_data"], n=cfg["n"], seed=cfg["seed"])
    return make_initial(spec, CircleGrid(cfg["M"]))


def _flow_config(cfg, calibration=None):
    th = fl.ThresholdConfig(eps1=cfg["eps1"], eps0=cfg["eps0"], sphere_tol=cfg["sphere_tol"],
                            picard_tol=cfg["picard_tol"])
    return fl.FlowConfig(dt=cfg["dt"], t_end=cfg["t_end"], reproject=cfg["reproject"],
                         slab_length=cfg["slab_length"] or None, thresholds=th,
                         scan_radii=tuple(cfg["scan_radii"]),
                         snapshot_stride=cfg["snapshot_stride"],
                         picard_max_iters=cfg["picard_max_iters"],
                         picard_tol=cfg["picard_tol"], calibration=calibration)


def _write_calibration(out, grid):
    cal = fc.calibration_for(grid)
    io.write_json(out / "calibration.json", cal.as_dict())
    return cal


def _read_calibration(trace_dir, M):
    """Calibration record stored with a flow run, or a fresh one for grid M."""
    p = Path(trace_dir) / "calibration.json"
    if p.is_file():
        return json.loads(p.read_text())
    return fc.calibration_for(CircleGrid(M)).as_dict()


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_calibrate(cfg, out, args):
    grid = CircleGrid(cfg["M"])
    cal = fc.calibrate(grid)
    io.write_json(out / "calibration.json", cal.as_dict())
    io.write_plot_script(out / "plot.gp", ["# calibration produces no series to plot"])
    return {"C_half": cal.C_half, "C_pv": cal.C_pv}


def cmd_flow(cfg, out, args):
    u0 = _initial(cfg)
    cal = _write_calibration(out, u0.grid)
    fcfg = _flow_config(cfg, cal)
    trace = fl.run_flow(u0, fcfg)
    if cfg["glue"]:
        trace = bb.glue_continue(trace, fcfg)
    io.write_trace_dir(out, trace, u0.n)
    io.write_csv(out / "energy_steps.csv", ["t", "energy"],
                 np.column_stack([trace.step_t, trace.step_energy]))
    resid = fl.energy_identity_residual(trace) if len(trace.states) > 1 else None
    report = {"status": trace.status, "message": trace.message,
              "snapshots": len(trace.states), "final_t": trace.final().t,
              "E0": trace.states[0].energy, "E_final": trace.final().energy,
              "energy_identity_residual": resid, "junctions": trace.junctions,
              "calibration": trace.calibration}
    io.write_json(out / "report.json", report)
    io.write_plot_script(out / "plot.gp", [
        "set output 'energy.png'", "set xlabel 't'",
        "plot 'energy_steps.csv' using 1:2 with lines title 'half energy'",
        "set output 'dtu.png'", "plot 'trace.csv' using 1:3 with linespoints"])
    if trace.status == "diverged":
        raise CliError("flow_diverged", trace.message, {"report": "report.json"}, EXIT_NUMERIC)
    return report


def cmd_scan(cfg, out, args):
    if not args.trace:
        raise CliError("missing_trace", "scan needs --trace DIR (a flow output directory)")
    radii = [float(r) for r in args.radii.split(",")] if args.radii else cfg["radii"]
    cfg["radii"] = radii
    states = io.read_trace_dir(args.trace)
    grid = states[0][1].grid
    rep = bb.concentration_scan(states, radii, cfg["eps1"])
    R = cfg["report_radius"]
    if len(states) > 1 and 0 < R < 0.5:
        rep.struwe_ratio = bb.struwe_l4_report(states, R)
        rep.h1_ratio = bb.h1_bound_report(states, R)
    io.write_json(out / "calibration.json", _read_calibration(args.trace, grid.M))
    io.write_json(out / "concentration.json", rep.as_dict())
    rows = [[t, R_, e] for t, R_, _, e in rep.peaks]
    io.write_csv(out / "peaks.csv", ["t", "R", "E_R_peak"], rows)
    io.write_plot_script(out / "plot.gp", [
        "set output 'peaks.png'", "set xlabel 't'",
        "plot 'peaks.csv' using 1:3 with points title 'peak E_R'"])
    return rep.as_dict()


def cmd_bubble(cfg, out, args):
    if not args.trace or not args.at:
        raise CliError("missing_argument", "bubble needs --trace DIR and --at t,x,R")
    try:
        t_n, x_n, R_n = (float(v) for v in args.at.split(","))
    except ValueError as exc:
        raise CliError("bad_argument", f"--at expects t,x,R: {exc}", {"at": args.at})
    states = io.read_trace_dir(args.trace)
    io.write_json(out / "calibration.json", _read_calibration(args.trace, states[0][1].grid.M))
    line = LineGrid(cfg["L"], cfg["line_M"])
    try:
        ext = bb.rescale_extract(states, t_n, x_n, R_n, cfg["gamma"], line, cfg["N"])
    except ValueError as exc:
        raise CliError("bad_rescaling", str(exc), {"t": t_n, "x": x_n, "R": R_n})
    v = ext.line_field
    io.write_csv(out / "bubble.csv", ["x"] + [f"v_{c + 1}" for c in range(v.n)],
                 np.column_stack([line.nodes, v.as2d()]))
    io.write_json(out / "bubble_report.json", ext.as_dict())
    io.write_plot_script(out / "plot.gp", [
        "set output 'bubble.png'", "set xlabel 'x'",
        "plot for [c=2:4] 'bubble.csv' using 1:c with lines"])
    return ext.as_dict()


def cmd_variational(cfg, out, args):
    u0 = _initial(cfg)
    _write_calibration(out, u0.grid)
    eps = cfg["eps"]
    kw = dict(iters=cfg["iters"], Mt=cfg["Mt"], T_factor=cfg["T_factor"])
    U = va.minimize(u0, eps, cfg["s"], cfg["p"], **kw)
    g = U.grid
    rows = [[t, x, *U.values[m, i]] for m, t in enumerate(U.times)
            for i, x in enumerate(g.nodes)]
    io.write_csv(out / "minimizer.csv", ["t", "x"] + [f"u_{c + 1}" for c in range(u0.n)], rows)
    d = va.diagnostics_ire(U, eps)
    io.write_csv(out / "ire.csv", ["t", "I", "R", "E"],
                 np.column_stack([d.s * eps, d.I, d.R, d.E]))
    sw = va.epsilon_sweep(u0, cfg["eps_list"], cfg["s"], cfg["p"], **kw)
    io.write_csv(out / "sweep.csv", ["eps", "dtv_sq", "window_R", "energy"],
                 np.column_stack([sw.eps, sw.dtv_sq, sw.window_R, sw.energies]),
                 footer=f"slope = {sw.slope!r}")
    bound = 2.0 * eps * va.sobolev_energy(u0, cfg["s"], cfg["p"])
    report = {"eps": eps, "energy": U.history[-1], "bound_2epsE": bound,
              "iterations": len(U.history) - 1, "el_residual": va.el_residual(U, eps),
              "monotonicity": va.monotonicity_check(U, eps), "sweep_slope": sw.slope}
    io.write_json(out / "variational_report.json", report)
    io.write_plot_script(out / "plot.gp", [
        "set output 'ire.png'", "set xlabel 't'",
        "plot 'ire.csv' using 1:2 with lines, '' using 1:3 with lines, '' using 1:4 with lines",
        "set output 'sweep.png'", "set logscale xy",
        "plot 'sweep.csv' using 1:2 with linespoints title 'int |d_s v|^2'"])
    return report


def cmd_wente(cfg, out, args):
    g = CircleGrid(cfg["M"])
    _write_calibration(out, g)
    ratios = acceptance.wente_ensemble(cfg["M"], cfg["samples"], cfg["delta"],
                                       seed=cfg["seed"], P=cfg["kernel_modes"],
                                       K=cfg["g_modes"])
    io.write_csv(out / "wente.csv", ["sample", "ratio"],
                 np.column_stack([np.arange(len(ratios)), ratios]))
    report = {"M": cfg["M"], "samples": len(ratios), "max_ratio": float(ratios.max()),
              "mean_ratio": float(ratios.mean())}
    io.write_json(out / "wente_report.json", report)
    io.write_plot_script(out / "plot.gp", [
        "set output 'wente.png'", "plot 'wente.csv' using 1:2 with points"])
    return report


def cmd_accept(cfg, out, args):
    st = acceptance.Settings(M_scale=cfg["M_scale"], fault=cfg["fault"])
    _write_calibration(out, CircleGrid(st.M(256)))
    only = {int(v) for v in args.only.split(",")} if args.only else None
    results = acceptance.run_suite(st, only=only, echo=print)
    rows = [{"id": r.id, "name": r.name, "status": r.status, "measured": r.measured,
             "tolerance": r.tolerance, "seconds": r.seconds} for r in results]
    io.write_json(out / "acceptance.json", {"settings": vars(st), "results": rows})
    io.write_csv(out / "acceptance.csv", ["id", "passed", "seconds"],
                 [[r.id, float(r.status == "pass"), r.seconds] for r in results])
    io.write_plot_script(out / "plot.gp", [
        "set output 'acceptance.png'", "plot 'acceptance.csv' using 1:3 with boxes"])
    failed = [r.id for r in results if r.status == "fail"]
    if failed:
        raise CliError("acceptance_failed", f"criteria failed: {failed}",
                       {"failed": failed}, EXIT_ACCEPT)
    return {"passed": len(results)}


COMMANDS = {"calibrate": cmd_calibrate, "flow": cmd_flow, "scan": cmd_scan,
            "bubble": cmd_bubble, "variational": cmd_variational, "wente": cmd_wente,
            "accept": cmd_accept}


def build_parser():
    ap = argparse.ArgumentParser(prog="halfflow",
                                 description="Half-harmonic gradient flow experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int, help="override the configured RNG seed")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        if name in ("scan", "bubble"):
            p.add_argument("--trace", help="flow output directory to analyse")
        if name == "scan":
            p.add_argument("--radii", help="comma-separated scan radii")
        if name == "bubble":
            p.add_argument("--at", help="t,x,R of the concentration point")
        if name == "accept":
            p.add_argument("--only", help="comma-separated criterion ids")
    return ap


def _emit_error(out, code, message, context, exit_code):
    rec = io.error_record(code, message, context)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            io.write_json(out / "error.json", rec)
        except OSError:
            pass
    print(json.dumps(rec), file=sys.stderr)
    return exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out) if args.out else None
    try:
        cfg = cf.load(args.command, args.config,
                      {"seed": args.seed, "output_dir": args.out})
        out = Path(cfg["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command](cfg, out, args)
        (out / "config.resolved").write_text(cf.dump(cfg))
    except cf.ConfigError as exc:
        return _emit_error(out, "config_error", str(exc), exc.context, EXIT_CONFIG)
    except CliError as exc:
        if out is not None:
            (out / "config.resolved").write_text(cf.dump(cfg))
        return _emit_error(out, exc.code, str(exc), exc.context, exc.exit_code)
    except (FileNotFoundError, ValueError) as exc:
        return _emit_error(out, "invalid_input", str(exc),
                           {"type": type(exc).__name__}, EXIT_INPUT)
    except (RuntimeError, ArithmeticError) as exc:
        return _emit_error(out, "numerical_failure", str(exc),
                           {"type": type(exc).__name__}, EXIT_NUMERIC)
    if args.verbose and summary is not None:
        print(json.dumps(io._jsonable(summary), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
