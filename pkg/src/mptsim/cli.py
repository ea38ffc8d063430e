"""Command-line front end.

Subcommands:
    field      field cuts and current-to-field calibration tables
    predict    closed-form mode frequencies at the configured point
    stability  drive-strength parameters and the stability class
    simulate   one time-domain trajectory from the configured state
    analyze    spectra, peak fits, and optional ringdown on a trajectory CSV
    sweep      run the sweep section of the config
    figure     run one of the canned figure-style studies

Every run writes config.resolved.json into the output directory; that file
can be passed back as --config to repeat the run bit-identically. Errors
leave a one-line JSON record on stderr and map to exit codes: 2 for
configuration problems, 3 for numeric failures (escape, no equilibrium,
failed fits), 4 for I/O problems.
"""

import argparse
import json
import math
import os
import sys
from types import SimpleNamespace

import numpy as np

from . import __version__
from . import plotting
from .config import parse_config, write_resolved
from .errors import (ConfigError, NumericalError, EscapeError,
                     NonFiniteStateError, NoPeakError, FitConvergenceError,
                     InsufficientPointsError)
from .fields import (bias_field, bias_response, trap_field_amplitude,
                     trap_curvature, calibration_tables,
                     write_calibration_csv)
from .secular import OperatingPoint, mathieu_q, stability_check, predict
from .dynamics import simulate, default_initial_state
from .spectral import power_spectrum, fit_lorentzian, fit_ringdown
from . import sweep as sweepmod

# field-cut sampling: span in outer-loop radii, points per cut, and the
# height of the radial cut (on the loop plane the cut would intersect the
# filaments themselves)
CUT_SPAN_FACTOR = 2.0
CUT_POINTS = 241
RADIAL_CUT_HEIGHT_FACTOR = 0.5        # of the inner loop radius

CALIBRATION_GRID = np.linspace(0.05, 1.2, 24)

TRACE_COMPONENTS = ("x", "y", "z", "alpha", "beta", "gamma")
_CSV_COLUMNS = {"x": 1, "y": 2, "z": 3, "alpha": 7, "beta": 8, "gamma": 9}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=None,
                        help="YAML config file (or a config.resolved.json)")
    common.add_argument("--out", metavar="DIR", default=None,
                        help="output directory (default: config output_dir)")
    common.add_argument("--seed", type=int, default=0,
                        help="seed for any randomized utility (default 0)")
    common.add_argument("--workers", type=int, default=1,
                        help="thread count for sweep points (default 1)")
    common.add_argument("--quiet", action="store_true",
                        help="suppress stdout chatter")

    parser = argparse.ArgumentParser(
        prog="mptsim",
        description="Planar AC magnetic levitation trap: simulation and "
                    "analysis toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sub.add_parser("field", parents=[common],
                   help="field cuts and calibration tables")
    sub.add_parser("predict", parents=[common],
                   help="closed-form mode frequencies")
    sub.add_parser("stability", parents=[common],
                   help="drive-strength parameter and stability class")
    sub.add_parser("simulate", parents=[common],
                   help="one time-domain trajectory")
    p = sub.add_parser("analyze", parents=[common],
                       help="spectra and fits from a trajectory CSV")
    p.add_argument("input", help="trajectory CSV (t_s,x_m,...,gamma_rad)")
    p.add_argument("--components", default="x,y,z,beta,gamma",
                   help="comma list from %s" % (",".join(TRACE_COMPONENTS)))
    p.add_argument("--ringdown", metavar="COMPONENT", default=None,
                   help="also fit a decaying oscillation to this component")
    sub.add_parser("sweep", parents=[common],
                   help="run the sweep section of the config")
    p = sub.add_parser("figure", parents=[common],
                       help="run a canned figure-style study")
    p.add_argument("figure_id", help="one of %s" % ", ".join(sweepmod.FIGURE_IDS))
    return parser


def _say(args, text):
    if not args.quiet:
        print(text)


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _operating_point(cfg) -> OperatingPoint:
    """The configured point in field terms: bias currents converted on axis."""
    m = bias_response(cfg.geometry)
    b0, b0p = m @ np.array([cfg.bias.i_top, cfg.bias.i_bottom])
    return OperatingPoint(omega_drive=cfg.drive.omega_drive,
                          b1_curvature=cfg.b1_curvature,
                          b0=abs(float(b0)), b0_gradient=float(b0p))


def _cmd_field(args, cfg, out):
    geom, drive, bias = cfg.geometry, cfg.drive, cfg.bias
    table = calibration_tables(geom, CALIBRATION_GRID, xi=drive.xi)
    write_calibration_csv(os.path.join(out, "calibration.csv"), table)
    plotting.plot_calibration(table, os.path.join(out, "calibration.png"))

    span = CUT_SPAN_FACTOR * geom.outer_loop.radius
    cut = np.linspace(-span, span, CUT_POINTS)
    axial = {"z_m": cut,
             "trap_bz_amplitude_t": np.empty(CUT_POINTS),
             "bias_bz_t": np.empty(CUT_POINTS)}
    for i, z in enumerate(cut):
        p = (0.0, 0.0, z)
        axial["trap_bz_amplitude_t"][i] = trap_field_amplitude(
            geom, drive, p, jacobian=False).b[2]
        axial["bias_bz_t"][i] = bias_field(geom, bias, p, jacobian=False).b[2]
    z0 = RADIAL_CUT_HEIGHT_FACTOR * geom.inner_loop.radius
    radial = {"x_m": cut, "z_m": np.full(CUT_POINTS, z0),
              "trap_bx_amplitude_t": np.empty(CUT_POINTS),
              "trap_bz_amplitude_t": np.empty(CUT_POINTS),
              "bias_bz_t": np.empty(CUT_POINTS)}
    for i, x in enumerate(cut):
        p = (x, 0.0, z0)
        sample = trap_field_amplitude(geom, drive, p, jacobian=False)
        radial["trap_bx_amplitude_t"][i] = sample.b[0]
        radial["trap_bz_amplitude_t"][i] = sample.b[2]
        radial["bias_bz_t"][i] = bias_field(geom, bias, p, jacobian=False).b[2]
    for name, cols in (("field_axial.csv", axial), ("field_radial.csv", radial)):
        header = ",".join(cols)
        np.savetxt(os.path.join(out, name),
                   np.column_stack(list(cols.values())),
                   delimiter=",", comments="", header=header, fmt="%.12e")
    plotting.plot_field_cuts(axial, radial, os.path.join(out, "field.png"))

    op = _operating_point(cfg)
    _write_json(os.path.join(out, "field.json"), {
        "b0_t": op.b0,
        "b0_gradient_t_per_m": op.b0_gradient,
        "b1_curvature_t_per_m2": trap_curvature(geom, drive),
        "i_trap_a": drive.i_trap,
    })
    _say(args, "wrote calibration and field cuts to %s" % out)
    return 0


def _cmd_predict(args, cfg, out):
    pred = predict(_operating_point(cfg), cfg.magnet)
    doc = pred.to_json_dict()
    _write_json(os.path.join(out, "predict.json"), doc)
    _say(args, json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_stability(args, cfg, out):
    q_z, q_xy = mathieu_q(_operating_point(cfg), cfg.magnet)
    doc = {"q_z": q_z, "q_x": q_xy, "q_y": q_xy,
           "stability": stability_check(q_z)}
    _write_json(os.path.join(out, "stability.json"), doc)
    _say(args, json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_simulate(args, cfg, out):
    sim = cfg.sim_config()
    init = default_initial_state(cfg.geometry, cfg.drive, cfg.bias,
                                 cfg.magnet, extra_force=sim.offset_force)
    traj = simulate(init, cfg.geometry, cfg.drive, cfg.bias, cfg.magnet,
                    sim, raise_on_escape=False)
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    plotting.plot_trajectory(traj, os.path.join(out, "trajectory.png"))
    _write_json(os.path.join(out, "simulate.json"), {
        "status": traj.status,
        "samples": len(traj),
        "sample_rate_hz": traj.sample_rate,
        "end_time_s": traj.end_time,
    })
    _say(args, "wrote %d samples (%s) to %s" % (len(traj), traj.status, out))
    if traj.status == "escaped":
        raise EscapeError("magnet escaped at t = %.6g s" % traj.end_time,
                          escape_time=traj.end_time, trajectory=traj)
    if traj.status == "nonfinite":
        raise NonFiniteStateError(
            "state became non-finite at t = %.6g s" % traj.end_time,
            time=traj.end_time)
    return 0


def _load_trajectory_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 10:
        raise ConfigError("%s: expected the 10-column trajectory layout" % path)
    t = data[:, 0]
    dt = np.diff(t)
    if t.size < 3 or np.any(dt <= 0) or np.ptp(dt) > 1e-6 * dt[0]:
        raise ConfigError("%s: time axis must be uniform, increasing" % path)
    return data, 1.0 / float(dt[0])


def _fit_dominant_peak(spectrum):
    """Window the strongest non-DC bin and fit; None when nothing credible."""
    k = 1 + int(np.argmax(spectrum.psd[1:]))
    res = spectrum.resolution
    lo = max(spectrum.frequencies[k] - 10.0 * res, spectrum.frequencies[1])
    hi = min(spectrum.frequencies[k] + 10.0 * res, spectrum.frequencies[-1])
    try:
        return fit_lorentzian(spectrum, (lo, hi))
    except (NoPeakError, FitConvergenceError):
        return None


def _cmd_analyze(args, cfg, out):
    data, rate = _load_trajectory_csv(args.input)
    names = [c.strip() for c in args.components.split(",") if c.strip()]
    for name in names:
        if name not in TRACE_COMPONENTS:
            raise ConfigError("unknown component %r (choose from %s)"
                              % (name, ", ".join(TRACE_COMPONENTS)))
    spectra, fits = {}, {}
    for name in names:
        sp = power_spectrum(data[:, _CSV_COLUMNS[name]], rate)
        sp.to_csv(os.path.join(out, "spectrum_%s.csv" % name))
        spectra[name] = sp
        fits[name] = _fit_dominant_peak(sp)
    plotting.plot_spectra(spectra, os.path.join(out, "spectra.png"), fits)

    doc = {"input": args.input, "sample_rate_hz": rate, "components": {}}
    for name in names:
        fit = fits[name]
        doc["components"][name] = None if fit is None else {
            "f0_hz": fit.f0, "width_hz": fit.width,
            "amplitude": fit.amplitude, "residual": fit.residual,
            "window_hz": list(fit.window),
        }
    if args.ringdown is not None:
        if args.ringdown not in TRACE_COMPONENTS:
            raise ConfigError("unknown component %r for --ringdown"
                              % args.ringdown)
        rd = fit_ringdown(data[:, _CSV_COLUMNS[args.ringdown]], rate)
        doc["ringdown"] = {"component": args.ringdown, "tau_s": rd.tau,
                           "f_hz": rd.f, "q": rd.q, "residual": rd.residual}
    _write_json(os.path.join(out, "analysis.json"), doc)
    _say(args, "wrote spectra for %s to %s" % (",".join(names), out))
    return 0


# scaling law per sweep axis when the config does not name one
_AXIS_LAWS = {"omega_drive": "inverse", "i_trap": "linear", "b0": "sqrt"}


def _cmd_sweep(args, cfg, out):
    plan = cfg.sweep_plan()
    if plan is None:
        raise ConfigError("config has no sweep section")
    result = sweepmod.run_sweep(plan, workers=args.workers)
    result.to_csv(os.path.join(out, "sweep.csv"))
    law = cfg.sweep_law() or _AXIS_LAWS.get(plan.axis)
    fits, skipped = {}, {}
    if law is not None:
        for mode in plan.modes_of_interest:
            try:
                fits.update(sweepmod.fit_scaling(
                    result, law, p_range=cfg.sweep_fit_range(), modes=[mode]))
            except InsufficientPointsError as exc:
                skipped[mode] = str(exc)
    extra = {"skipped": skipped} if skipped else None
    sweepmod.write_fits_json(os.path.join(out, "fits.json"), fits, extra=extra)
    plotting.plot_mode_traces(
        [("", result)], os.path.join(out, "sweep.png"), fits=fits,
        logx=(law == "inverse"), logy=(law == "inverse"))
    _say(args, "wrote sweep over %s (%d points) to %s"
         % (plan.axis, len(plan.grid), out))
    return 0


def _loaded_fits(json_path, law):
    """Rehydrate fits.json entries matching the law, for plot overlays."""
    with open(json_path) as fh:
        doc = json.load(fh)
    out = {}
    for key, rec in doc.get("fits", {}).items():
        if isinstance(rec, dict) and rec.get("law") == law:
            out[key] = SimpleNamespace(**rec)
    return out


def _cmd_figure(args, cfg, out):
    fid = args.figure_id
    if fid not in sweepmod.FIGURE_IDS:
        raise ConfigError("unknown figure id %r (choose from %s)"
                          % (fid, ", ".join(sweepmod.FIGURE_IDS)))
    paths, result = sweepmod.reproduce_figure(fid, out, workers=args.workers)
    png = os.path.join(out, "figure.png")
    law = sweepmod._FIG_LAWS[fid]
    if fid == "figS4b":
        plotting.plot_offset_study(result, png)
    elif fid == "figS4a":
        res_point, res_fv = result
        plotting.plot_mode_traces(
            [(" (point)", res_point), (" (volume)", res_fv)], png,
            fits=_loaded_fits(os.path.join(out, "fits.json"), law),
            logx=True, logy=True)
    else:
        fits = _loaded_fits(os.path.join(out, "fits.json"), law) if law else None
        plotting.plot_mode_traces([("", result)], png, fits=fits,
                                  logx=(law == "inverse"),
                                  logy=(law == "inverse"))
    _say(args, "wrote %s dataset to %s" % (fid, out))
    return 0


_HANDLERS = {
    "field": _cmd_field,
    "predict": _cmd_predict,
    "stability": _cmd_stability,
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
    "sweep": _cmd_sweep,
    "figure": _cmd_figure,
}


def _invocation_arguments(args):
    extras = {}
    if args.subcommand == "figure":
        extras["figure_id"] = args.figure_id
    if args.subcommand == "analyze":
        extras["input"] = args.input
        extras["components"] = args.components
        extras["ringdown"] = args.ringdown
    return extras


def _error_record(exc, code):
    record = {"error": type(exc).__name__, "message": str(exc),
              "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        cfg = parse_config(args.config)
        out = args.out if args.out is not None else cfg.output_dir
        os.makedirs(out, exist_ok=True)
        write_resolved(os.path.join(out, "config.resolved.json"), cfg,
                       args.subcommand, _invocation_arguments(args),
                       args.seed, args.workers)
        return _HANDLERS[args.subcommand](args, cfg, out)
    except ConfigError as exc:
        return _error_record(exc, 2)
    except NumericalError as exc:
        return _error_record(exc, 3)
    except OSError as exc:
        return _error_record(exc, 4)


if __name__ == "__main__":
    sys.exit(main())
