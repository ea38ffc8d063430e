"""Parameter sweep orchestration and figure-style study presets.

A sweep fixes the trap at one base configuration, varies a single axis
(drive frequency, trap current, bias field, bias gradient, or a constant
transverse offset force), runs one simulation per grid value, extracts the
requested mode frequencies from the motion spectra with scaling-aware
tracking, and fits the closed-form scaling laws. Grid points are
independent simulations, so they may run on a thread pool; assembly and
tracking are always done in grid order, which keeps the whole pipeline
deterministic.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dcfield, replace
import json
import math
import warnings

import numpy as np

from .errors import InsufficientPointsError
from .fields import (TrapGeometry, DriveParams, bias_for, bias_field,
                     trap_curvature)
from .secular import (MagnetSpec, OperatingPoint, predict,
                      equilibrium_gradient, Q_DESIGN_LIMIT)
from .dynamics import (SimConfig, RigidState, simulate, find_equilibrium_3d,
                       MAX_DT_FRACTION)
from .spectral import (power_spectrum, track_modes, ModeTrace,
                       STATUS_OK, STATUS_LOST)

SWEEP_AXES = ("omega_drive", "i_trap", "b0", "b0_gradient", "offset_force_y")
VIBRATIONAL = ("x", "y", "z")
LIBRATIONAL = ("beta", "gamma")

# scaling hints per (axis, mode family): how a mode frequency moves with the
# swept parameter, used to recenter the tracking windows
_HINTS = {
    ("omega_drive", "vib"): "inverse",
    ("i_trap", "vib"): "linear",
    ("b0", "lib"): "sqrt",
}

STATUS_ESCAPED = "escaped"


@dataclass(frozen=True)
class SweepPlan:
    """One sweep: the axis, its grid, and the complete fixed configuration."""
    axis: str
    grid: tuple
    modes_of_interest: tuple = ("x", "y", "z")
    geom: TrapGeometry = dcfield(default_factory=TrapGeometry)
    spec: MagnetSpec = dcfield(default_factory=MagnetSpec)
    i_trap: float = 0.1
    omega_drive: float = 2.0 * math.pi * 150.0
    xi: float = 2.2
    b0: float = 5.6e-3
    b0_gradient: float | None = None      # None: balance gravity exactly
    offset_force: tuple = (0.0, 0.0, 0.0)
    force_model: str = "point_dipole"
    quadrature_order: int = 4
    linear_damping: float = 0.0
    angular_damping: float = 0.0
    duration_periods: float = 200.0       # of the slowest tracked mode
    dt: float | None = None
    sample_rate: float | None = None
    displacement: float = 1.0e-6
    tilt_beta: float = 1.0e-3
    tilt_gamma: float = 0.0

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError("unknown sweep axis %r" % self.axis)
        g = np.asarray(self.grid, dtype=float)
        if g.size < 4:
            raise ValueError("sweep grid needs at least 4 points")
        d = np.diff(g)
        if not (np.all(d > 0.0) or np.all(d < 0.0)):
            raise ValueError("sweep grid must be strictly monotone")
        for m in self.modes_of_interest:
            if m not in VIBRATIONAL + LIBRATIONAL:
                raise ValueError("unknown mode %r" % m)


@dataclass
class SweepResult:
    """Per-point records plus the assembled per-mode frequency traces."""
    plan: SweepPlan
    params: np.ndarray
    q_z: np.ndarray
    escaped: np.ndarray
    equilibria: np.ndarray                # (n, 3) start-point equilibria
    resolutions: np.ndarray               # spectral bin width per point [Hz]
    traces: dict                          # mode name -> ModeTrace
    spectra: dict | None = None           # mode name -> list of Spectrum/None

    def to_csv(self, path):
        """sweep.csv: one row per (grid value, mode)."""
        with open(path, "w") as fh:
            fh.write("param,mode,f0_hz,width_hz,status,q_z,escaped\n")
            for i, p in enumerate(self.params):
                for name in sorted(self.traces):
                    tr = self.traces[name]
                    fh.write("%.12e,%s,%.12e,%.12e,%s,%.12e,%s\n" % (
                        p, name, tr.f0[i], tr.width[i], tr.status[i],
                        self.q_z[i], "true" if self.escaped[i] else "false"))


@dataclass(frozen=True)
class ScalingFit:
    """One-parameter scaling law fit plus the free-exponent diagnostic."""
    mode: str
    law: str
    coefficient: float
    p_lo: float
    p_hi: float
    r_squared: float
    n_points: int
    free_exponent: float
    free_coefficient: float
    free_r_squared: float

    def to_json_dict(self):
        return {
            "mode": self.mode, "law": self.law,
            "coefficient": self.coefficient,
            "p_lo": self.p_lo, "p_hi": self.p_hi,
            "r_squared": self.r_squared, "n_points": self.n_points,
            "free_exponent": self.free_exponent,
            "free_coefficient": self.free_coefficient,
            "free_r_squared": self.free_r_squared,
        }


def _point_config(plan: SweepPlan, value):
    """Resolve one grid value into (drive, bias, offset_force, b1pp, c1)."""
    grad = plan.b0_gradient
    if grad is None:
        grad = equilibrium_gradient(plan.spec)
    i_trap, omega, b0, offset = plan.i_trap, plan.omega_drive, plan.b0, \
        tuple(plan.offset_force)
    if plan.axis == "omega_drive":
        omega = value
    elif plan.axis == "i_trap":
        i_trap = value
    elif plan.axis == "b0":
        b0 = value
    elif plan.axis == "b0_gradient":
        grad = value
    elif plan.axis == "offset_force_y":
        offset = (0.0, value, 0.0)
    drive = DriveParams(i_trap=i_trap, omega_drive=omega, xi=plan.xi)
    bias = bias_for(plan.geom, b0, grad)
    return drive, bias, offset, b0


def _expected_modes(plan, drive, b1_curvature, b0):
    """Secular-model frequencies [Hz] for the tracked modes at one point."""
    op = OperatingPoint(omega_drive=drive.omega_drive,
                        b1_curvature=b1_curvature, b0=b0)
    pr = predict(op, plan.spec)
    two_pi = 2.0 * math.pi
    freqs = {"x": pr.omega_x / two_pi, "y": pr.omega_y / two_pi,
             "z": pr.omega_z / two_pi, "beta": pr.omega_beta / two_pi,
             "gamma": pr.omega_gamma / two_pi}
    return {m: freqs[m] for m in plan.modes_of_interest}, pr.q_z


def _excitation_groups(modes):
    """Modes that may share one simulation without contaminating each other.

    The axial mode sits at twice the transverse ones, so co-exciting them
    splits the transverse lines into mixing sidebands; librations live three
    orders of magnitude up and get their own run with pure tilt excitation.
    """
    groups = []
    xy = tuple(m for m in modes if m in ("x", "y"))
    if xy:
        groups.append(("xy", xy))
    if "z" in modes:
        groups.append(("z", ("z",)))
    lib = tuple(m for m in modes if m in LIBRATIONAL)
    if lib:
        groups.append(("lib", lib))
    return groups


def _run_point(plan: SweepPlan, value):
    """Simulate one grid value; returns the per-point record dict."""
    drive, bias, offset, b0 = _point_config(plan, value)
    r_eq = find_equilibrium_3d(plan.geom, drive, bias, plan.spec,
                               extra_force=offset)

    # expected modes from the local curvature and bias field at the
    # levitation point; this keeps the tracking windows honest when the
    # equilibrium sits away from the winding plane
    c_local = trap_curvature(plan.geom, drive, z0=r_eq[2])
    b0_local = float(np.linalg.norm(
        bias_field(plan.geom, bias, r_eq, jacobian=False).b))
    expected, q_z = _expected_modes(plan, drive, c_local, b0_local)
    f_drive = drive.omega_drive / (2.0 * math.pi)

    d = plan.displacement
    excitations = {
        "xy": (np.array([d, d, 0.0]), 0.0, 0.0),
        "z": (np.array([0.0, 0.0, d]), 0.0, 0.0),
        "lib": (np.zeros(3), plan.tilt_beta, plan.tilt_gamma),
    }

    record = {"value": value, "q_z": q_z, "expected": expected,
              "equilibrium": r_eq, "escaped": False, "spectra": {}}
    for tag, members in _excitation_groups(plan.modes_of_interest):
        f_slow = min(expected[m] for m in members)
        f_fast = max(expected[m] for m in members)
        dt = plan.dt
        if dt is None:
            dt = min(MAX_DT_FRACTION * 2.0 * math.pi / drive.omega_drive,
                     1.0 / (20.0 * f_fast))
        rate = plan.sample_rate
        if rate is None:
            rate = max(20.0 * f_fast, 4.0 * f_drive)
        cfg = SimConfig(dt=dt, duration=plan.duration_periods / f_slow,
                        linear_damping=plan.linear_damping,
                        angular_damping=plan.angular_damping,
                        offset_force=offset, force_model=plan.force_model,
                        quadrature_order=plan.quadrature_order,
                        sample_rate=rate)
        disp, tb, tg = excitations[tag]
        init = RigidState.at_rest(r_eq + disp, tilt_beta=tb, tilt_gamma=tg)
        traj = simulate(init, plan.geom, drive, bias, plan.spec, cfg,
                        raise_on_escape=False)
        if traj.status != "completed":
            record["escaped"] = True
            record["spectra"] = {}
            break
        for m in members:
            record["spectra"][m] = power_spectrum(
                traj.component(m), traj.sample_rate)
    return record


def run_sweep(plan: SweepPlan, workers=1, keep_spectra=False) -> SweepResult:
    """Run all grid points (optionally on a thread pool) and track modes.

    Escaped points are retained with their flag set and excluded from
    tracking. Points whose drive strength exceeds the design limit produce
    a warning, not an error.
    """
    grid = np.asarray(plan.grid, dtype=float)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda v: _run_point(plan, v), grid))
    else:
        records = [_run_point(plan, v) for v in grid]

    for rec in records:
        if rec["q_z"] >= Q_DESIGN_LIMIT:
            warnings.warn("drive strength q_z = %.3f at %s = %g exceeds the "
                          "%.1f design limit" % (rec["q_z"], plan.axis,
                                                 rec["value"], Q_DESIGN_LIMIT))

    # track over the completed subsequence in ascending parameter order, so
    # the outcome never depends on how the grid was stated or scheduled
    order = np.argsort(grid)
    done = [i for i in order if not records[i]["escaped"]]
    traces = {m: ModeTrace(name=m, params=grid.copy(),
                           f0=np.full(grid.size, np.nan),
                           width=np.full(grid.size, np.nan),
                           amplitude=np.full(grid.size, np.nan),
                           status=[STATUS_ESCAPED] * grid.size)
              for m in plan.modes_of_interest}
    if done:
        sub_params = grid[done]
        first = records[done[0]]
        res0 = first["spectra"][plan.modes_of_interest[0]].resolution
        hints = {m: _HINTS.get(
            (plan.axis, "vib" if m in VIBRATIONAL else "lib"), "none")
            for m in plan.modes_of_interest}
        for m in plan.modes_of_interest:
            f_exp = first["expected"][m]
            half = max(0.3 * f_exp, 4.0 * res0)
            window = (f_exp - half, f_exp + half)
            sub = track_modes([records[i]["spectra"][m] for i in done],
                              sub_params, {m: window}, {m: hints[m]})[m]
            tr = traces[m]
            for k, i in enumerate(done):
                tr.f0[i] = sub.f0[k]
                tr.width[i] = sub.width[k]
                tr.amplitude[i] = sub.amplitude[k]
                tr.status[i] = sub.status[k]

    resolutions = np.array([
        records[i]["spectra"][plan.modes_of_interest[0]].resolution
        if not records[i]["escaped"] else np.nan for i in range(grid.size)])
    result = SweepResult(
        plan=plan, params=grid.copy(),
        q_z=np.array([r["q_z"] for r in records]),
        escaped=np.array([r["escaped"] for r in records]),
        equilibria=np.array([r["equilibrium"] for r in records]),
        resolutions=resolutions,
        traces=traces,
        spectra={m: [r["spectra"].get(m) for r in records]
                 for m in plan.modes_of_interest} if keep_spectra else None)
    return result


_LAWS = {
    "inverse": lambda p: 1.0 / p,
    "linear": lambda p: p,
    "sqrt": np.sqrt,
}


def fit_scaling(result: SweepResult, law, p_range=None, modes=None):
    """Least-squares one-parameter law per mode, plus a free power law.

    Only points with successful fits inside [p_lo, p_hi] participate; fewer
    than 4 such points raises. Returns {mode: ScalingFit}.
    """
    if law not in _LAWS:
        raise ValueError("law must be one of %s" % (sorted(_LAWS),))
    g = _LAWS[law]
    if modes is None:
        modes = sorted(result.traces)
    out = {}
    for mode in modes:
        tr = result.traces[mode]
        ok = tr.ok()
        if p_range is not None:
            ok &= (tr.params >= p_range[0]) & (tr.params <= p_range[1])
        p = tr.params[ok]
        f = tr.f0[ok]
        if p.size < 4:
            raise InsufficientPointsError(
                "mode %s has %d successful points in range, need >= 4"
                % (mode, p.size))
        basis = g(p)
        c = float(np.dot(f, basis) / np.dot(basis, basis))
        ss_res = float(np.sum((f - c * basis) ** 2))
        ss_tot = float(np.sum((f - f.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
        # free-exponent diagnostic in log-log space
        lp, lf = np.log(p), np.log(f)
        e, lc = np.polyfit(lp, lf, 1)
        lf_hat = e * lp + lc
        ss_res_f = float(np.sum((lf - lf_hat) ** 2))
        ss_tot_f = float(np.sum((lf - lf.mean()) ** 2))
        r2_f = 1.0 - ss_res_f / ss_tot_f if ss_tot_f > 0.0 else 1.0
        out[mode] = ScalingFit(
            mode=mode, law=law, coefficient=c,
            p_lo=float(p.min()), p_hi=float(p.max()),
            r_squared=r2, n_points=int(p.size),
            free_exponent=float(e), free_coefficient=float(math.exp(lc)),
            free_r_squared=r2_f)
    return out


def write_fits_json(path, fits, extra=None):
    """fits.json: deterministic serialization of {mode: ScalingFit}."""
    doc = {"fits": {m: fits[m].to_json_dict() for m in sorted(fits)}}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def offset_study(delta_fy_grid, base_plan: SweepPlan, workers=1):
    """Mode splitting and scaling-slope change versus a constant y force.

    For each offset value an omega sub-sweep (the base plan's axis must be
    omega_drive) is run for the x and y modes; reports per-offset splitting
    at each drive frequency plus the inverse-law coefficient and the free
    power-law exponent per mode. The displaced magnet samples a stiffer
    region of the trap the softer the confinement gets, so with growing
    offset the frequency-versus-drive curve flattens: the fitted exponent
    rises toward zero while the transverse modes converge toward the axial
    one.
    """
    deltas = np.asarray(delta_fy_grid, dtype=float)
    if not np.any(deltas == 0.0):
        raise ValueError("offset grid must include 0")
    if base_plan.axis != "omega_drive":
        raise ValueError("offset study expects an omega_drive base plan")
    entries = []
    for dfy in deltas:
        plan = replace(base_plan, offset_force=(0.0, float(dfy), 0.0),
                       modes_of_interest=("x", "y"))
        result = run_sweep(plan, workers=workers)
        fits = fit_scaling(result, "inverse")
        fx, fy = result.traces["x"].f0, result.traces["y"].f0
        entries.append({
            "delta_fy": float(dfy),
            "params": result.params.copy(),
            "f_x": fx.copy(), "f_y": fy.copy(),
            "splitting": np.abs(fx - fy),
            "resolutions": result.resolutions.copy(),
            "slope_x": fits["x"].coefficient,
            "slope_y": fits["y"].coefficient,
            "exponent_x": fits["x"].free_exponent,
            "exponent_y": fits["y"].free_exponent,
            "result": result,
        })
    return entries


def _figure_presets():
    """Canned sweep plans for the figure-style studies.

    Operating points are rescaled from the headline experiment so the grid
    stays inside the averaged-model validity range, the bias field is raised
    where transverse modes are read out (alignment to the bias gradient's
    transverse components otherwise softens them measurably), and the
    gradient study spans the interval the trap can actually hold against
    the gravity mismatch.
    """
    two_pi = 2.0 * math.pi
    omega_grid = tuple(two_pi * f for f in (100.0, 120.0, 140.0, 160.0, 180.0, 200.0))
    return {
        "fig2a": SweepPlan(
            axis="b0_gradient",
            grid=tuple(np.linspace(58.0e-3, 74.0e-3, 9)),
            modes_of_interest=("z",),
            omega_drive=two_pi * 150.0, i_trap=0.30, b0=5.6e-3),
        "fig2b": SweepPlan(
            axis="omega_drive", grid=omega_grid,
            modes_of_interest=("x", "y", "z"),
            i_trap=0.10, b0=22.4e-3),
        "fig2c": SweepPlan(
            axis="i_trap",
            grid=tuple(np.linspace(0.10, 0.28, 7)),
            modes_of_interest=("x", "y", "z"),
            omega_drive=two_pi * 150.0, b0=22.4e-3),
        "fig2d": SweepPlan(
            axis="b0",
            grid=tuple(np.linspace(3.8e-3, 10.8e-3, 6)),
            modes_of_interest=("beta", "gamma"),
            omega_drive=two_pi * 140.0, i_trap=0.10, b0=5.6e-3,
            tilt_gamma=1.0e-3),
        "figS4a": SweepPlan(
            axis="omega_drive",
            grid=tuple(two_pi * f for f in (100.0, 140.0, 170.0, 200.0)),
            modes_of_interest=("x", "y", "z"),
            i_trap=0.10, b0=22.4e-3, quadrature_order=3),
        "figS4b": SweepPlan(
            axis="omega_drive",
            grid=tuple(two_pi * f for f in (140.0, 160.0, 180.0, 200.0, 220.0, 240.0)),
            modes_of_interest=("x", "y"),
            i_trap=0.40, b0=5.6e-3),
    }


FIGURE_IDS = ("fig2a", "fig2b", "fig2c", "fig2d", "figS4a", "figS4b")

# offset forces for the figS4b study [N]; the largest displaces the trap
# center by roughly a fifth of the inner loop radius, well into the
# anharmonic region where the drive-frequency scaling visibly flattens
FIGS4B_OFFSETS = (0.0, 1.6e-8, 3.2e-8, 6.4e-8)

_FIG_LAWS = {"fig2a": None, "fig2b": "inverse", "fig2c": "linear",
             "fig2d": "sqrt", "figS4a": "inverse", "figS4b": "inverse"}


def reproduce_figure(figure_id, out_dir, workers=1):
    """Run one preset study and write sweep.csv + fits.json into out_dir.

    Returns (paths written, result-like object). figS4a runs the same grid
    with both force models; figS4b wraps the offset study.
    """
    import os
    if figure_id not in FIGURE_IDS:
        raise ValueError("unknown figure id %r (choose from %s)" %
                         (figure_id, ", ".join(FIGURE_IDS)))
    presets = _figure_presets()
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "sweep.csv")
    json_path = os.path.join(out_dir, "fits.json")

    if figure_id == "figS4a":
        plan = presets[figure_id]
        res_point = run_sweep(plan, workers=workers)
        res_fv = run_sweep(replace(plan, force_model="finite_volume"),
                           workers=workers)
        with open(csv_path, "w") as fh:
            fh.write("param,mode,f0_hz,width_hz,status,q_z,escaped,force_model\n")
            for tag, res in (("point_dipole", res_point),
                             ("finite_volume", res_fv)):
                for i, p in enumerate(res.params):
                    for name in sorted(res.traces):
                        tr = res.traces[name]
                        fh.write("%.12e,%s,%.12e,%.12e,%s,%.12e,%s,%s\n" % (
                            p, name, tr.f0[i], tr.width[i], tr.status[i],
                            res.q_z[i],
                            "true" if res.escaped[i] else "false", tag))
        fits = {}
        for tag, res in (("point_dipole", res_point),
                         ("finite_volume", res_fv)):
            for m, fit in fit_scaling(res, "inverse").items():
                fits["%s_%s" % (m, tag)] = fit
        write_fits_json(json_path, fits, extra={"figure": figure_id})
        return [csv_path, json_path], (res_point, res_fv)

    if figure_id == "figS4b":
        entries = offset_study(FIGS4B_OFFSETS, presets[figure_id],
                               workers=workers)
        with open(csv_path, "w") as fh:
            fh.write("delta_fy_n,param,f_x_hz,f_y_hz,splitting_hz\n")
            for e in entries:
                for i in range(e["params"].size):
                    fh.write("%.12e,%.12e,%.12e,%.12e,%.12e\n" % (
                        e["delta_fy"], e["params"][i], e["f_x"][i],
                        e["f_y"][i], e["splitting"][i]))
        doc = {"figure": figure_id,
               "slopes": {"%.3e" % e["delta_fy"]:
                          {"x": e["slope_x"], "y": e["slope_y"],
                           "exponent_x": e["exponent_x"],
                           "exponent_y": e["exponent_y"]}
                          for e in entries}}
        with open(json_path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return [csv_path, json_path], entries

    plan = presets[figure_id]
    result = run_sweep(plan, workers=workers)
    result.to_csv(csv_path)
    law = _FIG_LAWS[figure_id]
    if law is None:
        # qualitative study: record the free-exponent diagnostics only
        fits = fit_scaling(result, "linear")
    else:
        fits = fit_scaling(result, law)
    write_fits_json(json_path, fits, extra={"figure": figure_id})
    return [csv_path, json_path], result
