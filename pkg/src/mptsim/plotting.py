"""Figure rendering for the CLI: every plot lands next to its data file.

All functions take already-computed objects (no recomputation here), write
a PNG, and return the path. The Agg backend is forced so rendering works
headless.
"""

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .spectral import STATUS_OK

AXIS_LABELS = {
    "omega_drive": "drive angular frequency [rad/s]",
    "i_trap": "trap current [A]",
    "b0": "bias field [T]",
    "b0_gradient": "bias field gradient [T/m]",
    "offset_force_y": "offset force [N]",
}

_LAW_CURVES = {
    "inverse": lambda c, p: c / p,
    "linear": lambda c, p: c * p,
    "sqrt": lambda c, p: c * np.sqrt(p),
}

_DPI = 150


def plot_mode_traces(results, path, fits=None, logx=False, logy=False):
    """Mode frequency versus swept parameter.

    results: list of (label_suffix, SweepResult) drawn on shared axes, so a
    two-force-model comparison overlays naturally. fits: optional mapping
    of fit key -> ScalingFit, drawn as dashed law curves.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    markers = ("o", "s", "^", "v", "D")
    for k, (suffix, res) in enumerate(results):
        for i, name in enumerate(sorted(res.traces)):
            tr = res.traces[name]
            okmask = np.array([s == STATUS_OK for s in tr.status])
            label = name + suffix
            ax.plot(res.params[okmask], tr.f0[okmask],
                    markers[i % len(markers)], ms=4,
                    mfc="none" if k else None, label=label)
    if fits:
        for key in sorted(fits):
            fit = fits[key]
            if fit is None or fit.law not in _LAW_CURVES:
                continue
            p = np.linspace(fit.p_lo, fit.p_hi, 200)
            ax.plot(p, _LAW_CURVES[fit.law](fit.coefficient, p),
                    "--", lw=0.8, color="gray")
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    axis = results[0][1].plan.axis
    ax.set_xlabel(AXIS_LABELS.get(axis, axis))
    ax.set_ylabel("mode frequency [Hz]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_offset_study(entries, path):
    """Transverse mode pair versus drive for each offset force value."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.2))
    cmap = plt.get_cmap("viridis")
    n = max(len(entries) - 1, 1)
    for i, e in enumerate(entries):
        color = cmap(i / n)
        label = "dFy = %.2e N" % e["delta_fy"]
        ax1.loglog(e["params"], e["f_x"], "o-", ms=3, lw=0.7,
                   color=color, label=label)
        ax1.loglog(e["params"], e["f_y"], "s--", ms=3, lw=0.7, color=color)
    ax1.set_xlabel(AXIS_LABELS["omega_drive"])
    ax1.set_ylabel("transverse mode frequency [Hz]")
    ax1.legend(fontsize=7)

    dfy = [e["delta_fy"] for e in entries]
    ax2.plot(dfy, [e["exponent_x"] for e in entries], "o-", label="x exponent")
    ax2.plot(dfy, [e["exponent_y"] for e in entries], "s-", label="y exponent")
    ax2.set_xlabel(AXIS_LABELS["offset_force_y"])
    ax2.set_ylabel("fitted power-law exponent")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_spectra(spectra, path, fits=None):
    """Overlaid PSDs keyed by trace name; fitted peaks marked if given."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for name in sorted(spectra):
        sp = spectra[name]
        ax.semilogy(sp.frequencies[1:], sp.psd[1:], lw=0.7, label=name)
        if fits and fits.get(name) is not None:
            ax.axvline(fits[name].f0, color="gray", lw=0.5, ls="--")
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel("power spectral density")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_trajectory(traj, path):
    """Positions and tilt angles against time."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.5, 5.6), sharex=True)
    for i, name in enumerate(("x", "y", "z")):
        ax1.plot(traj.times, traj.positions[:, i] * 1e6, lw=0.6, label=name)
    ax1.set_ylabel("position [um]")
    ax1.legend(fontsize=8, loc="upper right")
    alpha, beta, gamma = traj.euler_angles()
    for series, name in ((alpha, "alpha"), (beta, "beta"), (gamma, "gamma")):
        ax2.plot(traj.times, series * 1e3, lw=0.6, label=name)
    ax2.set_ylabel("angle [mrad]")
    ax2.set_xlabel("time [s]")
    ax2.legend(fontsize=8, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_calibration(table, path):
    """The three current-to-field conversion curves."""
    fig, axes = plt.subplots(1, 3, figsize=(9.5, 3.2))
    cols = (("B0_T", "bias field [T]"),
            ("B0p_T_per_m", "bias gradient [T/m]"),
            ("B1pp_T_per_m2", "trap curvature [T/m^2]"))
    for ax, (col, label) in zip(axes, cols):
        ax.plot(table["current_A"], table[col], "-", lw=1.0)
        ax.set_xlabel("current [A]")
        ax.set_ylabel(label)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_field_cuts(axial, radial, path):
    """Axial and radial field cuts; each argument is a dict of columns."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    ax1.plot(axial["z_m"] * 1e3, axial["trap_bz_amplitude_t"] * 1e3,
             lw=1.0, label="trap Bz amplitude")
    ax1.plot(axial["z_m"] * 1e3, axial["bias_bz_t"] * 1e3,
             lw=1.0, label="bias Bz")
    ax1.set_xlabel("z [mm]")
    ax1.set_ylabel("field [mT]")
    ax1.legend(fontsize=8)
    ax2.plot(radial["x_m"] * 1e3, radial["trap_bx_amplitude_t"] * 1e3,
             lw=1.0, label="trap Bx amplitude")
    ax2.plot(radial["x_m"] * 1e3, radial["trap_bz_amplitude_t"] * 1e3,
             lw=1.0, label="trap Bz amplitude")
    ax2.set_xlabel("x [mm] (at the cut height)")
    ax2.set_ylabel("field [mT]")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
