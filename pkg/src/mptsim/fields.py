"""Coil geometry and magnetic field evaluation.

The trap is built from circular filament loops: a small inner/outer pair on
the board carrying counter-propagating AC currents, and a large multi-turn
coil pair above and below providing the static bias field and its gradient.
This module owns the geometry types, the field/Jacobian evaluation entry
points (backed by the compiled kernels in `loops`), axial finite-difference
derivatives along the z cut line, and the current calibration tables.

Sign conventions: all loops are coaxial with z; positive current circulates
in the +phi sense, producing +z field above the loop center. Units are SI
throughout (meters, amperes, tesla).
"""

from dataclasses import dataclass, field as dcfield
import math

import numpy as np

from .constants import MU0
from .errors import DerivativeConvergenceError, SingularPointError
from .loops import eval_loops, eval_loops_batch, filament_distance

# default board loop radii and bias coil geometry
DEFAULT_R_INNER = 0.7e-3
DEFAULT_R_OUTER = 1.4e-3
DEFAULT_R_HHC = 10.0e-3
DEFAULT_N_HHC = 835
DEFAULT_XI = 2.2

# bias-current conventions used by the calibration tables: the field table
# holds the top/bottom difference fixed, the gradient table holds the bottom
# current fixed
CAL_BOTTOM_OFFSET_A = 0.040
CAL_BOTTOM_FIXED_A = 0.100

# default step for axial finite differences; the trap length scale is the
# 0.7 mm loop radius, so this sits well inside the smooth region
DEFAULT_FD_STEP = 1.0e-5

_SINGULAR_DISTANCE = 1.0e-9


@dataclass(frozen=True)
class LoopGeometry:
    """One circular filament loop: radius, plane height, turn count."""
    radius: float
    axial_offset: float = 0.0
    turns: float = 1.0

    def __post_init__(self):
        if not (self.radius > 0.0):
            raise ValueError("LoopGeometry.radius must be > 0")
        if not (self.turns >= 1.0):
            raise ValueError("LoopGeometry.turns must be >= 1")
        if not math.isfinite(self.axial_offset):
            raise ValueError("LoopGeometry.axial_offset must be finite")


def _default_inner():
    return LoopGeometry(DEFAULT_R_INNER)


def _default_outer():
    return LoopGeometry(DEFAULT_R_OUTER)


def _default_top():
    return LoopGeometry(DEFAULT_R_HHC, +0.5 * DEFAULT_R_HHC, DEFAULT_N_HHC)


def _default_bottom():
    return LoopGeometry(DEFAULT_R_HHC, -0.5 * DEFAULT_R_HHC, DEFAULT_N_HHC)


@dataclass(frozen=True)
class TrapGeometry:
    """The four field sources: board loop pair plus bias coil pair.

    Defaults give the inner loop at 0.7 mm, the outer at twice that, and
    835-turn bias coils of 10 mm radius at the ideal spacing (separation
    equal to the coil radius). The bias coil heights are configurable since
    the real stack height is a build detail, not a constant.
    """
    inner_loop: LoopGeometry = dcfield(default_factory=_default_inner)
    outer_loop: LoopGeometry = dcfield(default_factory=_default_outer)
    top_coil: LoopGeometry = dcfield(default_factory=_default_top)
    bottom_coil: LoopGeometry = dcfield(default_factory=_default_bottom)

    def __post_init__(self):
        if not (self.outer_loop.radius > self.inner_loop.radius):
            raise ValueError(
                "TrapGeometry.outer_loop.radius must exceed inner_loop.radius")
        if not (self.top_coil.axial_offset > 0.0 > self.bottom_coil.axial_offset):
            raise ValueError(
                "TrapGeometry coil offsets must satisfy top > 0 > bottom")


@dataclass(frozen=True)
class DriveParams:
    """AC drive: amplitude, loop current ratio, angular frequency, phase."""
    i_trap: float
    omega_drive: float
    xi: float = DEFAULT_XI
    phase: float = 0.0

    def __post_init__(self):
        if not (self.i_trap >= 0.0):
            raise ValueError("DriveParams.i_trap must be >= 0")
        if not (self.omega_drive > 0.0):
            raise ValueError("DriveParams.omega_drive must be > 0")
        if not (self.xi > 0.0):
            raise ValueError("DriveParams.xi must be > 0")


@dataclass(frozen=True)
class BiasParams:
    """DC currents in the top and bottom bias coils."""
    i_top: float
    i_bottom: float

    def __post_init__(self):
        if not (math.isfinite(self.i_top) and math.isfinite(self.i_bottom)):
            raise ValueError("BiasParams currents must be finite")


@dataclass(frozen=True)
class FieldSample:
    """Field vector at a point, optionally with the spatial Jacobian dB_i/dx_j."""
    b: np.ndarray
    jacobian: np.ndarray | None = None


def loop_arrays(loops, currents):
    """Pack (LoopGeometry, current) pairs into kernel-ready arrays.

    Returns (radii, axial offsets, effective turn-currents)."""
    radii = np.array([lp.radius for lp in loops], dtype=float)
    zoffs = np.array([lp.axial_offset for lp in loops], dtype=float)
    nis = np.array([lp.turns * i for lp, i in zip(loops, currents)], dtype=float)
    return radii, zoffs, nis


def trap_arrays(geom: TrapGeometry, drive: DriveParams):
    """Board loop pair at the drive amplitude (outer loop counter-driven)."""
    return loop_arrays(
        (geom.inner_loop, geom.outer_loop),
        (drive.i_trap, -drive.xi * drive.i_trap))


def bias_arrays(geom: TrapGeometry, bias: BiasParams):
    """Bias coil pair at the DC currents."""
    return loop_arrays(
        (geom.top_coil, geom.bottom_coil),
        (bias.i_top, bias.i_bottom))


def _eval_sample(radii, zoffs, nis, point, jacobian, scale=1.0):
    point = np.asarray(point, dtype=float).reshape(3)
    if filament_distance(radii, zoffs, point[None, :])[0] < _SINGULAR_DISTANCE:
        raise SingularPointError(
            "field requested within %.1e m of a filament" % _SINGULAR_DISTANCE)
    out = eval_loops(radii, zoffs, nis, point[0], point[1], point[2])
    b = scale * np.array(out[:3])
    if not jacobian:
        return FieldSample(b=b)
    j = scale * np.array([[out[3], out[4], out[5]],
                          [out[4], out[6], out[7]],
                          [out[5], out[7], out[8]]])
    return FieldSample(b=b, jacobian=j)


def loop_field_on_axis(loop: LoopGeometry, current, z):
    """Closed-form on-axis Bz of one loop; z may be scalar or array."""
    zeta = np.asarray(z, dtype=float) - loop.axial_offset
    r2 = loop.radius * loop.radius
    bz = MU0 * loop.turns * current * r2 / (2.0 * (r2 + zeta * zeta) ** 1.5)
    return bz if bz.ndim else float(bz)


def loop_field(loop: LoopGeometry, current, point, jacobian=True) -> FieldSample:
    """Full off-axis field of one loop at a single point."""
    radii, zoffs, nis = loop_arrays((loop,), (current,))
    return _eval_sample(radii, zoffs, nis, point, jacobian)


def trap_field(geom: TrapGeometry, drive: DriveParams, point, t, jacobian=True) -> FieldSample:
    """Instantaneous AC trap field: amplitude pattern times cos(omega t + phase)."""
    radii, zoffs, nis = trap_arrays(geom, drive)
    scale = math.cos(drive.omega_drive * t + drive.phase)
    return _eval_sample(radii, zoffs, nis, point, jacobian, scale=scale)


def trap_field_amplitude(geom: TrapGeometry, drive: DriveParams, point, jacobian=True) -> FieldSample:
    """Envelope of the AC trap field (the cos factor at its crest)."""
    radii, zoffs, nis = trap_arrays(geom, drive)
    return _eval_sample(radii, zoffs, nis, point, jacobian)


def bias_field(geom: TrapGeometry, bias: BiasParams, point, jacobian=True) -> FieldSample:
    """Static field of the bias coil pair."""
    radii, zoffs, nis = bias_arrays(geom, bias)
    return _eval_sample(radii, zoffs, nis, point, jacobian)


def field_map(radii, zoffs, nis, pts):
    """Batch field evaluation at (n, 3) points; returns B (n, 3), J (n, 3, 3)."""
    pts = np.ascontiguousarray(pts, dtype=float)
    b = np.empty((pts.shape[0], 3))
    j = np.empty((pts.shape[0], 3, 3))
    eval_loops_batch(radii, zoffs, nis, pts, b, j)
    return b, j


# central difference stencils for d^n/dz^n, nodes in units of the step
_STENCILS = {
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}


def axial_derivatives(field_fn, z0, max_order=2, step=DEFAULT_FD_STEP):
    """Axial derivatives d^n Bz/dz^n, n = 1..max_order, on the x=y=0 cut line.

    `field_fn` maps a 3-vector point to a FieldSample. Central stencils at
    the requested step; each value is paired with a step-halving error
    estimate (the change when recomputed at step/2). Raises when the
    halving disagreement at max_order exceeds 1%.
    """
    if not (1 <= max_order <= 4):
        raise ValueError("max_order must be in 1..4")
    if not (step > 0.0):
        raise ValueError("step must be > 0")
    # nodes at multiples of step/2 cover both the full- and half-step stencils
    h = 0.5 * step
    bz = {}
    for k in range(-4, 5):
        sample = field_fn(np.array([0.0, 0.0, z0 + k * h]))
        bz[k] = float(sample.b[2])
    results = []
    for order in range(1, max_order + 1):
        nodes, coeffs = _STENCILS[order]
        v_full = sum(c * bz[2 * k] for k, c in zip(nodes, coeffs)) / step ** order
        v_half = sum(c * bz[k] for k, c in zip(nodes, coeffs)) / h ** order
        err = abs(v_half - v_full)
        if order == max_order:
            scale = max(abs(v_half), abs(v_full))
            if scale > 0.0 and err / scale > 0.01:
                raise DerivativeConvergenceError(
                    "axial derivative order %d not converged: step-halving "
                    "changes the value by %.2g%%" % (order, 100.0 * err / scale))
        results.append((v_full, err))
    return results


def trap_curvature(geom: TrapGeometry, drive: DriveParams, z0=0.0, step=DEFAULT_FD_STEP):
    """|d2 Bz/dz2| of the trap field envelope on the axis at height z0."""
    fn = lambda p: trap_field_amplitude(geom, drive, p, jacobian=False)
    (_, _), (d2, _) = axial_derivatives(fn, z0, max_order=2, step=step)
    return abs(d2)


def curvature_per_amp(geom: TrapGeometry, xi=DEFAULT_XI, z0=0.0, step=DEFAULT_FD_STEP):
    """Trap curvature per ampere of drive current (linear in the drive)."""
    probe = DriveParams(i_trap=1.0, omega_drive=1.0, xi=xi)
    return trap_curvature(geom, probe, z0=z0, step=step)


def bias_response(geom: TrapGeometry, z0=0.0, step=DEFAULT_FD_STEP):
    """2x2 map from (i_top, i_bottom) to (B0, B0') at height z0.

    Columns are the unit-current responses of each coil; the field value is
    exact on-axis, the gradient comes from the converged stencil."""
    m = np.zeros((2, 2))
    for col, coil in enumerate((geom.top_coil, geom.bottom_coil)):
        m[0, col] = loop_field_on_axis(coil, 1.0, z0)
        fn = lambda p: loop_field(coil, 1.0, p, jacobian=False)
        (d1, _), = axial_derivatives(fn, z0, max_order=1, step=step)
        m[1, col] = d1
    return m


def bias_for(geom: TrapGeometry, b0, b0_gradient, z0=0.0) -> BiasParams:
    """Coil currents realizing a requested field and gradient at height z0."""
    m = bias_response(geom, z0=z0)
    i_top, i_bottom = np.linalg.solve(m, np.array([b0, b0_gradient]))
    return BiasParams(i_top=float(i_top), i_bottom=float(i_bottom))


def drive_for(geom: TrapGeometry, b1_curvature, omega_drive, xi=DEFAULT_XI,
              phase=0.0, z0=0.0) -> DriveParams:
    """Drive current realizing a requested field curvature at height z0."""
    c1 = curvature_per_amp(geom, xi=xi, z0=z0)
    return DriveParams(i_trap=b1_curvature / c1, omega_drive=omega_drive,
                       xi=xi, phase=phase)


CALIBRATION_HEADER = "current_A,B0_T,B0p_T_per_m,B1pp_T_per_m2"


def calibration_tables(geom: TrapGeometry, current_grid, xi=DEFAULT_XI):
    """Current-to-field conversion curves, columns keyed as in the CSV header.

    Three conventions share the current axis: the field column drives the
    top coil at I with the bottom coil trailing by a fixed 0.040 A, the
    gradient column holds the bottom coil at 0.100 A, and the curvature
    column drives the board pair at I with ratio xi. All three are straight
    lines in I by linearity of the sources.
    """
    grid = np.asarray(current_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0.0):
        raise ValueError("current grid must be strictly increasing, length >= 2")
    m = bias_response(geom)
    c1 = curvature_per_amp(geom, xi=xi)
    b0 = m[0, 0] * grid + m[0, 1] * (grid - CAL_BOTTOM_OFFSET_A)
    b0p = m[1, 0] * grid + m[1, 1] * CAL_BOTTOM_FIXED_A
    b1pp = c1 * grid
    return {
        "current_A": grid,
        "B0_T": b0,
        "B0p_T_per_m": b0p,
        "B1pp_T_per_m2": b1pp,
    }


def write_calibration_csv(path, table):
    """Write a calibration_tables result with the canonical header row."""
    cols = CALIBRATION_HEADER.split(",")
    data = np.column_stack([table[c] for c in cols])
    np.savetxt(path, data, delimiter=",", header=CALIBRATION_HEADER,
               comments="", fmt="%.12e")
