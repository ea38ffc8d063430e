"""Rigid-body time-domain simulation of the levitated magnet.

The magnet is a rigid body with a body-fixed dipole moment along its +z
axis. Translational forces come from the field Jacobian acting on the
moment (optionally averaged over the cube volume by Gauss-Legendre
quadrature), plus gravity, an optional constant offset force, and
phenomenological linear damping. Rotation feels the torque moment x field
with an isotropic inertia tensor, so the angular equation integrates
directly in the lab frame. Integration is fixed-step RK4 with quaternion
renormalization; the stepping loop is compiled (see _integrate) and runs
at a few million steps per second.
"""

from dataclasses import dataclass, field as dcfield
import math

import numpy as np
from numba import njit
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from .constants import MU0, G_EARTH
from .errors import EscapeError, NonFiniteStateError, NumericalError
from .fields import (TrapGeometry, DriveParams, BiasParams, FieldSample,
                     trap_arrays, bias_arrays)
from .loops import eval_loops
from .secular import MagnetSpec, equilibrium_gradient  # noqa: F401 (re-export)

# hard ceiling on the step relative to the drive period
MAX_DT_FRACTION = 0.01

_STATUS_COMPLETED = 0
_STATUS_ESCAPED = 1
_STATUS_NONFINITE = 2


@dataclass
class RigidState:
    """Translational + rotational state; quaternion is body-to-lab, scalar first."""
    position: np.ndarray
    velocity: np.ndarray
    orientation: np.ndarray
    angular_velocity: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3).copy()
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3).copy()
        self.orientation = np.asarray(self.orientation, dtype=float).reshape(4).copy()
        self.angular_velocity = np.asarray(
            self.angular_velocity, dtype=float).reshape(3).copy()
        n = np.linalg.norm(self.orientation)
        if not np.isfinite(n) or abs(n - 1.0) > 1.0e-9:
            raise ValueError("RigidState.orientation must be a unit quaternion")

    @classmethod
    def at_rest(cls, position, tilt_beta=0.0, tilt_gamma=0.0):
        """State at rest at `position`, dipole along +z tilted by the small
        angles tilt_beta (about y) then tilt_gamma (about x, z-y-x order)."""
        hb, hg = 0.5 * tilt_beta, 0.5 * tilt_gamma
        cb, sb = math.cos(hb), math.sin(hb)
        cg, sg = math.cos(hg), math.sin(hg)
        q = np.array([cb * cg, cb * sg, cg * sb, -sb * sg])
        return cls(position=np.asarray(position, dtype=float),
                   velocity=np.zeros(3), orientation=q,
                   angular_velocity=np.zeros(3))

    def as_vector(self):
        return np.concatenate([self.position, self.velocity,
                               self.orientation, self.angular_velocity])

    @classmethod
    def from_vector(cls, y):
        y = np.asarray(y, dtype=float).reshape(13)
        return cls(position=y[0:3], velocity=y[3:6],
                   orientation=y[6:10], angular_velocity=y[10:13])


def quat_to_matrix(q):
    """Body-to-lab rotation matrix of a scalar-first unit quaternion."""
    w, x, y, z = q
    return np.array([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])


def euler_zyx(q):
    """Euler angles (alpha, beta, gamma) of the z-y-x decomposition.

    alpha is the rotation about z (spin of the dipole axis pattern), beta
    the tilt about y, gamma the tilt about x."""
    r = quat_to_matrix(q)
    s = min(1.0, max(-1.0, r[2, 0]))
    return (math.atan2(r[1, 0], r[0, 0]), -math.asin(s),
            math.atan2(r[2, 1], r[2, 2]))


@dataclass(frozen=True)
class SimConfig:
    """Integration and force-model settings for one run."""
    dt: float
    duration: float
    linear_damping: float = 0.0
    angular_damping: float = 0.0
    offset_force: tuple = (0.0, 0.0, 0.0)
    gravity_on: bool = True
    force_model: str = "point_dipole"
    quadrature_order: int = 4
    small_angle_mode: bool = False
    escape_radius: float | None = None
    sample_rate: float | None = None

    def __post_init__(self):
        if not (self.dt > 0.0):
            raise ValueError("SimConfig.dt must be > 0")
        if not (self.duration > 0.0):
            raise ValueError("SimConfig.duration must be > 0")
        if self.force_model not in ("point_dipole", "finite_volume"):
            raise ValueError("SimConfig.force_model must be point_dipole or finite_volume")
        if not (2 <= self.quadrature_order <= 8):
            raise ValueError("SimConfig.quadrature_order must be in 2..8")
        if self.linear_damping < 0.0 or self.angular_damping < 0.0:
            raise ValueError("SimConfig damping rates must be >= 0")
        if len(self.offset_force) != 3:
            raise ValueError("SimConfig.offset_force must have 3 components")
        if self.escape_radius is not None and not (self.escape_radius > 0.0):
            raise ValueError("SimConfig.escape_radius must be > 0")
        if self.sample_rate is not None and not (self.sample_rate > 0.0):
            raise ValueError("SimConfig.sample_rate must be > 0")


@dataclass
class Trajectory:
    """Uniformly sampled rigid-body history of one run."""
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    orientations: np.ndarray
    angular_velocities: np.ndarray
    sample_rate: float
    status: str = "completed"
    end_time: float = 0.0

    def __len__(self):
        return self.times.shape[0]

    def state_at(self, i) -> RigidState:
        return RigidState(position=self.positions[i], velocity=self.velocities[i],
                          orientation=self.orientations[i],
                          angular_velocity=self.angular_velocities[i])

    def euler_angles(self):
        """(alpha, beta, gamma) arrays in the z-y-x convention."""
        n = len(self)
        out = np.empty((n, 3))
        for i in range(n):
            out[i] = euler_zyx(self.orientations[i])
        return out[:, 0], out[:, 1], out[:, 2]

    def component(self, name):
        """One named scalar series: x,y,z, vx,vy,vz, alpha,beta,gamma."""
        cols = {"x": (self.positions, 0), "y": (self.positions, 1),
                "z": (self.positions, 2), "vx": (self.velocities, 0),
                "vy": (self.velocities, 1), "vz": (self.velocities, 2)}
        if name in cols:
            arr, i = cols[name]
            return arr[:, i].copy()
        angles = {"alpha": 0, "beta": 1, "gamma": 2}
        if name in angles:
            return self.euler_angles()[angles[name]]
        raise KeyError("unknown trajectory component %r" % name)

    def to_csv(self, path):
        alpha, beta, gamma = self.euler_angles()
        data = np.column_stack([self.times, self.positions, self.velocities,
                                alpha, beta, gamma])
        np.savetxt(path, data, delimiter=",", comments="", fmt="%.12e",
                   header="t_s,x_m,y_m,z_m,vx,vy,vz,alpha_rad,beta_rad,gamma_rad")


def dipole_force(moment, jacobian):
    """Force on a point dipole, F_i = sum_j mu_j dB_j/dx_i."""
    return np.asarray(jacobian, dtype=float).T @ np.asarray(moment, dtype=float)


def dipole_torque(moment, b):
    """Torque on a dipole, moment x field."""
    return np.cross(np.asarray(moment, dtype=float), np.asarray(b, dtype=float))


def _cube_quadrature(edge, order):
    """Body-frame sample offsets and normalized weights for the cube volume."""
    nodes, wts = leggauss(order)
    half = 0.5 * edge
    off = np.array([(half * a, half * b, half * c)
                    for a in nodes for b in nodes for c in nodes])
    w = np.array([wa * wb * wc for wa in wts for wb in wts for wc in wts])
    return off, w / w.sum()


def volume_averaged_force(spec: MagnetSpec, state: RigidState, field_fn, t,
                          order=4):
    """Dipole force density averaged over the oriented cube volume.

    `field_fn(point, t)` must return a FieldSample with a Jacobian. Exact
    for fields whose Jacobian is spatially constant (then it reduces to the
    point-dipole force at the center).
    """
    rot = quat_to_matrix(state.orientation)
    mu = spec.moment * rot[:, 2]
    off, w = _cube_quadrature(spec.edge, order)
    force = np.zeros(3)
    for o, wk in zip(off, w):
        sample = field_fn(state.position + rot @ o, t)
        force += wk * dipole_force(mu, sample.jacobian)
    return force


@njit(cache=True, nogil=True)
def _accel(y, t, tr_r, tr_z, tr_ni, bi_r, bi_z, bi_ni,
           mass, inertia, mu_mag, omega_drive, phase,
           lin_damp, ang_damp, grav, offx, offy, offz,
           finite_volume, quad_off, quad_w, small_angle, dy):
    """Time derivative of the 13-component state, written into dy."""
    px, py, pz = y[0], y[1], y[2]
    qw, qx, qy, qz = y[6], y[7], y[8], y[9]
    wx, wy, wz = y[10], y[11], y[12]

    # body-to-lab rotation (columns) from the quaternion
    r00 = 1.0 - 2.0 * (qy * qy + qz * qz)
    r01 = 2.0 * (qx * qy - qw * qz)
    r02 = 2.0 * (qx * qz + qw * qy)
    r10 = 2.0 * (qx * qy + qw * qz)
    r11 = 1.0 - 2.0 * (qx * qx + qz * qz)
    r12 = 2.0 * (qy * qz - qw * qx)
    r20 = 2.0 * (qx * qz - qw * qy)
    r21 = 2.0 * (qy * qz + qw * qx)
    r22 = 1.0 - 2.0 * (qx * qx + qy * qy)

    mux = mu_mag * r02
    muy = mu_mag * r12
    muz = mu_mag * r22

    c = math.cos(omega_drive * t + phase)

    # field at the center (for the torque, and the point-dipole force)
    bbx, bby, bbz, bjxx, bjxy, bjxz, bjyy, bjyz, bjzz = eval_loops(
        bi_r, bi_z, bi_ni, px, py, pz)
    tbx, tby, tbz, tjxx, tjxy, tjxz, tjyy, tjyz, tjzz = eval_loops(
        tr_r, tr_z, tr_ni, px, py, pz)
    bx = bbx + c * tbx
    by = bby + c * tby
    bz = bbz + c * tbz

    if finite_volume == 0:
        jxx = bjxx + c * tjxx
        jxy = bjxy + c * tjxy
        jxz = bjxz + c * tjxz
        jyy = bjyy + c * tjyy
        jyz = bjyz + c * tjyz
        jzz = bjzz + c * tjzz
        fx = jxx * mux + jxy * muy + jxz * muz
        fy = jxy * mux + jyy * muy + jyz * muz
        fz = jxz * mux + jyz * muy + jzz * muz
    else:
        fx = 0.0
        fy = 0.0
        fz = 0.0
        for k in range(quad_w.shape[0]):
            ox = quad_off[k, 0]
            oy = quad_off[k, 1]
            oz = quad_off[k, 2]
            sx = px + r00 * ox + r01 * oy + r02 * oz
            sy = py + r10 * ox + r11 * oy + r12 * oz
            sz = pz + r20 * ox + r21 * oy + r22 * oz
            b0, b1, b2, kjxx, kjxy, kjxz, kjyy, kjyz, kjzz = eval_loops(
                bi_r, bi_z, bi_ni, sx, sy, sz)
            t0, t1, t2, ljxx, ljxy, ljxz, ljyy, ljyz, ljzz = eval_loops(
                tr_r, tr_z, tr_ni, sx, sy, sz)
            jxx = kjxx + c * ljxx
            jxy = kjxy + c * ljxy
            jxz = kjxz + c * ljxz
            jyy = kjyy + c * ljyy
            jyz = kjyz + c * ljyz
            jzz = kjzz + c * ljzz
            w = quad_w[k]
            fx += w * (jxx * mux + jxy * muy + jxz * muz)
            fy += w * (jxy * mux + jyy * muy + jyz * muz)
            fz += w * (jxz * mux + jyz * muy + jzz * muz)

    # torque uses the center field
    tqx = muy * bz - muz * by
    tqy = muz * bx - mux * bz
    tqz = mux * by - muy * bx

    dy[0] = y[3]
    dy[1] = y[4]
    dy[2] = y[5]
    dy[3] = (fx + offx) / mass - lin_damp * y[3]
    dy[4] = (fy + offy) / mass - lin_damp * y[4]
    dy[5] = (fz + offz) / mass - lin_damp * y[5] - grav
    dy[6] = -0.5 * (wx * qx + wy * qy + wz * qz)
    dy[7] = 0.5 * (wx * qw + wy * qz - wz * qy)
    dy[8] = 0.5 * (wy * qw + wz * qx - wx * qz)
    dy[9] = 0.5 * (wz * qw + wx * qy - wy * qx)
    dy[10] = tqx / inertia - ang_damp * wx
    dy[11] = tqy / inertia - ang_damp * wy
    dy[12] = tqz / inertia - ang_damp * wz
    if small_angle == 1:
        dy[12] = 0.0


@njit(cache=True, nogil=True)
def _integrate(y0, n_steps, dt, stride, tr_r, tr_z, tr_ni, bi_r, bi_z, bi_ni,
               mass, inertia, mu_mag, omega_drive, phase,
               lin_damp, ang_damp, grav, offx, offy, offz,
               finite_volume, quad_off, quad_w, small_angle,
               escape_radius, samples):
    """Fixed-step RK4 loop. Returns (status, samples filled, event time)."""
    y = y0.copy()
    k1 = np.empty(13)
    k2 = np.empty(13)
    k3 = np.empty(13)
    k4 = np.empty(13)
    yt = np.empty(13)

    samples[0, 0] = 0.0
    samples[0, 1:] = y
    filled = 1
    esc2 = escape_radius * escape_radius

    for n in range(n_steps):
        t = n * dt
        _accel(y, t, tr_r, tr_z, tr_ni, bi_r, bi_z, bi_ni, mass, inertia,
               mu_mag, omega_drive, phase, lin_damp, ang_damp, grav,
               offx, offy, offz, finite_volume, quad_off, quad_w,
               small_angle, k1)
        for i in range(13):
            yt[i] = y[i] + 0.5 * dt * k1[i]
        _accel(yt, t + 0.5 * dt, tr_r, tr_z, tr_ni, bi_r, bi_z, bi_ni, mass,
               inertia, mu_mag, omega_drive, phase, lin_damp, ang_damp, grav,
               offx, offy, offz, finite_volume, quad_off, quad_w,
               small_angle, k2)
        for i in range(13):
            yt[i] = y[i] + 0.5 * dt * k2[i]
        _accel(yt, t + 0.5 * dt, tr_r, tr_z, tr_ni, bi_r, bi_z, bi_ni, mass,
               inertia, mu_mag, omega_drive, phase, lin_damp, ang_damp, grav,
               offx, offy, offz, finite_volume, quad_off, quad_w,
               small_angle, k3)
        for i in range(13):
            yt[i] = y[i] + dt * k3[i]
        _accel(yt, t + dt, tr_r, tr_z, tr_ni, bi_r, bi_z, bi_ni, mass,
               inertia, mu_mag, omega_drive, phase, lin_damp, ang_damp, grav,
               offx, offy, offz, finite_volume, quad_off, quad_w,
               small_angle, k4)
        for i in range(13):
            y[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

        qn = math.sqrt(y[6] * y[6] + y[7] * y[7] + y[8] * y[8] + y[9] * y[9])
        y[6] /= qn
        y[7] /= qn
        y[8] /= qn
        y[9] /= qn

        t_next = (n + 1) * dt
        ok = True
        for i in range(13):
            if not math.isfinite(y[i]):
                ok = False
        if not ok:
            return _STATUS_NONFINITE, filled, t_next
        r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2]
        if r2 > esc2:
            return _STATUS_ESCAPED, filled, t_next

        if (n + 1) % stride == 0:
            samples[filled, 0] = t_next
            samples[filled, 1:] = y
            filled += 1

    return _STATUS_COMPLETED, filled, n_steps * dt


def _kernel_args(geom, drive, bias, spec, cfg):
    tr_r, tr_z, tr_ni = trap_arrays(geom, drive)
    bi_r, bi_z, bi_ni = bias_arrays(geom, bias)
    if cfg.force_model == "finite_volume":
        quad_off, quad_w = _cube_quadrature(spec.edge, cfg.quadrature_order)
        fv = 1
    else:
        quad_off, quad_w = np.zeros((1, 3)), np.ones(1)
        fv = 0
    grav = G_EARTH if cfg.gravity_on else 0.0
    offx, offy, offz = (float(v) for v in cfg.offset_force)
    esc = cfg.escape_radius if cfg.escape_radius is not None \
        else 5.0 * geom.outer_loop.radius
    return (tr_r, tr_z, tr_ni, bi_r, bi_z, bi_ni,
            spec.mass, spec.moment_of_inertia, spec.moment,
            drive.omega_drive, drive.phase,
            cfg.linear_damping, cfg.angular_damping, grav, offx, offy, offz,
            fv, quad_off, quad_w, 1 if cfg.small_angle_mode else 0, esc)


def _check_dt(cfg, drive):
    limit = MAX_DT_FRACTION * 2.0 * math.pi / drive.omega_drive
    if cfg.dt > limit * (1.0 + 1.0e-12):
        raise ValueError(
            "SimConfig.dt = %g exceeds the drive-resolution limit %g "
            "(one hundredth of the drive period)" % (cfg.dt, limit))


def step(state: RigidState, geom: TrapGeometry, drive: DriveParams,
         bias: BiasParams, spec: MagnetSpec, cfg: SimConfig, t=0.0) -> RigidState:
    """One RK4 update of length cfg.dt starting at time t."""
    _check_dt(cfg, drive)
    args = _kernel_args(geom, drive, bias, spec, cfg)
    samples = np.empty((2, 14))
    y0 = state.as_vector()
    # shift the drive phase so the kernel's internal clock starts at t
    phase = args[10] + drive.omega_drive * t
    status, filled, t_end = _integrate(
        y0, 1, cfg.dt, 1, *args[:10], phase, *args[11:], samples)
    if status == _STATUS_NONFINITE:
        raise NonFiniteStateError("state became non-finite at t = %g s" % (t + t_end),
                                  time=t + t_end)
    if status == _STATUS_ESCAPED:
        raise EscapeError("magnet left the trap region at t = %g s" % (t + t_end),
                          escape_time=t + t_end)
    return RigidState.from_vector(samples[1, 1:])


def simulate(init: RigidState, geom: TrapGeometry, drive: DriveParams,
             bias: BiasParams, spec: MagnetSpec, cfg: SimConfig,
             raise_on_escape=True) -> Trajectory:
    """Integrate a full run; deterministic for identical inputs.

    Samples are recorded every ceil(1/(dt*sample_rate)) steps. On escape
    either raises EscapeError (with the partial trajectory attached) or,
    with raise_on_escape=False, returns the partial trajectory with status
    "escaped".
    """
    _check_dt(cfg, drive)
    n_steps = int(round(cfg.duration / cfg.dt))
    if n_steps < 1:
        raise ValueError("duration shorter than one step")
    if cfg.sample_rate is None:
        stride = 1
    else:
        stride = max(1, int(round(1.0 / (cfg.dt * cfg.sample_rate))))
    n_samp = n_steps // stride + 1
    samples = np.empty((n_samp, 14))
    args = _kernel_args(geom, drive, bias, spec, cfg)
    status, filled, t_end = _integrate(
        init.as_vector(), n_steps, cfg.dt, stride, *args, samples)

    samples = samples[:filled]
    traj = Trajectory(
        times=samples[:, 0].copy(),
        positions=samples[:, 1:4].copy(),
        velocities=samples[:, 4:7].copy(),
        orientations=samples[:, 7:11].copy(),
        angular_velocities=samples[:, 11:14].copy(),
        sample_rate=1.0 / (cfg.dt * stride),
        status="completed" if status == _STATUS_COMPLETED else
               ("escaped" if status == _STATUS_ESCAPED else "nonfinite"),
        end_time=t_end)

    if status == _STATUS_NONFINITE:
        raise NonFiniteStateError("state became non-finite at t = %g s" % t_end,
                                  time=t_end)
    if status == _STATUS_ESCAPED and raise_on_escape:
        raise EscapeError("magnet left the trap region at t = %g s" % t_end,
                          escape_time=t_end, trajectory=traj)
    return traj


def model_field(geom, drive, bias, point, t, jacobian=True) -> FieldSample:
    """Instantaneous total field (bias + AC trap) used by the simulation."""
    from .fields import trap_field, bias_field
    ts = trap_field(geom, drive, point, t, jacobian=jacobian)
    bs = bias_field(geom, bias, point, jacobian=jacobian)
    if not jacobian:
        return FieldSample(b=ts.b + bs.b)
    return FieldSample(b=ts.b + bs.b, jacobian=ts.jacobian + bs.jacobian)


def find_equilibrium(geom: TrapGeometry, drive: DriveParams, bias: BiasParams,
                     spec: MagnetSpec, bracket=None):
    """Axial height where lift, gravity, and the drive's averaged force balance.

    The AC force enters through its cycle-averaged (ponderomotive) potential
    (mu dBz/dz)^2 / (4 m Omega^2) evaluated on the axis with the dipole
    along z. Root-finds the net axial force; raises if no equilibrium lies
    in the bracket.
    """
    from .fields import bias_field, trap_field_amplitude
    mu = spec.moment
    mass = spec.mass

    def pond(z):
        s = trap_field_amplitude(geom, drive, np.array([0.0, 0.0, z]))
        return (mu * s.jacobian[2, 2]) ** 2 / (4.0 * mass * drive.omega_drive ** 2)

    def net_force(z):
        s = bias_field(geom, bias, np.array([0.0, 0.0, z]))
        h = 1.0e-6
        dpond = (pond(z + h) - pond(z - h)) / (2.0 * h)
        return mu * s.jacobian[2, 2] - mass * G_EARTH - dpond

    if bracket is None:
        bracket = (-0.8 * geom.outer_loop.radius, 0.8 * geom.outer_loop.radius)
    lo, hi = bracket
    # several roots can coexist (e.g. unstable ones near the board); scan for
    # stable sign changes (force decreasing through zero) and take the one
    # closest to the trap plane
    zs = np.linspace(lo, hi, 161)
    fs = np.array([net_force(z) for z in zs])
    candidates = []
    for i in range(len(zs) - 1):
        if fs[i] > 0.0 >= fs[i + 1]:
            candidates.append((abs(0.5 * (zs[i] + zs[i + 1])), zs[i], zs[i + 1]))
    if not candidates:
        raise NumericalError(
            "no stable axial equilibrium in [%g, %g] m" % (lo, hi))
    _, zlo, zhi = min(candidates)
    return brentq(net_force, zlo, zhi, xtol=1.0e-12)


def find_equilibrium_3d(geom: TrapGeometry, drive: DriveParams,
                        bias: BiasParams, spec: MagnetSpec,
                        extra_force=(0.0, 0.0, 0.0)):
    """Equilibrium position under an additional constant force.

    Minimizes the effective potential (cycle-averaged AC term plus static
    magnetic, gravity, and -F.r for the constant force) over position with
    the dipole held along +z. Falls back near the symmetry axis when the
    extra force vanishes."""
    from scipy.optimize import minimize
    from .fields import bias_field, trap_field_amplitude
    mu = spec.moment
    mass = spec.mass
    fext = np.asarray(extra_force, dtype=float)
    z0 = find_equilibrium(geom, drive, bias, spec)
    if not np.any(fext):
        return np.array([0.0, 0.0, z0])

    def potential(r):
        ts = trap_field_amplitude(geom, drive, r)
        bs = bias_field(geom, bias, r, jacobian=False)
        f_ac = ts.jacobian @ np.array([0.0, 0.0, mu])
        u = float(f_ac @ f_ac) / (4.0 * mass * drive.omega_drive ** 2)
        u -= mu * bs.b[2]
        u += mass * G_EARTH * r[2]
        u -= float(fext @ r)
        return u

    res = minimize(potential, np.array([0.0, 0.0, z0]), method="Nelder-Mead",
                   options={"xatol": 1.0e-12, "fatol": 1.0e-30,
                            "maxiter": 4000, "maxfev": 8000})
    return np.asarray(res.x, dtype=float)


def default_initial_state(geom, drive, bias, spec, displacement=1.0e-6,
                          tilt_beta=1.0e-3, tilt_gamma=0.0,
                          extra_force=(0.0, 0.0, 0.0)) -> RigidState:
    """Equilibrium-seeking start: small offsets plus a small tilt.

    `displacement` may be a scalar (applied to every axis) or a 3-vector;
    exciting only the axes under study keeps their spectral lines clean of
    intermode mixing products (the axial mode sits at twice the transverse
    ones, so co-excited traces develop sidebands).
    """
    r_eq = find_equilibrium_3d(geom, drive, bias, spec, extra_force=extra_force)
    return RigidState.at_rest(r_eq + np.asarray(displacement, dtype=float),
                              tilt_beta=tilt_beta, tilt_gamma=tilt_gamma)


def mechanical_energy(state: RigidState, geom, bias, spec, gravity_on=True):
    """Energy in static fields only (bias coils, no drive): the conserved
    quantity of the damping-free subcase used by the integrator checks."""
    from .fields import bias_field
    rot = quat_to_matrix(state.orientation)
    mu = spec.moment * rot[:, 2]
    s = bias_field(geom, bias, state.position, jacobian=False)
    e = 0.5 * spec.mass * float(state.velocity @ state.velocity)
    e += 0.5 * spec.moment_of_inertia * float(
        state.angular_velocity @ state.angular_velocity)
    e -= float(mu @ s.b)
    if gravity_on:
        e += spec.mass * G_EARTH * state.position[2]
    return e
