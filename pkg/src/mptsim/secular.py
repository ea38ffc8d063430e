"""Closed-form trap-mode predictions.

The averaged (secular) approximation of the drive-frequency dynamics gives
a dimensionless drive-strength parameter q for each axis, harmonic
vibrational frequencies proportional to q times the drive frequency, and
librational (dipole-axis rocking) frequencies set by the static bias field.
These are the analytic counterparts the time-domain simulation is checked
against, plus the inverse map from a measured axial frequency back to the
field curvature that produced it.
"""

from dataclasses import dataclass
import math

from .constants import MU0, G_EARTH

# stability classification boundaries for the axial drive-strength parameter:
# the conservative design rule sits at 0.4, the classic zero-offset stability
# edge at 0.908; points between are flagged rather than rejected because the
# trap demonstrably operates there
Q_DESIGN_LIMIT = 0.4
Q_STABILITY_EDGE = 0.908

# default rotational inertia in units of mass*edge^2. 2/5 (a sphere-like
# rotor) keeps the librational closed form and the torque dynamics mutually
# consistent; the geometric cube value 1/6 is selectable but raises the
# simulated libration frequency above the closed form by sqrt(2.4).
INERTIA_FACTOR_CONSISTENT = 0.4
INERTIA_FACTOR_CUBE = 1.0 / 6.0


@dataclass(frozen=True)
class MagnetSpec:
    """The levitated magnet: cube edge, mass density, magnetization field."""
    edge: float = 250.0e-6
    density: float = 7.5e3
    b_sat: float = 1.4
    inertia_factor: float = INERTIA_FACTOR_CONSISTENT

    def __post_init__(self):
        if not (self.edge > 0.0):
            raise ValueError("MagnetSpec.edge must be > 0")
        if not (self.density > 0.0):
            raise ValueError("MagnetSpec.density must be > 0")
        if not (self.b_sat > 0.0):
            raise ValueError("MagnetSpec.b_sat must be > 0")
        if not (self.inertia_factor > 0.0):
            raise ValueError("MagnetSpec.inertia_factor must be > 0")

    @property
    def volume(self):
        return self.edge ** 3

    @property
    def mass(self):
        return self.density * self.volume

    @property
    def moment(self):
        """Dipole moment magnitude, magnetization b_sat/mu0 times volume."""
        return self.b_sat / MU0 * self.volume

    @property
    def moment_of_inertia(self):
        return self.inertia_factor * self.mass * self.edge ** 2


@dataclass(frozen=True)
class OperatingPoint:
    """One trap configuration in field terms (currents already converted)."""
    omega_drive: float
    b1_curvature: float
    b0: float = 0.0
    b0_gradient: float = 0.0

    def __post_init__(self):
        if not (self.omega_drive > 0.0):
            raise ValueError("OperatingPoint.omega_drive must be > 0")
        if not (self.b1_curvature >= 0.0):
            raise ValueError("OperatingPoint.b1_curvature must be >= 0")


@dataclass(frozen=True)
class ModePrediction:
    """Predicted small-signal mode frequencies [rad/s] and stability class."""
    omega_x: float
    omega_y: float
    omega_z: float
    omega_beta: float
    omega_gamma: float
    q_z: float
    stability: str

    def to_json_dict(self):
        two_pi = 2.0 * math.pi
        return {
            "q_z": self.q_z,
            "omega_x_hz": self.omega_x / two_pi,
            "omega_y_hz": self.omega_y / two_pi,
            "omega_z_hz": self.omega_z / two_pi,
            "omega_beta_hz": self.omega_beta / two_pi,
            "omega_gamma_hz": self.omega_gamma / two_pi,
            "stability": self.stability,
        }


def magnet_properties(spec: MagnetSpec):
    """(mass [kg], dipole moment [A m^2], volume [m^3]) of the magnet."""
    return spec.mass, spec.moment, spec.volume


def mathieu_q(op: OperatingPoint, spec: MagnetSpec):
    """Drive-strength parameters (q_z, q_xy).

    q_z = 2 |B1''| b_sat / (mu0 rho Omega^2); the transverse parameter is
    -q_z/2 because the quadrupole curvature splits two-to-one across the
    axes with opposite sign.
    """
    q_z = 2.0 * op.b1_curvature * spec.b_sat / (
        MU0 * spec.density * op.omega_drive ** 2)
    return q_z, -0.5 * q_z


def secular_frequencies(op: OperatingPoint, spec: MagnetSpec):
    """Vibrational angular frequencies (omega_x, omega_y, omega_z).

    omega_z = (Omega/2) |q_z| / sqrt(2), the transverse pair at half that.
    """
    q_z, _ = mathieu_q(op, spec)
    omega_z = 0.5 * op.omega_drive * abs(q_z) / math.sqrt(2.0)
    return 0.5 * omega_z, 0.5 * omega_z, omega_z


def librational_frequencies(b0, spec: MagnetSpec):
    """Angular frequencies of the two dipole-axis rocking modes in a bias b0.

    Linearized restoring rate sqrt(moment * b0 / inertia); both transverse
    rocking axes are degenerate. With the default inertia factor this equals
    sqrt((5/2) b0 b_sat / (mu0 rho edge^2)).
    """
    if b0 < 0.0:
        raise ValueError("bias field must be >= 0")
    w = math.sqrt(spec.moment * b0 / spec.moment_of_inertia)
    return w, w


def curvature_from_omega_z(omega_z, omega_drive, spec: MagnetSpec):
    """Field curvature |B1''| implied by a measured axial frequency.

    Exact algebraic inverse of the secular formula:
    |B1''| = omega_z mu0 rho Omega sqrt(2) / b_sat.
    """
    if not (omega_z > 0.0 and omega_drive > 0.0):
        raise ValueError("frequencies must be > 0")
    return omega_z * MU0 * spec.density * omega_drive * math.sqrt(2.0) / spec.b_sat


def stability_check(q_z):
    """Classify a drive-strength parameter: stable, marginal, or unstable."""
    if q_z < 0.0:
        raise ValueError("q_z must be >= 0")
    if q_z < Q_DESIGN_LIMIT:
        return "stable"
    if q_z < Q_STABILITY_EDGE:
        return "marginal"
    return "unstable"


def equilibrium_gradient(spec: MagnetSpec):
    """Bias gradient at which static magnetic lift balances gravity.

    moment * B0' = mass * g, independent of the cube size:
    B0' = mu0 rho g / b_sat.
    """
    return MU0 * spec.density * G_EARTH / spec.b_sat


def predict(op: OperatingPoint, spec: MagnetSpec) -> ModePrediction:
    """Full small-signal prediction at one operating point."""
    q_z, _ = mathieu_q(op, spec)
    omega_x, omega_y, omega_z = secular_frequencies(op, spec)
    omega_beta, omega_gamma = librational_frequencies(op.b0, spec)
    return ModePrediction(
        omega_x=omega_x, omega_y=omega_y, omega_z=omega_z,
        omega_beta=omega_beta, omega_gamma=omega_gamma,
        q_z=q_z, stability=stability_check(q_z))
