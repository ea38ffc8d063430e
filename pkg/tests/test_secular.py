"""Closed-form predictions: frozen reference values and scaling properties."""

import math

import numpy as np
import pytest

from mptsim.constants import MU0, G_EARTH
from mptsim.secular import (MagnetSpec, OperatingPoint, ModePrediction,
                            curvature_from_omega_z, equilibrium_gradient,
                            librational_frequencies, magnet_properties,
                            mathieu_q, predict, secular_frequencies,
                            stability_check, INERTIA_FACTOR_CUBE)

TWO_PI = 2.0 * math.pi

# reference operating point: 120 Hz drive, 1335 T/m^2 envelope curvature
OP_REF = OperatingPoint(omega_drive=TWO_PI * 120.0, b1_curvature=1335.0)

# frozen from independent evaluation of q = 2 c b_sat / (mu0 rho Omega^2)
# and f_z = (Omega / 4 pi) q / sqrt(2) with the default magnet
Q_REF = 0.6976634011070585
FZ_REF = 29.599351314508276


def test_magnet_bulk_properties(spec):
    mass, moment, volume = magnet_properties(spec)
    assert volume == pytest.approx(1.5625e-11, rel=1e-12)
    assert mass == pytest.approx(1.171875e-7, rel=1e-12)
    assert moment == pytest.approx(1.4 / MU0 * 1.5625e-11, rel=1e-12)
    assert spec.moment_of_inertia == pytest.approx(
        0.4 * mass * spec.edge ** 2, rel=1e-12)
    cube = MagnetSpec(inertia_factor=INERTIA_FACTOR_CUBE)
    assert cube.moment_of_inertia == pytest.approx(
        mass * spec.edge ** 2 / 6.0, rel=1e-12)


def test_q_parameter_frozen_value(spec):
    q_z, q_xy = mathieu_q(OP_REF, spec)
    assert q_z == pytest.approx(Q_REF, rel=1e-12)
    assert q_xy == pytest.approx(-0.5 * Q_REF, rel=1e-12)


def test_axial_frequency_frozen_value(spec):
    wx, wy, wz = secular_frequencies(OP_REF, spec)
    assert wz / TWO_PI == pytest.approx(FZ_REF, rel=1e-12)
    assert wx == wy == pytest.approx(0.5 * wz, rel=1e-15)


def test_axial_frequency_both_forms_agree(spec):
    # same answer by two routes: through the q parameter, and directly as
    # c b_sat / (sqrt(2) mu0 rho Omega)
    for omega in (TWO_PI * 90.0, TWO_PI * 120.0, TWO_PI * 333.0):
        op = OperatingPoint(omega_drive=omega, b1_curvature=987.0)
        _, _, wz = secular_frequencies(op, spec)
        direct = op.b1_curvature * spec.b_sat / (
            math.sqrt(2.0) * MU0 * spec.density * omega)
        assert wz == pytest.approx(direct, rel=1e-12)


def test_curvature_round_trip(spec):
    _, _, wz = secular_frequencies(OP_REF, spec)
    back = curvature_from_omega_z(wz, OP_REF.omega_drive, spec)
    assert back == pytest.approx(1335.0, rel=1e-9)
    with pytest.raises(ValueError):
        curvature_from_omega_z(-1.0, OP_REF.omega_drive, spec)
    with pytest.raises(ValueError):
        curvature_from_omega_z(wz, 0.0, spec)


def test_librational_frequency_value(spec):
    wb, wg = librational_frequencies(9.4e-3, spec)
    assert wb == wg
    # independent evaluation from the magnet bulk numbers
    want = math.sqrt(spec.moment * 9.4e-3 / spec.moment_of_inertia)
    assert wb == pytest.approx(want, rel=1e-12)
    assert wb / TWO_PI == pytest.approx(1189.4, rel=1e-3)
    with pytest.raises(ValueError):
        librational_frequencies(-1e-3, spec)


def test_librational_sqrt_scaling(spec, rng):
    for b0 in rng.uniform(1e-4, 50e-3, size=10):
        w1, _ = librational_frequencies(b0, spec)
        w4, _ = librational_frequencies(4.0 * b0, spec)
        assert w4 == pytest.approx(2.0 * w1, rel=1e-12)


def test_q_scaling_with_drive(spec, rng):
    # q falls as the inverse square of the drive frequency, the axial
    # mode as its inverse
    for _ in range(10):
        w1, w2 = rng.uniform(TWO_PI * 50.0, TWO_PI * 500.0, size=2)
        c = rng.uniform(100.0, 4000.0)
        q1, _ = mathieu_q(OperatingPoint(w1, c), spec)
        q2, _ = mathieu_q(OperatingPoint(w2, c), spec)
        assert q1 * w1 ** 2 == pytest.approx(q2 * w2 ** 2, rel=1e-12)
        f1 = secular_frequencies(OperatingPoint(w1, c), spec)[2]
        f2 = secular_frequencies(OperatingPoint(w2, c), spec)[2]
        assert f1 * w1 == pytest.approx(f2 * w2, rel=1e-12)


def test_q_linear_in_curvature(spec, rng):
    w = TWO_PI * 140.0
    for _ in range(5):
        c1, c2 = rng.uniform(50.0, 5000.0, size=2)
        q1, _ = mathieu_q(OperatingPoint(w, c1), spec)
        q2, _ = mathieu_q(OperatingPoint(w, c2), spec)
        assert q1 / c1 == pytest.approx(q2 / c2, rel=1e-12)


def test_stability_classification():
    assert stability_check(0.0) == "stable"
    assert stability_check(0.399) == "stable"
    assert stability_check(0.4) == "marginal"
    assert stability_check(0.907) == "marginal"
    assert stability_check(0.908) == "unstable"
    assert stability_check(5.0) == "unstable"
    with pytest.raises(ValueError):
        stability_check(-0.1)


def test_equilibrium_gradient_balances_gravity(spec):
    grad = equilibrium_gradient(spec)
    assert spec.moment * grad == pytest.approx(spec.mass * G_EARTH, rel=1e-12)
    assert grad == pytest.approx(66.018e-3, rel=1e-4)
    # independent of the cube size
    assert equilibrium_gradient(MagnetSpec(edge=1e-3)) == pytest.approx(
        grad, rel=1e-15)


def test_predict_assembles_everything(spec):
    op = OperatingPoint(omega_drive=TWO_PI * 120.0, b1_curvature=1335.0,
                        b0=9.4e-3)
    pr = predict(op, spec)
    assert isinstance(pr, ModePrediction)
    assert pr.q_z == pytest.approx(Q_REF, rel=1e-12)
    assert pr.stability == "marginal"
    assert pr.omega_z == pytest.approx(TWO_PI * FZ_REF, rel=1e-12)
    assert pr.omega_beta == pytest.approx(
        librational_frequencies(9.4e-3, spec)[0], rel=1e-15)
    d = pr.to_json_dict()
    assert set(d) == {"q_z", "omega_x_hz", "omega_y_hz", "omega_z_hz",
                      "omega_beta_hz", "omega_gamma_hz", "stability"}
    assert d["omega_z_hz"] == pytest.approx(FZ_REF, rel=1e-12)
    assert d["omega_x_hz"] == pytest.approx(0.5 * FZ_REF, rel=1e-12)


def test_validation():
    with pytest.raises(ValueError, match="edge"):
        MagnetSpec(edge=0.0)
    with pytest.raises(ValueError, match="density"):
        MagnetSpec(density=-1.0)
    with pytest.raises(ValueError, match="b_sat"):
        MagnetSpec(b_sat=0.0)
    with pytest.raises(ValueError, match="omega_drive"):
        OperatingPoint(omega_drive=0.0, b1_curvature=100.0)
    with pytest.raises(ValueError, match="b1_curvature"):
        OperatingPoint(omega_drive=100.0, b1_curvature=-5.0)
