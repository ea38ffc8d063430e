"""Filament-loop magnetostatics kernels.

Closed-form field and Jacobian of circular current filaments, evaluated via
complete elliptic integrals. Compiled with numba because the time-domain
integrator calls these a few million times per run; everything is plain
IEEE double arithmetic (no fastmath), so results are deterministic.

Notation for a single loop with radius ``a`` at axial position ``z0``,
evaluated at cylindrical ``(rho, zeta = z - z0)``:

    s2 = (a + rho)^2 + zeta^2      t2 = (a - rho)^2 + zeta^2
    m  = 4 a rho / s2              (elliptic parameter, m1 = 1 - m = t2/s2)

The raw textbook expressions suffer catastrophic cancellation near the axis
and for small m, so the identities here are regrouped around K - E (computed
by series when m is small) and an explicit on-axis Taylor branch. The
azimuthal symmetry supplies the remaining Jacobian entries:
d(rho)B_rho = -B_rho/rho - d(z)B_z (divergence) and d(z)B_rho = d(rho)B_z
(curl), so only two derivative formulas are needed.
"""

import math

import numpy as np
from numba import njit

# mu0/(4 pi) = 1e-7 exactly; C2 = mu0*NI/(2 pi) = 2e-7*NI
_TWOE7 = 2.0e-7

# relative switch radius for the on-axis Taylor branch
_AXIS_SWITCH = 1.0e-4


@njit(cache=True, nogil=True)
def ellipke(m, m1):
    """Complete elliptic integrals K(m), E(m) by the arithmetic-geometric mean.

    `m1` is the complement 1 - m, passed separately so callers can supply it
    without cancellation (t2/s2 for the loop geometry). Returns (inf, 1.0)
    at m = 1.
    """
    if m1 <= 0.0:
        return math.inf, 1.0
    a = 1.0
    b = math.sqrt(m1)
    csum = 0.5 * m                      # 2^(-1) c0^2 with c0^2 = m
    pw = 1.0                            # 2^(n-1) for n = 1
    for _ in range(40):
        c = 0.5 * (a - b)
        csum += pw * c * c
        nb = math.sqrt(a * b)
        a, b = 0.5 * (a + b), nb
        pw *= 2.0
        if c < 1.0e-17 * a:
            break
    k = math.pi / (2.0 * a)
    return k, k * (1.0 - csum)


@njit(cache=True, nogil=True)
def k_minus_e(m, kk, ee):
    """K(m) - E(m) without cancellation.

    Direct subtraction loses all digits as m -> 0 (both tend to pi/2), so
    below m = 1e-3 use the hypergeometric series
    K - E = (pi/2) * sum_n a_n * (2n/(2n-1)) * m^n, a_n = ((2n-1)!!/(2n)!!)^2.
    """
    if m >= 1.0e-3:
        return kk - ee
    an = 0.25
    acc = 0.0
    mp = m
    for n in range(1, 9):
        acc += an * (2.0 * n / (2.0 * n - 1.0)) * mp
        mp *= m
        an *= ((2.0 * n + 1.0) / (2.0 * n + 2.0)) ** 2
    return 0.5 * math.pi * acc


@njit(cache=True, nogil=True)
def loop_cyl(a, ni, rho, zeta):
    """Field of one filament loop in cylindrical components, plus derivatives.

    Parameters: loop radius a [m], turns*current ni [A], field point (rho, zeta).
    Returns (b_rho, b_z, b_rho/rho, dBz/dzeta, dBz/drho). b_rho/rho stays
    finite on the axis and is what the Cartesian Jacobian assembly needs.
    """
    if rho < _AXIS_SWITCH * a:
        # Taylor branch: B_z = b0 - rho^2/4 b2, B_rho = -rho/2 b1 + rho^3/16 b3
        # with b_n the n-th axial derivative of the on-axis field.
        u = a * a + zeta * zeta
        ru = math.sqrt(u)
        pref = math.pi * _TWOE7 * ni * a * a      # mu0 ni a^2 / 2
        b0 = pref / (u * ru)
        b1 = -3.0 * pref * zeta / (u * u * ru)
        b2 = -3.0 * pref * (a * a - 4.0 * zeta * zeta) / (u * u * u * ru)
        b3 = -15.0 * pref * zeta * (4.0 * zeta * zeta - 3.0 * a * a) / (u * u * u * u * ru)
        rho2 = rho * rho
        bz = b0 - 0.25 * rho2 * b2
        brr = -0.5 * b1 + rho2 * b3 / 16.0
        return rho * brr, bz, brr, b1 - 0.25 * rho2 * b3, -0.5 * rho * b2

    ap = a + rho
    am = a - rho
    z2 = zeta * zeta
    s2 = ap * ap + z2
    t2 = am * am + z2
    m = 4.0 * a * rho / s2
    m1 = t2 / s2
    kk, ee = ellipke(m, m1)
    kme = k_minus_e(m, kk, ee)

    s = math.sqrt(s2)
    c2 = _TWOE7 * ni
    bz = c2 / s * (kme + 2.0 * a * am * ee / t2)

    w = ee * m / (2.0 * m1) - kme
    brr = c2 * zeta * w / (rho * rho * s)

    s3 = s2 * s
    t4 = t2 * t2
    dd = a * a - rho * rho - z2
    xx = 3.0 * a * (a * a - rho * rho + z2) + rho * dd
    dbzdz = c2 * zeta * (kme * t2 * dd - 2.0 * a * ee * xx) / (t4 * s3)
    q2 = (a * a - rho * rho) ** 2 + z2 * (a * a + rho * rho)
    dbzdr = c2 * (2.0 * a * ee * (q2 - 6.0 * a * rho * z2) - kme * t2 * q2 / rho) / (t4 * s3)
    return rho * brr, bz, brr, dbzdz, dbzdr


@njit(cache=True, nogil=True)
def eval_loops(radii, zoffs, nis, x, y, z):
    """Total field and Jacobian of a set of coaxial loops at one point.

    All loops share the z axis. Returns the 3 field components followed by
    the 6 independent entries of the (symmetric, traceless) Jacobian:
    (bx, by, bz, jxx, jxy, jxz, jyy, jyz, jzz).
    """
    rho = math.sqrt(x * x + y * y)
    if rho > 0.0:
        cp = x / rho
        sp = y / rho
    else:
        cp = 1.0
        sp = 0.0

    bx = 0.0
    by = 0.0
    bz = 0.0
    jxx = 0.0
    jxy = 0.0
    jxz = 0.0
    jyy = 0.0
    jyz = 0.0
    jzz = 0.0
    for i in range(radii.shape[0]):
        br, bzz, brr, dbzdz, dbzdr = loop_cyl(radii[i], nis[i], rho, z - zoffs[i])
        drbr = -brr - dbzdz                     # divergence closes the set
        bx += br * cp
        by += br * sp
        bz += bzz
        jxx += drbr * cp * cp + brr * sp * sp
        jxy += (drbr - brr) * cp * sp
        jxz += dbzdr * cp                       # equals d(z)B_x by curl
        jyy += drbr * sp * sp + brr * cp * cp
        jyz += dbzdr * sp
        jzz += dbzdz
    return bx, by, bz, jxx, jxy, jxz, jyy, jyz, jzz


@njit(cache=True, nogil=True)
def eval_loops_batch(radii, zoffs, nis, pts, out_b, out_j):
    """Vectorized eval_loops over pts (n, 3) into out_b (n, 3), out_j (n, 3, 3)."""
    for k in range(pts.shape[0]):
        bx, by, bz, jxx, jxy, jxz, jyy, jyz, jzz = eval_loops(
            radii, zoffs, nis, pts[k, 0], pts[k, 1], pts[k, 2])
        out_b[k, 0] = bx
        out_b[k, 1] = by
        out_b[k, 2] = bz
        out_j[k, 0, 0] = jxx
        out_j[k, 0, 1] = jxy
        out_j[k, 0, 2] = jxz
        out_j[k, 1, 0] = jxy
        out_j[k, 1, 1] = jyy
        out_j[k, 1, 2] = jyz
        out_j[k, 2, 0] = jxz
        out_j[k, 2, 1] = jyz
        out_j[k, 2, 2] = jzz


def filament_distance(radii, zoffs, pts):
    """Distance from each point to the nearest filament circle (numpy, n-point)."""
    pts = np.atleast_2d(pts)
    rho = np.hypot(pts[:, 0], pts[:, 1])
    d = np.full(pts.shape[0], np.inf)
    for a, z0 in zip(radii, zoffs):
        d = np.minimum(d, np.hypot(rho - a, pts[:, 2] - z0))
    return d
