"""Physical constants (SI)."""

import math

MU0 = 4.0e-7 * math.pi      # vacuum permeability [T m / A]
G_EARTH = 9.80665           # standard gravity [m / s^2]
