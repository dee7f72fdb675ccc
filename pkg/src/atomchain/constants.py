"""Physical constants (CODATA 2018, SI units).

Values are pinned here rather than taken from ``scipy.constants`` so that
derived scalars (vacuum decay rate, thermal occupation) do not drift when
SciPy moves to a newer CODATA release.

==========  ========================  =====================
name        quantity                  value
==========  ========================  =====================
HBAR        reduced Planck constant   1.054571817e-34 J s
C           speed of light            299792458 m/s
EPSILON_0   vacuum permittivity       8.8541878128e-12 F/m
K_B         Boltzmann constant        1.380649e-23 J/K
==========  ========================  =====================
"""

HBAR = 1.054571817e-34
C = 299792458.0
EPSILON_0 = 8.8541878128e-12
K_B = 1.380649e-23

# Positions closer than this are rejected; the dipole-dipole shift diverges as r^-3.
SEPARATION_FLOOR = 1e-9

CODATA_2018 = {
    "hbar": HBAR,
    "c": C,
    "epsilon_0": EPSILON_0,
    "k_B": K_B,
}
