"""
Volkov phase coefficients
=========================

Inside a monochromatically driven layer the plane wave picks up the phase
exp(i Phi(t)).  Its Fourier coefficients B_K follow from a quadrature over
one period, and for this drive they also have a closed form as generalized
Bessel functions.  The two agree to rounding error even at xi = 2.
"""

import math

import numpy as np

from floquet_tunnel.model import UnitSystem, Waveform
from floquet_tunnel.scancli import diagnose_bessel

omega = UnitSystem.mev_to_au(70.0)
m = 0.0667
q = math.sqrt(2 * m * UnitSystem.mev_to_au(100.0))

for xi in (0.1, 0.5, 1.0, 2.0):
    rep = diagnose_bessel(Waveform.monochromatic(omega, xi), q, m)
    weights = np.abs(rep["quadrature"]) ** 2
    ks = np.array(rep["K"])
    spread = math.sqrt(np.sum(weights * ks**2))
    print(f"xi = {xi:3.1f}  alpha = {rep['alpha']:8.3f}  beta = {rep['beta']:8.3f}  "
          f"rms K = {spread:6.2f}  max diff = {rep['max_abs_diff']:.1e}  sum|B|^2 - 1 = {rep['parseval'] - 1:+.1e}")

# the rms sideband index grows roughly like |alpha|; that sets how many
# Floquet channels a strong field needs
