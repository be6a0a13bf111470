"""
Resonances under opposite static fields
=======================================

The a = 70 A device in a weak laser (U_p / omega = 1e-4).  Reversing the
static field moves the right lead by |F| (3b + 2a), and the transmission
peak follows it.
"""

import numpy as np
from scipy.optimize import minimize_scalar

from floquet_tunnel.config import parse_config
from floquet_tunnel.model import UnitSystem
from floquet_tunnel.observables import solve

MEV = UnitSystem.mev_to_au

cfg = parse_config({
    "device": {"builder": "triple_barrier", "a": 70, "b": 20, "V0": 237, "m_well": 0.0667, "m_barrier": 0.0918},
    "waveform": {"kind": "monochromatic", "omega": 70, "ponderomotive_ratio": 1e-4},
    "n_points": 221,
    "scan": {"energy": {"values": [100.0]}},
})
F = 0.23e-4
shift = UnitSystem.au_to_mev(F * UnitSystem.angstrom_to_au(200.0))
print(f"expected shift |F|(3b+2a) = {shift:.3f} meV")


def peak(dev, lo, hi, n_max=2):
    es = np.arange(lo, hi, 0.25)
    ts = [solve(dev, MEV(e), n_max).total_transmission for e in es]
    k = int(np.argmax(ts))
    res = minimize_scalar(lambda e: -solve(dev, MEV(e), n_max).total_transmission,
                          bounds=(es[k - 1], es[k + 1]), method="bounded")
    return res.x, -res.fun


e_minus, t_minus = peak(cfg.device(-F), 128.0, 148.0)
e_plus, t_plus = peak(cfg.device(+F), 118.0 + shift, 148.0 + shift)
print(f"-F: peak T = {t_minus:.4f} at {e_minus:.3f} meV")
print(f"+F: peak T = {t_plus:.4f} at {e_plus:.3f} meV")
print(f"measured shift {e_plus - e_minus:.3f} meV")
