"""Reflection/transmission amplitudes, sideband probabilities and currents."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cascade import ScatterMatrix, cascade_device, device_bases
from .floquet import ChannelGrid, LayerBasis
from .model import Device

__all__ = [
    "ScatterResult",
    "IncidentChannelClosed",
    "extract_amplitudes",
    "probabilities",
    "total_transmission",
    "solve",
]


class IncidentChannelClosed(ValueError):
    """The N = 0 channel of the incidence lead is evanescent."""


@dataclass(frozen=True, eq=False)
class ScatterResult:
    """Asymptotic observables for one quasienergy.

    ``reflected``/``transmitted`` are the channel amplitudes R_N and T_N;
    ``p_reflect``/``p_transmit`` the flux-weighted probabilities, zero on
    closed channels.  Currents are normalised per unit incident amplitude.
    """

    energy: float
    indices: np.ndarray
    reflected: np.ndarray
    transmitted: np.ndarray
    p_reflect: np.ndarray
    p_transmit: np.ndarray
    open_incident: np.ndarray
    open_exit: np.ndarray
    j_inc: float
    j_ref: float
    j_tr: float
    incidence: str = "left"
    n_max: int = 0
    max_entry: float = float("nan")

    @property
    def total_transmission(self) -> float:
        return float(np.sum(self.p_transmit))

    @property
    def total_reflection(self) -> float:
        return float(np.sum(self.p_reflect))

    @property
    def unitarity_deficit(self) -> float:
        return abs(self.total_reflection + self.total_transmission - 1.0)

    def p_transmit_at(self, n: int) -> float:
        k = n + self.n_max
        return float(self.p_transmit[k]) if 0 <= k < len(self.p_transmit) else 0.0

    def p_reflect_at(self, n: int) -> float:
        k = n + self.n_max
        return float(self.p_reflect[k]) if 0 <= k < len(self.p_reflect) else 0.0


def extract_amplitudes(S: ScatterMatrix, incidence: str = "left", incident: int | None = None):
    """Columns of S for a unit wave in the central channel of the incidence lead."""
    k = S.size // 2 if incident is None else incident
    if incidence == "left":
        return S.pp[:, k].copy(), S.mp[:, k].copy()
    if incidence == "right":
        return S.mm[:, k].copy(), S.pm[:, k].copy()
    raise ValueError(f"incidence must be 'left' or 'right', got {incidence!r}")


def probabilities(R, T, left: LayerBasis, right: LayerBasis, incidence: str = "left") -> ScatterResult:
    """Flux-weighted sideband probabilities and currents.

    P_R(N) = (p_N / p_0)|R_N|^2 and P_T(N) = (m_in q_N / (m_out p_0))|T_N|^2,
    summed over open channels only; p refers to the incidence lead.
    """
    inc, out = (left, right) if incidence == "left" else (right, left)
    grid = inc.grid
    c = grid.centre
    if not inc.open[c]:
        raise IncidentChannelClosed("incident energy below lead continuum")
    p, q = inc.momenta.real, out.momenta.real
    p0 = p[c]
    R, T = np.asarray(R), np.asarray(T)
    pr = np.where(inc.open, p / p0 * np.abs(R) ** 2, 0.0)
    pt = np.where(out.open, inc.mass * q / (out.mass * p0) * np.abs(T) ** 2, 0.0)
    j_inc = p0 / inc.mass
    j_ref = float(np.sum(np.where(inc.open, p / inc.mass * np.abs(R) ** 2, 0.0)))
    j_tr = float(np.sum(np.where(out.open, q / out.mass * np.abs(T) ** 2, 0.0)))
    return ScatterResult(grid.energy, grid.indices, R, T, pr, pt, inc.open.copy(), out.open.copy(),
                         j_inc, j_ref, j_tr, incidence, grid.n_max)


def total_transmission(result: ScatterResult) -> float:
    return result.total_transmission


def solve(device: Device, energy: float, n_max: int = 0, n_samples: int | None = None,
          incidence: str | None = None) -> ScatterResult:
    """Scatter a unit wave at quasienergy ``energy`` (a.u.) off ``device``."""
    incidence = incidence or device.incidence
    omega = device.waveform.floquet_frequency or 1.0
    grid = ChannelGrid(energy, omega, n_max)
    bases = device_bases(device, grid, n_samples)
    inc = bases[0] if incidence == "left" else bases[-1]
    if not inc.open[grid.centre]:
        raise IncidentChannelClosed("incident energy below lead continuum")
    track: list[float] = []
    S = cascade_device(device, grid, bases=bases, track=track)
    R, T = extract_amplitudes(S, incidence)
    res = probabilities(R, T, bases[0], bases[-1], incidence)
    return replace(res, max_entry=max(track))
