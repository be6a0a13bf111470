"""Units, laser waveforms and piecewise-constant device geometry.

Everything below the public constructors is in Hartree atomic units.  The
electron charge is taken as ``e = -1``; probabilities for a monochromatic
drive do not depend on that sign, but phases of individual amplitudes do.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import constants, integrate

__all__ = [
    "ELECTRON_CHARGE",
    "UnitSystem",
    "Waveform",
    "Region",
    "Device",
    "VectorPotential",
    "GeometryError",
    "GaugeError",
    "build_triple_barrier",
    "discretize_stark",
    "electric_field",
    "vector_potential_samples",
    "xi_to_amplitude",
    "amplitude_to_xi",
    "eta_to_field",
]

ELECTRON_CHARGE = -1.0

WAVEFORM_KINDS = ("off", "monochromatic", "bichromatic", "pulse_train")


class GeometryError(ValueError):
    """Raised for non-physical device dimensions or orderings."""


class GaugeError(ValueError):
    """Raised when a waveform cannot be written as a periodic vector potential."""


class UnitSystem:
    """Conversion constants between laboratory units and atomic units."""

    HARTREE_MEV = constants.physical_constants["Hartree energy in eV"][0] * 1e3
    BOHR_ANGSTROM = constants.physical_constants["Bohr radius"][0] * 1e10
    # atomic unit of electric field, V/m
    FIELD_V_PER_M = constants.physical_constants["atomic unit of electric field"][0]

    @classmethod
    def mev_to_au(cls, energy):
        return np.divide(energy, cls.HARTREE_MEV)

    @classmethod
    def au_to_mev(cls, energy):
        return np.multiply(energy, cls.HARTREE_MEV)

    @classmethod
    def angstrom_to_au(cls, length):
        return np.divide(length, cls.BOHR_ANGSTROM)

    @classmethod
    def au_to_angstrom(cls, length):
        return np.multiply(length, cls.BOHR_ANGSTROM)

    @classmethod
    def field_au_to_v_per_m(cls, f):
        return np.multiply(f, cls.FIELD_V_PER_M)

    @classmethod
    def field_v_per_m_to_au(cls, f):
        return np.divide(f, cls.FIELD_V_PER_M)


def xi_to_amplitude(xi, omega):
    """Peak field E0 (a.u.) for the dimensionless intensity xi = |e| E0 / (2 sqrt(m_e omega^3))."""
    return 2.0 * xi * math.sqrt(omega**3)


def amplitude_to_xi(amplitude, omega):
    return amplitude / (2.0 * math.sqrt(omega**3))


def eta_to_field(eta, v0, length):
    """Static field F (a.u.) for eta = |e| F L / V0, L being the structure length."""
    return eta * v0 / length


@dataclass(frozen=True)
class Waveform:
    """Time dependence of the laser electric field, common to all regions.

    ``xi`` is the dimensionless intensity; the peak field follows from
    :func:`xi_to_amplitude`.  For ``pulse_train`` the Floquet period is the
    pulse duration ``pulse_duration`` rather than the carrier period, and
    ``pulse_width`` is the Gaussian width of the envelope.
    """

    kind: str = "off"
    omega: float = 0.0
    xi: float = 0.0
    phase: float = 0.0
    pulse_duration: float | None = None
    pulse_width: float | None = None

    def __post_init__(self):
        if self.kind not in WAVEFORM_KINDS:
            raise ValueError(f"unknown waveform kind {self.kind!r}; expected one of {WAVEFORM_KINDS}")
        if self.kind != "off" and not self.omega > 0:
            raise ValueError("laser frequency must be positive")
        if self.kind == "pulse_train":
            if self.pulse_duration is None or self.pulse_width is None:
                raise ValueError("pulse_train needs pulse_duration and pulse_width")
            if self.pulse_duration <= 0 or self.pulse_width <= 0:
                raise ValueError("pulse_duration and pulse_width must be positive")

    @classmethod
    def off(cls) -> "Waveform":
        return cls()

    @classmethod
    def monochromatic(cls, omega, xi, phase=0.0) -> "Waveform":
        return cls("monochromatic", omega, xi, phase)

    @classmethod
    def bichromatic(cls, omega, xi, phase=0.0) -> "Waveform":
        return cls("bichromatic", omega, xi, phase)

    @classmethod
    def pulse_train(cls, omega, xi, phase=0.0, cycles=13.0, sigma_fraction=1.0 / 140.0) -> "Waveform":
        """Train of Gaussian-sin^2 pulses, each ``cycles`` carrier periods long."""
        duration = cycles * 2.0 * math.pi / omega
        return cls("pulse_train", omega, xi, phase, duration, sigma_fraction * duration)

    @classmethod
    def from_ponderomotive_ratio(cls, kind, omega, ratio, mass, phase=0.0, **kwargs) -> "Waveform":
        """Pick xi such that the ponderomotive energy for ``mass`` equals ``ratio * omega``."""
        if kind == "pulse_train":
            probe = cls.pulse_train(omega, 1.0, phase, **kwargs)
        else:
            probe = cls(kind, omega, 1.0, phase)
        u1 = probe.ponderomotive_energy(mass)
        return replace(probe, xi=math.sqrt(ratio * omega / u1))

    @property
    def amplitude(self) -> float:
        if self.kind == "off":
            return 0.0
        return xi_to_amplitude(self.xi, self.omega)

    @property
    def floquet_frequency(self) -> float:
        """Angular frequency of the Floquet ladder (0 when the field is off)."""
        if self.kind == "pulse_train":
            return 2.0 * math.pi / self.pulse_duration
        return self.omega

    @property
    def period(self) -> float:
        w = self.floquet_frequency
        return 2.0 * math.pi / w if w > 0 else math.inf

    @property
    def is_off(self) -> bool:
        return self.kind == "off" or self.xi == 0.0

    def _envelope(self, t):
        tp, sp = self.pulse_duration, self.pulse_width
        return np.exp(-(((t - tp / 2) / sp) ** 2)) * np.sin(np.pi * t / tp) ** 2

    @cached_property
    def dc_offset(self) -> float:
        """Constant subtracted from a pulse so that the field integrates to zero over T_p."""
        if self.kind != "pulse_train":
            return 0.0
        e0, w, phi, tp = self.amplitude, self.omega, self.phase, self.pulse_duration
        centre, width = tp / 2, self.pulse_width
        # the Gaussian is narrow compared with T_p; give quad the peak location
        pts = [max(0.0, centre - 8 * width), centre, min(tp, centre + 8 * width)]
        val, _ = integrate.quad(
            lambda t: e0 * self._envelope(t) * math.sin(w * t + phi), 0.0, tp, points=pts, limit=400,
            epsabs=1e-14 * max(e0, 1e-300) * width, epsrel=1e-13,
        )
        return val / tp

    def ponderomotive_energy(self, mass, field_scale=1.0, n_samples=4096) -> float:
        """Cycle-averaged quiver energy e^2 <A^2> / (2 m) for a region of the given mass."""
        vp = vector_potential_samples(self, field_scale, n_samples)
        return ELECTRON_CHARGE**2 * vp.mean_square / (2.0 * mass)


def electric_field(waveform: Waveform, t):
    """Laser field E(t) for unit spatial amplitude (region multipliers are applied elsewhere)."""
    t = np.asarray(t, dtype=float)
    if waveform.kind == "off":
        return np.zeros_like(t)
    e0, w, phi = waveform.amplitude, waveform.omega, waveform.phase
    if waveform.kind == "monochromatic":
        return e0 * np.sin(w * t + phi)
    if waveform.kind == "bichromatic":
        return e0 * (np.sin(w * t) - np.sin(2 * w * t + phi))
    tau = np.mod(t, waveform.pulse_duration)
    return e0 * waveform._envelope(tau) * np.sin(w * tau + phi) - waveform.dc_offset


@dataclass(frozen=True, eq=False)
class VectorPotential:
    """One period of A(t) on a uniform grid, with its Fourier coefficients.

    ``coeffs`` holds b_n in FFT order so that ``A(t) = sum_n b_n exp(-i n w t)``.
    """

    t: np.ndarray
    values: np.ndarray
    mean_square: float
    coeffs: np.ndarray
    omega: float

    def coefficient(self, n: int) -> complex:
        return complex(self.coeffs[n % len(self.coeffs)])

    def reconstruct(self, t) -> np.ndarray:
        ns = len(self.coeffs)
        n = np.fft.fftfreq(ns, 1.0 / ns)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.real(np.exp(-1j * self.omega * np.outer(t, n)) @ self.coeffs)


def _check_samples(n_samples):
    if n_samples < 256 or n_samples & (n_samples - 1):
        raise ValueError(f"n_samples must be a power of two >= 256, got {n_samples}")


def vector_potential_samples(waveform: Waveform, region_scale: float = 1.0, n_samples: int = 1024) -> VectorPotential:
    """Sample A(t) = -int_0^t E dt' + C over one Floquet period.

    The constant is fixed by requiring a vanishing period average of A.  The
    antiderivative is taken spectrally, which is exact for band-limited
    fields and spectrally accurate for the smooth pulse train.
    """
    _check_samples(n_samples)
    w = waveform.floquet_frequency
    if waveform.is_off or region_scale == 0.0:
        t = np.arange(n_samples) * (2 * np.pi / w if w > 0 else 1.0) / n_samples
        z = np.zeros(n_samples)
        return VectorPotential(t, z, 0.0, np.zeros(n_samples, complex), w)

    t = np.arange(n_samples) * waveform.period / n_samples
    e_t = region_scale * electric_field(waveform, t)
    e_n = np.fft.ifft(e_t)
    scale = max(np.max(np.abs(e_t)), 1e-300)
    if abs(e_n[0]) > 1e-10 * scale:
        raise GaugeError(
            f"field has non-zero period average {e_n[0].real:.3e}; no periodic vector potential exists"
        )
    n = np.fft.fftfreq(n_samples, 1.0 / n_samples)
    b = np.zeros(n_samples, dtype=complex)
    nz = n != 0
    b[nz] = e_n[nz] / (1j * n[nz] * w)
    b[n_samples // 2] = 0.0  # Nyquist bin carries no definite sign of frequency
    a_t = np.real(np.fft.fft(b))
    return VectorPotential(t, a_t, float(np.mean(a_t**2)), b, w)


@dataclass(frozen=True)
class Region:
    """Homogeneous slab.  ``width`` is ``inf`` for the two leads."""

    mass: float
    potential: float
    width: float = math.inf
    field_scale: float = 1.0

    def __post_init__(self):
        if not self.mass > 0:
            raise GeometryError(f"effective mass must be positive, got {self.mass}")
        if not self.width > 0:
            raise GeometryError(f"region width must be positive, got {self.width}")


@dataclass(frozen=True)
class Device:
    """Ordered stack of regions; interface ``i`` separates regions ``i`` and ``i + 1``."""

    regions: tuple[Region, ...]
    interface_positions: tuple[float, ...]
    waveform: Waveform = field(default_factory=Waveform)
    static_field: float = 0.0
    incidence: str = "left"

    def __post_init__(self):
        regions = tuple(self.regions)
        xs = tuple(float(x) for x in self.interface_positions)
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "interface_positions", xs)
        if len(regions) < 2:
            raise GeometryError("a device needs at least two regions")
        if len(xs) != len(regions) - 1:
            raise GeometryError(f"{len(regions)} regions need {len(regions) - 1} interfaces, got {len(xs)}")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise GeometryError("interface positions must be strictly increasing")
        if not (math.isinf(regions[0].width) and math.isinf(regions[-1].width)):
            raise GeometryError("the first and last regions are leads and must have infinite width")
        for i, (reg, (a, b)) in enumerate(zip(regions[1:-1], zip(xs, xs[1:])), start=1):
            if math.isinf(reg.width) or not math.isclose(reg.width, b - a, rel_tol=1e-9, abs_tol=1e-12):
                raise GeometryError(f"region {i} width {reg.width} does not match its interfaces ({b - a})")
        if self.incidence not in ("left", "right"):
            raise ValueError(f"incidence must be 'left' or 'right', got {self.incidence!r}")

    @classmethod
    def from_regions(cls, regions: Sequence[Region], origin: float = 0.0, **kwargs) -> "Device":
        """Place the first interface at ``origin`` and stack interior widths after it."""
        xs = [origin]
        for reg in regions[1:-1]:
            xs.append(xs[-1] + reg.width)
        return cls(tuple(regions), tuple(xs), **kwargs)

    @property
    def length(self) -> float:
        return self.interface_positions[-1] - self.interface_positions[0]

    @property
    def left(self) -> Region:
        return self.regions[0]

    @property
    def right(self) -> Region:
        return self.regions[-1]

    def with_waveform(self, waveform: Waveform) -> "Device":
        return replace(self, waveform=waveform)

    def with_incidence(self, incidence: str) -> "Device":
        return replace(self, incidence=incidence)

    def translated(self, shift: float) -> "Device":
        return replace(self, interface_positions=tuple(x + shift for x in self.interface_positions))

    def mirrored(self) -> "Device":
        """Reverse the stack about its centre and swap the incidence side."""
        x0, x1 = self.interface_positions[0], self.interface_positions[-1]
        xs = tuple(sorted(x0 + x1 - x for x in self.interface_positions))
        side = "right" if self.incidence == "left" else "left"
        return replace(self, regions=self.regions[::-1], interface_positions=xs, incidence=side)

    def potential_at(self, x) -> np.ndarray:
        """Piecewise-constant V(x); points exactly on an interface take the right-hand value."""
        idx = np.searchsorted(self.interface_positions, np.asarray(x, dtype=float), side="right")
        return np.array([r.potential for r in self.regions])[idx]


FIELD_PROFILES = {
    "uniform": (1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0),
    # laser concentrated in the structure: full inside, half in the outer barriers, none in the leads
    "confined": (0.0, 0.5, 1.0, 1.0, 1.0, 0.5, 0.0),
    "none": (0.0,) * 7,
}


def build_triple_barrier(a, b, v0, m_well, m_barrier, *, field_profile="uniform", waveform=None,
                         origin=0.0, incidence="left") -> Device:
    """Lead | barrier | well | barrier | well | barrier | lead, in atomic units.

    Leads are made of the well material at zero potential.  ``field_profile``
    is a key of ``FIELD_PROFILES`` or an explicit sequence of seven laser
    amplitude multipliers.
    """
    for name, val in (("a", a), ("b", b), ("V0", v0), ("m_well", m_well), ("m_barrier", m_barrier)):
        if not val > 0:
            raise GeometryError(f"{name} must be positive, got {val}")
    scales = FIELD_PROFILES[field_profile] if isinstance(field_profile, str) else tuple(field_profile)
    if len(scales) != 7:
        raise GeometryError("a triple barrier needs seven field multipliers")
    well = lambda w, s: Region(m_well, 0.0, w, s)
    barrier = lambda s: Region(m_barrier, v0, b, s)
    regions = (
        well(math.inf, scales[0]), barrier(scales[1]), well(a, scales[2]), barrier(scales[3]),
        well(a, scales[4]), barrier(scales[5]), well(math.inf, scales[6]),
    )
    return Device.from_regions(regions, origin, waveform=waveform or Waveform(), incidence=incidence)


def discretize_stark(device: Device, field: float, n_points: int) -> Device:
    """Replace V(x) + F x inside the structure by an equally spaced staircase.

    The interior ``[x_0, x_{L-1}]`` is cut into ``n_points - 1`` slabs; each
    takes the tilted potential at its midpoint and the mass and laser
    multiplier of the original region containing that midpoint.  The leads are
    pinned to the tilted potential at the outer interfaces.
    """
    if not math.isfinite(field):
        raise ValueError("static field must be finite")
    xs = np.asarray(device.interface_positions)
    if n_points < len(xs):
        raise GeometryError(
            f"{n_points} points cannot resolve a device with {len(xs)} interfaces; use at least {len(xs)}"
        )
    grid = np.linspace(xs[0], xs[-1], n_points)
    mids = 0.5 * (grid[:-1] + grid[1:])
    parent = np.searchsorted(xs, mids, side="right")
    lost = sorted(set(range(1, len(xs))) - set(parent.tolist()))
    if lost:
        raise GeometryError(
            f"{n_points} points leave original layer(s) {lost} without a slab; increase n_points"
        )
    h = grid[1] - grid[0]
    off = np.abs((xs - xs[0]) / h - np.round((xs - xs[0]) / h))
    if np.any(off > 1e-6):
        warnings.warn(
            f"staircase step {float(UnitSystem.au_to_angstrom(h)):.4g} A does not divide the layer widths; "
            "slabs straddling an interface take the material at their midpoint",
            stacklevel=2,
        )
    left, right = device.regions[0], device.regions[-1]
    new = [replace(left, potential=left.potential + field * xs[0])]
    for xc, k in zip(mids, parent):
        src = device.regions[k]
        new.append(Region(src.mass, src.potential + field * xc, h, src.field_scale))
    new.append(replace(right, potential=right.potential + field * xs[-1]))
    return Device(tuple(new), tuple(grid), device.waveform, field, device.incidence)
