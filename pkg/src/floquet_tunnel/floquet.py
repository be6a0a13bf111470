"""Per-region Floquet basis: sideband momenta and photon-exchange coefficients.

Inside a homogeneous region every solution is a superposition of modes

    exp(i s p_N x) exp(-i (E + N w) t) exp(i Phi(t)),    s = +/-1,

and ``exp(i Phi)`` is expanded as ``sum_K B_K exp(-i K w t)``, so mode N
contributes to the harmonic ``M = N + K`` with weight ``B_{M-N}``.
"""

from __future__ import annotations

import math
import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .model import ELECTRON_CHARGE, Region, VectorPotential, Waveform, vector_potential_samples

__all__ = [
    "ChannelGrid",
    "LayerBasis",
    "TruncationWarning",
    "momenta",
    "phase_integral",
    "fourier_B",
    "build_layer_basis",
    "build_layer_bases",
    "basis_cache_info",
    "default_time_samples",
    "bessel_series_B",
    "clear_basis_cache",
]

#: Open-channel tail |B_K| beyond 2*n_max above this triggers a TruncationWarning.
TRUNCATION_TOL = 1e-8


class TruncationWarning(RuntimeWarning):
    """The Fourier content of a basis function is not contained in the channel grid."""


@dataclass(frozen=True)
class ChannelGrid:
    """Quasienergy ``energy`` with sidebands N = -n_max..n_max spaced by ``omega``."""

    energy: float
    omega: float
    n_max: int

    def __post_init__(self):
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")
        if self.n_max > 0 and not self.omega > 0:
            raise ValueError("a multi-channel grid needs a positive frequency")

    @property
    def size(self) -> int:
        return 2 * self.n_max + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    @property
    def centre(self) -> int:
        """Array position of the N = 0 channel."""
        return self.n_max

    @property
    def channel_energies(self) -> np.ndarray:
        return self.energy + self.indices * self.omega


def default_time_samples(n_max: int) -> int:
    n = max(512, 16 * (2 * n_max + 1))
    return 1 << (n - 1).bit_length()


def momenta(grid: ChannelGrid, region: Region, ponderomotive: float = 0.0):
    """Sideband momenta p_N = sqrt(2 m (E + N w - V - U)) and the open-channel mask.

    Closed channels get a positive imaginary momentum.  A channel sitting
    exactly on threshold gets p = 0 and is reported closed.
    """
    kinetic = grid.channel_energies - region.potential - ponderomotive
    arg = 2.0 * region.mass * kinetic
    p = np.where(arg > 0, np.sqrt(np.abs(arg)), 1j * np.sqrt(np.abs(arg))).astype(complex)
    return p, arg > 0


def _spectral_antiderivative(coeffs: np.ndarray, omega: float) -> np.ndarray:
    """Samples of int_0^t f(t') dt' for f = sum_n c_n exp(-i n w t) with c_0 = 0 (FFT order)."""
    ns = len(coeffs)
    n = np.fft.fftfreq(ns, 1.0 / ns)
    g = np.zeros(ns, dtype=complex)
    nz = n != 0
    g[nz] = coeffs[nz] / (-1j * n[nz] * omega)
    g[ns // 2] = 0.0
    return np.fft.fft(g) - g.sum()


def _phase_parts(vp: VectorPotential, mass: float):
    """Split Phi_q(t) = q * linear(t) + quadratic(t)."""
    if vp.mean_square == 0.0:
        z = np.zeros(len(vp.t))
        return z, z
    scale = max(np.max(np.abs(vp.values)), 1e-300)
    if abs(np.mean(vp.values)) > 1e-10 * scale:
        raise ValueError("phase integrand has a non-zero period mean; the vector potential is not zero-mean")
    e = ELECTRON_CHARGE
    linear = (e / mass) * _spectral_antiderivative(vp.coeffs, vp.omega).real
    sq = vp.values**2 - vp.mean_square
    quadratic = (-(e**2) / (2.0 * mass)) * _spectral_antiderivative(np.fft.ifft(sq), vp.omega).real
    return linear, quadratic


def phase_integral(vp: VectorPotential, mass: float, q: complex) -> np.ndarray:
    """Phi(t) = int_0^t [(e/m) A q - (e^2/2m)(A^2 - <A^2>)] dt' on the samples of ``vp``."""
    linear, quadratic = _phase_parts(vp, mass)
    return q * linear + quadratic


def fourier_B(phi: np.ndarray, n_max: int | None = None) -> np.ndarray:
    """Fourier coefficients B_K of exp(i Phi(t)), with exp(i Phi) = sum_K B_K exp(-i K w t).

    Returned in FFT order (index K mod n_samples).  If ``n_max`` is given the
    tail |K| >= 2 n_max is checked and a :class:`TruncationWarning` raised when
    it is not negligible.
    """
    coeffs = np.fft.ifft(np.exp(1j * np.asarray(phi)), axis=-1)
    if n_max is not None:
        _check_tail(coeffs[None, :] if coeffs.ndim == 1 else coeffs, n_max)
    return coeffs


def _check_tail(coeffs: np.ndarray, n_max: int):
    ns = coeffs.shape[-1]
    # |K| >= 2 n_max is one contiguous block in FFT order
    block = coeffs[..., 2 * n_max:ns - 2 * n_max + 1]
    tail = np.sqrt(np.max(np.square(block.real) + np.square(block.imag), initial=0.0))
    if tail > TRUNCATION_TOL:
        warnings.warn(
            f"open-channel Fourier tail beyond |K| = 2*n_max = {2 * n_max} exceeds {TRUNCATION_TOL:g}; "
            "increase n_max or the sample count",
            TruncationWarning,
            stacklevel=3,
        )


def _band_matrix(coeffs: np.ndarray, n_max: int, offset: int = 0) -> np.ndarray:
    """Arrange per-channel coefficient rows c[..., N, K] into M[..., M, N] = c[..., N, M - N - offset]."""
    idx = np.arange(-n_max, n_max + 1)
    kk = idx[:, None] - idx[None, :] - offset
    return coeffs[..., idx[None, :] + n_max, kk % coeffs.shape[-1]]


@dataclass(frozen=True, eq=False)
class LayerBasis:
    """Floquet modes of one region on a given channel grid.

    ``coeff_plus[M, N] = B_{M-N}(+p_N)`` and ``coeff_minus`` likewise for -p_N.
    ``drive_plus[M, N]`` is the harmonic M - N of A(t) exp(i Phi), i.e.
    ``sum_n b_n B_{M-N-n}``, which enters the derivative matching condition.
    Closed-channel columns are stored normalised to unit peak modulus; the
    factors removed are kept in ``log_scale`` (natural log, shape (2, size)).
    """

    region: Region
    grid: ChannelGrid
    ponderomotive: float
    momenta: np.ndarray
    open: np.ndarray
    coeff_plus: np.ndarray
    coeff_minus: np.ndarray
    drive_plus: np.ndarray
    drive_minus: np.ndarray
    log_scale: np.ndarray
    vector_potential: VectorPotential
    parseval: np.ndarray

    @property
    def mass(self) -> float:
        return self.region.mass

    @property
    def b(self) -> np.ndarray:
        """Fourier coefficients b_n of this region's A(t), FFT order."""
        return self.vector_potential.coeffs

    @property
    def threshold(self) -> np.ndarray:
        return self.momenta == 0

    @property
    def B_plus(self) -> np.ndarray:
        return self.coeff_plus * np.exp(self.log_scale[0])[None, :]

    @property
    def B_minus(self) -> np.ndarray:
        return self.coeff_minus * np.exp(self.log_scale[1])[None, :]


def _quantize(x: float) -> int:
    return int(round(x * 1e14))


class _BasisCache:
    """Bounded LRU map from quantised region keys to :class:`LayerBasis`.

    Insertion is idempotent: when two callers race on one key the first
    stored object wins and both get it back.
    """

    def __init__(self, maxsize: int = 16384):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key):
        with self._lock:
            value = self._data.get(key)
            if value is None:
                self.misses += 1
            else:
                self.hits += 1
                self._data.move_to_end(key)
            return value

    def put(self, key, value):
        with self._lock:
            existing = self._data.get(key)
            if existing is not None:
                return existing
            self._data[key] = value
            if len(self._data) > self.maxsize:
                self._data.popitem(last=False)
            return value

    def clear(self):
        with self._lock:
            self._data.clear()
            self.hits = self.misses = 0

    def __len__(self):
        return len(self._data)


_cache = _BasisCache()


def clear_basis_cache():
    _cache.clear()
    _drive.cache_clear()


def basis_cache_info() -> dict:
    return {"size": len(_cache), "hits": _cache.hits, "misses": _cache.misses}


def _region_key(region: Region):
    return (_quantize(region.mass), _quantize(region.potential), _quantize(region.field_scale))


def build_layer_basis(grid: ChannelGrid, region: Region, waveform: Waveform, n_samples: int | None = None) -> LayerBasis:
    """Momenta, ponderomotive shift and B coefficients for ``region``.

    Results are memoised on (mass, potential, field multiplier) quantised to
    1e-14 together with the grid, waveform and sample count, so the many
    identical slabs of a staircase share one object.
    """
    return build_layer_bases(grid, [region], waveform, n_samples)[0]


def build_layer_bases(grid: ChannelGrid, regions, waveform: Waveform, n_samples: int | None = None) -> list[LayerBasis]:
    """:func:`build_layer_basis` for many regions at once.

    Cache misses sharing a mass and field multiplier are evaluated together
    as one array computation.
    """
    if n_samples is None:
        n_samples = default_time_samples(grid.n_max)
    keys = [(*_region_key(r), grid, waveform, n_samples) for r in regions]
    found = {}
    todo: dict = {}
    for key, reg in zip(keys, regions):
        group = todo.setdefault((key[0], key[2]), {})
        if key in found or key[1] in group:
            continue
        hit = _cache.get(key)
        if hit is not None:
            found[key] = hit
        else:
            # the first region seen for a key supplies the exact values
            group[key[1]] = reg
    # bound the working arrays to roughly 2**21 complex samples per batch
    chunk = max(1, (1 << 21) // (2 * grid.size * n_samples))
    for (mkey, skey), group in todo.items():
        vkeys = list(group)
        first = group[vkeys[0]] if vkeys else None
        for lo in range(0, len(vkeys), chunk):
            part = vkeys[lo:lo + chunk]
            built = _compute_bases(grid, first.mass, np.array([group[v].potential for v in part]),
                                   first.field_scale, waveform, n_samples)
            for vk, basis in zip(part, built):
                key = (mkey, vk, skey, grid, waveform, n_samples)
                found[key] = _cache.put(key, basis)
    return [found[k] for k in keys]


#: b_n below this fraction of max |b_n| are treated as zero when A(t) is sparse in frequency.
_SPARSE_B_TOL = 1e-14


@lru_cache(maxsize=512)
def _drive(waveform: Waveform, scale: float, mass: float, n_samples: int):
    """A(t), the q-independent phase pieces and the support of b_n for one (waveform, m, field multiplier)."""
    vp = vector_potential_samples(waveform, scale, n_samples)
    linear, quadratic = _phase_parts(vp, mass)
    b = vp.coeffs
    support = np.flatnonzero(np.abs(b) > _SPARSE_B_TOL * max(np.max(np.abs(b)), 1e-300))
    sparse = (support, b[support]) if 0 < len(support) <= 8 else None
    return vp, linear, np.exp(1j * quadratic), sparse


def _compute_bases(grid: ChannelGrid, mass: float, potentials: np.ndarray, scale: float,
                   waveform: Waveform, n_samples: int) -> list[LayerBasis]:
    vp, linear, e_quad, sparse = _drive(waveform, scale, mass, n_samples)
    u = ELECTRON_CHARGE**2 * vp.mean_square / (2.0 * mass)
    regions = [Region(mass, float(v), math.inf, scale) for v in potentials]
    arg = 2.0 * mass * (grid.channel_energies[None, :] - potentials[:, None] - u)
    is_open = arg > 0
    root = np.sqrt(np.abs(arg))
    p = np.where(is_open, root, 1j * root)
    size, nr = grid.size, len(regions)
    if vp.mean_square == 0.0:
        eye = np.eye(size, dtype=complex)
        zero = np.zeros((size, size), dtype=complex)
        return [LayerBasis(r, grid, 0.0, p[i], is_open[i], eye, eye, zero, zero, np.zeros((2, size)), vp,
                           np.ones((2, size))) for i, r in enumerate(regions)]

    # exp(i Phi) = exp(i q linear) exp(i quadratic) with q = +-p; open channels give
    # conjugate pairs, closed ones real exponentials normalised to unit peak
    wave = np.empty((nr, 2, size, n_samples), dtype=complex)
    shift = np.zeros((nr, 2, size))
    ro, co = np.nonzero(is_open)
    if len(ro):
        ang = root[ro, co][:, None] * linear[None, :]
        osc = np.empty(ang.shape, dtype=complex)
        parts = osc.view(float).reshape(ang.shape + (2,))
        np.cos(ang, out=parts[..., 0])
        np.sin(ang, out=parts[..., 1])
        wave[ro, 0, co] = osc
        wave[ro, 1, co] = osc.conj()
    rc, cc = np.nonzero(~is_open)
    if len(rc):
        kl = root[rc, cc][:, None] * linear[None, :]
        s_plus, s_minus = np.max(-kl, axis=1), np.max(kl, axis=1)
        wave[rc, 0, cc] = np.exp(-kl - s_plus[:, None])
        wave[rc, 1, cc] = np.exp(kl - s_minus[:, None])
        shift[rc, 0, cc] = s_plus
        shift[rc, 1, cc] = s_minus
    wave *= e_quad
    coeffs = np.fft.ifft(wave, axis=-1)
    nm = grid.n_max
    band_c = _band_matrix(coeffs, nm)
    if sparse is None:
        wave *= vp.values
        band_d = _band_matrix(np.fft.ifft(wave, axis=-1), nm)
    else:
        # exact cyclic convolution of the two spectra, evaluated on the band only
        band_d = sum(bn * _band_matrix(coeffs, nm, n) for n, bn in zip(*sparse))
    flat = coeffs.view(float)
    parseval = np.einsum("...i,...i->...", flat, flat) * np.exp(2 * shift)
    if len(ro):
        _check_tail(coeffs[ro, :, co].reshape(-1, n_samples), grid.n_max)
    return [
        LayerBasis(r, grid, u, p[i], is_open[i], band_c[i, 0], band_c[i, 1], band_d[i, 0], band_d[i, 1],
                   shift[i], vp, parseval[i])
        for i, r in enumerate(regions)
    ]


def bessel_series_B(k, alpha: float, beta: float, phase: float = 0.0, tol: float = 1e-17, max_terms: int = 10000):
    """Oracle for B_K of exp(i [alpha sin(wt+phi) + beta sin(2wt+2phi)]) via generalized Bessel sums.

    With exp(i z sin x) = sum_n J_n(z) exp(i n x), the coefficient of
    exp(-i K w t) is ``sum_l J_{-K-2l}(alpha) J_l(beta)`` times exp(-i K phi).
    The l range grows until the added terms fall below ``tol``.
    """
    k = np.atleast_1d(np.asarray(k))
    lmax = int(abs(beta) + 10 * abs(beta) ** (1 / 3) + 20)
    total = None
    while lmax <= max_terms:
        ls = np.arange(-lmax, lmax + 1)
        terms = special.jv(-k[:, None] - 2 * ls[None, :], alpha) * special.jv(ls[None, :], beta)
        total = terms.sum(axis=1)
        edge = np.max(np.abs(terms[:, [0, -1]]))
        if edge < tol:
            break
        lmax *= 2
    return total * np.exp(-1j * k * phase)
