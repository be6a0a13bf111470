"""Scattering matrices and their star-product cascade through a device.

Block naming follows the coefficient layout ``(C_i^-, C_j^+) = S (C_i^+, C_j^-)``
for a section joining region i (left) to region j (right):

    S.pp  left reflection    (r)   C_i^+ -> C_i^-
    S.mp  left transmission  (t)   C_i^+ -> C_j^+
    S.pm  right transmission (t')  C_j^- -> C_i^-
    S.mm  right reflection   (r')  C_j^- -> C_j^+
"""

from __future__ import annotations

import numpy as np

from .floquet import ChannelGrid, LayerBasis, build_layer_bases
from .interfaces import BlockMatrix, Propagator, interface_transfer, interface_transfers, propagator, solve_checked
from .model import Device

__all__ = [
    "ScatterMatrix",
    "transfer_to_scatter",
    "scatter_to_transfer",
    "propagator_to_scatter",
    "identity_scatter",
    "star",
    "cascade_device",
    "device_bases",
    "device_sections",
    "transfer_product_device",
    "amplitudes_from_transfer",
    "MAX_ENTRY_GUARD",
]

#: Loose bound on any scattering-matrix entry; exceeding it signals a numerical blow-up.
MAX_ENTRY_GUARD = 1e6


class ScatterMatrix(BlockMatrix):
    """Scattering matrix in the block layout described in the module docstring."""

    @property
    def r(self):
        return self.pp

    @property
    def t(self):
        return self.mp

    @property
    def r_prime(self):
        return self.mm

    @property
    def t_prime(self):
        return self.pm


def identity_scatter(size: int) -> ScatterMatrix:
    z = np.zeros((size, size), dtype=complex)
    eye = np.eye(size, dtype=complex)
    return ScatterMatrix(z, eye, eye.copy(), z.copy())


def transfer_to_scatter(T: BlockMatrix, index: int | None = None) -> ScatterMatrix:
    """Reorder a transfer matrix into scattering form using one factorisation of T--.

    Works on stacks of transfer matrices; ``index`` is the interface number
    of the first member and only feeds diagnostics.
    """
    base = 0 if index is None else index
    stacked = T.mm.ndim > 2

    def what(i):
        return f"T-- block at interface {base + i}" if stacked or index is not None else "T-- block"

    n = T.size
    eye = np.broadcast_to(np.eye(n, dtype=complex), T.mm.shape)
    sol = solve_checked(T.mm, np.concatenate([T.mp, eye], axis=-1), what if stacked else what(0))
    inv_mp, inv = sol[..., :n], sol[..., n:]
    return ScatterMatrix(-inv_mp, inv, T.pp - T.pm @ inv_mp, T.pm @ inv)


def scatter_to_transfer(S: BlockMatrix) -> BlockMatrix:
    mm = np.linalg.inv(S.pm)
    mp = -mm @ S.pp
    pm = S.mm @ mm
    return BlockMatrix(S.mp - pm @ S.pp, pm, mp, mm)


def propagator_to_scatter(P: Propagator) -> ScatterMatrix:
    z = np.zeros((len(P.factors),) * 2, dtype=complex)
    d = np.diag(P.factors)
    return ScatterMatrix(z, d, d.copy(), z.copy())


def star(outer: BlockMatrix, inner: BlockMatrix, index: int | None = None) -> ScatterMatrix:
    """Compose ``inner`` (the left section) with ``outer`` (the section to its right).

    All four blocks reuse one factorisation of ``1 - outer.pp @ inner.mm``; the
    transmission block uses the push-through identity
    (1 - d A)^-1 = 1 + d (1 - A d)^-1 A.
    """
    a, b, c, d = inner.pp, inner.pm, inner.mp, inner.mm
    A, B, C, D = outer.pp, outer.pm, outer.mp, outer.mm
    n = a.shape[-1]
    where = f" at interface {index}" if index is not None else ""
    x = np.eye(n) - A @ d
    sol = solve_checked(x, np.concatenate([A @ c, B], axis=-1),
                        f"multiple-reflection matrix{where} (trapped mode at this energy?)")
    x_ac, x_b = sol[..., :n], sol[..., n:]
    return ScatterMatrix(a + b @ x_ac, b @ x_b, C @ (c + d @ x_ac), D + C @ (d @ x_b))


def _prepend_slab(S: BlockMatrix, factors: np.ndarray) -> ScatterMatrix:
    """star(S, propagator_to_scatter(P)): the section S preceded by free propagation ``factors``.

    ``factors`` may be stacked along the leading axis together with ``S``.
    """
    f = factors[..., :, None]
    g = factors[..., None, :]
    return ScatterMatrix(f * S.pp * g, f * S.pm, S.mp * g, S.mm)


def device_bases(device: Device, grid: ChannelGrid, n_samples: int | None = None) -> list[LayerBasis]:
    return build_layer_bases(grid, device.regions, device.waveform, n_samples)


def device_sections(device: Device, bases: list[LayerBasis]) -> ScatterMatrix:
    """Stacked scattering matrices of (slab propagator, interface) pairs.

    Member ``i`` is interface ``i`` preceded by free propagation through
    region ``i``; member 0 is the bare first interface.
    """
    T0 = interface_transfers(bases)
    S = transfer_to_scatter(T0, 0)
    xs = np.asarray(device.interface_positions)
    size = bases[0].grid.size
    factors = np.ones((len(bases) - 1, size), dtype=complex)
    for i in range(1, len(bases) - 1):
        factors[i] = propagator(bases[i], xs[i] - xs[i - 1]).factors
    return _prepend_slab(S, factors)


def cascade_device(device: Device, grid: ChannelGrid, n_samples: int | None = None,
                   bases: list[LayerBasis] | None = None, track: list | None = None) -> ScatterMatrix:
    """Total scattering matrix of ``device``, folded left to right.

    Each interface matrix is evaluated with both neighbouring regions anchored
    at x = 0 and joined to the running result by the star product, with the
    slab propagator of the intervening region starred in between.  The edge
    phases of the two leads are dropped; they do not affect probabilities.
    ``track``, if given, receives the running max |S| entry after every step.
    """
    if bases is None:
        bases = device_bases(device, grid, n_samples)
    sections = device_sections(device, bases)
    S = sections[0]
    if track is not None:
        track.append(S.max_abs)
    for i in range(1, len(bases) - 1):
        S = star(sections[i], S, i)
        if track is not None:
            track.append(S.max_abs)
    return S


def transfer_product_device(device: Device, grid: ChannelGrid, n_samples: int | None = None,
                            bases: list[LayerBasis] | None = None) -> BlockMatrix:
    """Plain product of interface and propagator transfer matrices (reference path, unstable)."""
    if bases is None:
        bases = device_bases(device, grid, n_samples)
    with np.errstate(all="ignore"):
        T = interface_transfer(bases[0], bases[1], 0).full
        for i in range(1, len(bases) - 1):
            width = device.interface_positions[i] - device.interface_positions[i - 1]
            T = propagator(bases[i], width).transfer().full @ T
            T = interface_transfer(bases[i], bases[i + 1], i).full @ T
    return BlockMatrix.from_full(T)


def amplitudes_from_transfer(T: BlockMatrix, incident: int, incidence: str = "left"):
    """Reflection and transmission columns for a unit wave in channel ``incident``.

    Returns NaN-filled vectors if the transfer matrix has overflowed.
    """
    n = T.size
    e0 = np.zeros(n, dtype=complex)
    e0[incident] = 1.0
    with np.errstate(all="ignore"):
        try:
            if not np.all(np.isfinite(T.full)):
                raise np.linalg.LinAlgError("non-finite transfer matrix")
            if incidence == "left":
                r = -np.linalg.solve(T.mm, T.mp @ e0)
                t = T.pp @ e0 + T.pm @ r
            else:
                # C_0^+ = 0, C_L^- = e0: T.mm r = e0 and t = T.pm r
                r_left = np.linalg.solve(T.mm, e0)
                t, r = r_left, T.pm @ r_left
        except np.linalg.LinAlgError:
            nan = np.full(n, np.nan, dtype=complex)
            return nan, nan.copy()
    return r, t
