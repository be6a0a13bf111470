"""Matching matrices at x = 0, interface transfer matrices and slab propagators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from .floquet import LayerBasis
from .model import ELECTRON_CHARGE

__all__ = [
    "BlockMatrix",
    "Propagator",
    "ConditioningError",
    "matching_matrix",
    "interface_transfer",
    "interface_transfers",
    "solve_checked",
    "propagator",
    "RCOND_MIN",
]

#: Reciprocal condition numbers below this are treated as singular.
RCOND_MIN = 1e-13


class ConditioningError(np.linalg.LinAlgError):
    """A matrix that must be inverted is numerically singular."""


@dataclass(frozen=True, eq=False)
class BlockMatrix:
    """2x2 block matrix over channels, blocks named ++, +-, -+, -- (row sign first).

    Blocks may carry leading stack dimensions; most helpers broadcast over them.
    """

    pp: np.ndarray
    pm: np.ndarray
    mp: np.ndarray
    mm: np.ndarray

    @classmethod
    def from_full(cls, full: np.ndarray) -> "BlockMatrix":
        n = full.shape[-1] // 2
        return cls(full[..., :n, :n], full[..., :n, n:], full[..., n:, :n], full[..., n:, n:])

    @property
    def full(self) -> np.ndarray:
        top = np.concatenate([self.pp, self.pm], axis=-1)
        return np.concatenate([top, np.concatenate([self.mp, self.mm], axis=-1)], axis=-2)

    @property
    def size(self) -> int:
        return self.pp.shape[-1]

    def __getitem__(self, i) -> "BlockMatrix":
        """Pick one member of a stacked block matrix."""
        return type(self)(self.pp[i], self.pm[i], self.mp[i], self.mm[i])

    @property
    def max_abs(self) -> float:
        return max(float(np.max(np.abs(b))) for b in (self.pp, self.pm, self.mp, self.mm))

    def allclose(self, other: "BlockMatrix", atol=1e-12, rtol=0.0) -> bool:
        return np.allclose(self.full, other.full, atol=atol, rtol=rtol)


def _norm1(mat: np.ndarray) -> np.ndarray:
    return np.max(np.sum(np.abs(mat), axis=-2), axis=-1)


def solve_checked(mat: np.ndarray, rhs: np.ndarray, what) -> np.ndarray:
    """Solve ``mat @ x = rhs`` (stacks allowed), refusing numerically singular systems.

    The inverse comes out of the same factorisation as an extra right-hand
    side, which gives the exact 1-norm condition number.  ``what`` is a label,
    or for stacks a callable mapping the stack index to one.
    """
    n = mat.shape[-1]
    k = rhs.shape[-1]
    eye = np.broadcast_to(np.eye(n, dtype=mat.dtype), mat.shape)
    with np.errstate(all="ignore"):
        try:
            sol = np.linalg.solve(mat, np.concatenate([rhs, eye], axis=-1))
        except np.linalg.LinAlgError:
            sol = None
        if sol is not None:
            rcond = 1.0 / (_norm1(mat) * _norm1(sol[..., k:]))
    if sol is None:
        rcond = np.array([np.linalg.cond(m, 1) ** -1 if np.all(np.isfinite(m)) else np.nan
                          for m in mat.reshape(-1, n, n)]).reshape(mat.shape[:-2])
    bad = np.flatnonzero(~(np.asarray(rcond) >= RCOND_MIN))
    if bad.size:
        i = int(bad[0])
        label = what(i) if callable(what) else what
        r = float(np.ravel(rcond)[i])
        raise ConditioningError(f"{label} is numerically singular (rcond = {r:.2e})")
    return sol[..., :k]


def matching_matrix(basis: LayerBasis, normalized: bool = False) -> np.ndarray:
    """[[B+, B-], [B'+, B'-]] at x = 0.

    Rows are harmonics M, columns are channels N of the + then - modes.  The
    lower blocks are the harmonics of (1/m)(-i d/dx - e A) applied to each
    mode.  ``normalized`` uses the closed-channel columns scaled to unit peak
    modulus, which is what the cascade works with.
    """
    if normalized:
        bp, bm, dp, dm = basis.coeff_plus, basis.coeff_minus, basis.drive_plus, basis.drive_minus
    else:
        sp, sm = np.exp(basis.log_scale)
        bp, bm = basis.coeff_plus * sp, basis.coeff_minus * sm
        dp, dm = basis.drive_plus * sp, basis.drive_minus * sm
    p, m, e = basis.momenta, basis.mass, ELECTRON_CHARGE
    n = len(p)
    out = np.empty((2 * n, 2 * n), dtype=complex)
    out[:n, :n] = bp
    out[:n, n:] = bm
    out[n:, :n] = (bp * p - e * dp) / m
    out[n:, n:] = (-bm * p - e * dm) / m
    return out


def _label(index):
    return f"region {index + 1}" if index is not None else "right-hand region"


def interface_transfer(left: LayerBasis, right: LayerBasis, index: int | None = None,
                       normalized: bool = True) -> BlockMatrix:
    """T0 = B(right, 0)^-1 B(left, 0), mapping left-region coefficients to right-region ones.

    Solved as a linear system.  With ``normalized`` (the default) closed
    channels use the rescaled columns; open-channel amplitudes are unaffected.
    ``index`` is the interface number, used in diagnostics.
    """
    if left.grid != right.grid:
        raise ValueError("bases live on different channel grids")
    sol = solve_checked(matching_matrix(right, normalized), matching_matrix(left, normalized),
                        f"matching matrix of {_label(index)}")
    return BlockMatrix.from_full(sol)


def interface_transfers(bases) -> BlockMatrix:
    """Stacked T0 for every interface of a region list, all solved in one call.

    Each distinct right-hand matching matrix is factorised once no matter
    how many interfaces it closes.
    """
    if len({b.grid for b in bases}) != 1:
        raise ValueError("bases live on different channel grids")
    uniq: dict[int, int] = {}
    mats = []
    for b in bases:
        if id(b) not in uniq:
            uniq[id(b)] = len(mats)
            mats.append(matching_matrix(b, normalized=True))
    mats = np.stack(mats)
    idx = np.array([uniq[id(b)] for b in bases])
    right_ids = idx[1:]
    # group interfaces by their right-hand basis: one factorisation per group
    order = np.argsort(right_ids, kind="stable")
    starts = np.flatnonzero(np.r_[True, np.diff(right_ids[order]) != 0])
    counts = np.diff(np.r_[starts, len(order)])
    out = np.empty((len(right_ids),) + mats.shape[1:], dtype=complex)
    n2 = mats.shape[-1]
    if np.all(counts == 1):
        out[:] = solve_checked(mats[right_ids], mats[idx[:-1]],
                               lambda i: f"matching matrix of {_label(int(i))}")
    else:
        for s0, c in zip(starts, counts):
            members = order[s0:s0 + c]
            rhs = np.concatenate([mats[idx[j]] for j in members], axis=-1)
            sol = solve_checked(mats[right_ids[members[0]]], rhs, f"matching matrix of {_label(int(members[0]))}")
            for k, j in enumerate(members):
                out[j] = sol[:, k * n2:(k + 1) * n2]
    return BlockMatrix.from_full(out)


@dataclass(frozen=True, eq=False)
class Propagator:
    """Diagonal free propagation exp(i p_N width) through a homogeneous slab."""

    width: float
    momenta: np.ndarray
    factors: np.ndarray

    def compose(self, other: "Propagator") -> "Propagator":
        return Propagator(self.width + other.width, self.momenta, self.factors * other.factors)

    def transfer(self) -> BlockMatrix:
        """Transfer-matrix form diag(exp(ipd), exp(-ipd)); overflows for deep closed channels."""
        zero = np.zeros((len(self.factors),) * 2, dtype=complex)
        with np.errstate(over="ignore", divide="ignore"):
            inv = np.exp(-1j * self.momenta * self.width)
        return BlockMatrix(np.diag(self.factors), zero, zero.copy(), np.diag(inv))


def propagator(basis: LayerBasis, width: float) -> Propagator:
    if width < 0:
        raise ValueError(f"propagation width must be non-negative, got {width}")
    return Propagator(width, basis.momenta, np.exp(1j * basis.momenta * width))
