import math

import numpy as np
import pytest

from floquet_tunnel.floquet import ChannelGrid, build_layer_basis, build_layer_bases
from floquet_tunnel.interfaces import (
    RCOND_MIN,
    BlockMatrix,
    ConditioningError,
    interface_transfer,
    interface_transfers,
    matching_matrix,
    propagator,
    solve_checked,
)
from floquet_tunnel.model import Region, Waveform

from conftest import MEV


def test_block_matrix_round_trip(rng):
    full = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    bm = BlockMatrix.from_full(full)
    assert bm.size == 3
    np.testing.assert_array_equal(bm.full, full)
    np.testing.assert_array_equal(bm.pm, full[:3, 3:])
    stack = BlockMatrix.from_full(np.stack([full, 2 * full]))
    assert stack[1].allclose(BlockMatrix.from_full(2 * full), atol=0)
    assert bm.max_abs == pytest.approx(np.max(np.abs(full)))


def test_solve_checked_accuracy_and_rejection(rng):
    a = rng.normal(size=(5, 5)) + 5 * np.eye(5)
    b = rng.normal(size=(5, 2))
    np.testing.assert_allclose(a @ solve_checked(a, b, "a"), b, atol=1e-13)
    sing = np.ones((4, 4))
    with pytest.raises(ConditioningError, match="my matrix"):
        solve_checked(sing, np.ones((4, 1)), "my matrix")
    near = np.diag([1.0, 1.0, 1e-15])
    with pytest.raises(ConditioningError, match="rcond"):
        solve_checked(near, np.ones((3, 1)), "near")
    ok = np.diag([1.0, 1.0, 10 * RCOND_MIN])
    solve_checked(ok, np.ones((3, 1)), "ok")


def test_solve_checked_stack_reports_index(rng):
    mats = np.stack([np.eye(3), np.eye(3), np.zeros((3, 3))])
    with pytest.raises(ConditioningError, match="member 2"):
        solve_checked(mats, np.ones((3, 3, 1)), lambda i: f"member {i}")


def _fresnel(e, m1, v1, m2, v2):
    k1, k2 = math.sqrt(2 * m1 * (e - v1)), math.sqrt(2 * m2 * (e - v2))
    u1, u2 = k1 / m1, k2 / m2
    r = (u1 - u2) / (u1 + u2)
    t = 2 * u1 / (u1 + u2)
    return r, t, (u2 / u1) * t**2


def test_single_step_matches_fresnel():
    m1, m2 = 0.0667, 0.0918
    v2 = float(MEV(100.0))
    e = float(MEV(180.0))
    g = ChannelGrid(e, 0.0, 0)
    left = build_layer_basis(g, Region(m1, 0.0), Waveform.off())
    right = build_layer_basis(g, Region(m2, v2), Waveform.off())
    T = interface_transfer(left, right)
    # left-incident wave: C_R^- = 0 gives r = -T.mp / T.mm and t = T.pp + T.pm r
    r = -T.mp[0, 0] / T.mm[0, 0]
    t = T.pp[0, 0] + T.pm[0, 0] * r
    r_ref, t_ref, tt = _fresnel(e, m1, 0.0, m2, v2)
    assert r == pytest.approx(r_ref, abs=1e-14)
    assert t == pytest.approx(t_ref, abs=1e-14)
    assert abs(r) ** 2 + tt == pytest.approx(1.0, abs=1e-14)


def test_matching_matrix_layout(omega70):
    g = ChannelGrid(float(MEV(120.0)), omega70, 2)
    b = build_layer_basis(g, Region(0.0667, 0.0), Waveform.monochromatic(omega70, 0.05))
    mm = matching_matrix(b)
    n = g.size
    np.testing.assert_array_equal(mm[:n, :n], b.B_plus)
    np.testing.assert_allclose(mm[n:, :n], (b.B_plus * b.momenta + b.drive_plus * np.exp(b.log_scale[0])) / 0.0667)
    # with the field off the lower blocks are diag(+-p/m)
    b0 = build_layer_basis(g, Region(0.0667, 0.0), Waveform.off())
    np.testing.assert_allclose(matching_matrix(b0)[n:, n:], -np.diag(b0.momenta) / 0.0667)


def test_transfer_same_region_is_identity(omega70):
    g = ChannelGrid(float(MEV(30.0)), omega70, 3)
    b = build_layer_basis(g, Region(0.0918, float(MEV(237.0))), Waveform.monochromatic(omega70, 0.1))
    np.testing.assert_allclose(interface_transfer(b, b).full, np.eye(2 * g.size), atol=1e-12)


def test_transfer_inverse_pair(omega70):
    g = ChannelGrid(float(MEV(90.0)), omega70, 3)
    wf = Waveform.monochromatic(omega70, 0.1)
    a = build_layer_basis(g, Region(0.0667, 0.0), wf)
    b = build_layer_basis(g, Region(0.0918, float(MEV(237.0)), 1.0, 0.5), wf)
    prod = interface_transfer(b, a).full @ interface_transfer(a, b).full
    np.testing.assert_allclose(prod, np.eye(2 * g.size), atol=1e-10)


def test_normalisation_only_rescales_closed_columns(omega70):
    g = ChannelGrid(float(MEV(90.0)), omega70, 3)
    wf = Waveform.monochromatic(omega70, 0.1)
    a = build_layer_basis(g, Region(0.0667, 0.0), wf)
    b = build_layer_basis(g, Region(0.0918, float(MEV(237.0))), wf)
    raw = interface_transfer(a, b, normalized=False).full
    scl = interface_transfer(a, b, normalized=True).full
    sa, sb = np.exp(np.concatenate(a.log_scale)), np.exp(np.concatenate(b.log_scale))
    # coefficients scale inversely to the columns: c_norm = s * c_raw
    np.testing.assert_allclose(scl @ np.diag(sa), np.diag(sb) @ raw, rtol=1e-9, atol=1e-9)


def test_interface_transfers_stacked(omega70):
    g = ChannelGrid(float(MEV(150.0)), omega70, 2)
    wf = Waveform.monochromatic(omega70, 0.1)
    regs = [Region(0.0667, 0.0), Region(0.0918, float(MEV(237.0)), 1.0), Region(0.0667, 0.0, 1.0),
            Region(0.0918, float(MEV(237.0)), 1.0), Region(0.0667, float(MEV(-5.0)))]
    bases = build_layer_bases(g, regs, wf)
    stack = interface_transfers(bases)
    for i in range(len(regs) - 1):
        np.testing.assert_allclose(stack[i].full, interface_transfer(bases[i], bases[i + 1]).full, atol=1e-12)


def test_singular_matching_raises_with_region(omega70):
    # xi = 2 inside a barrier: closed Volkov modes become numerically dependent
    g = ChannelGrid(float(MEV(100.0)), omega70, 4)
    wf = Waveform.monochromatic(omega70, 2.0)
    a = build_layer_basis(g, Region(0.0667, 0.0, 1.0, 0.0), wf)
    b = build_layer_basis(g, Region(0.0918, float(MEV(237.0)), 1.0, 0.5), wf)
    with pytest.raises(ConditioningError, match="region 1"):
        interface_transfer(a, b, 0)


def test_propagator(omega70):
    g = ChannelGrid(float(MEV(30.0)), omega70, 2)
    b = build_layer_basis(g, Region(0.0667, 0.0), Waveform.off())
    p = propagator(b, 12.0)
    np.testing.assert_allclose(p.factors, np.exp(1j * b.momenta * 12.0))
    assert np.all(np.abs(p.factors[~b.open]) < 1) and np.allclose(np.abs(p.factors[b.open]), 1)
    both = p.compose(propagator(b, 3.0))
    np.testing.assert_allclose(both.factors, propagator(b, 15.0).factors, atol=1e-15)
    assert propagator(b, 0.0).factors.tolist() == [1.0] * 5
    with pytest.raises(ValueError):
        propagator(b, -1.0)
