import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floquet_tunnel.cascade import (
    MAX_ENTRY_GUARD,
    ScatterMatrix,
    amplitudes_from_transfer,
    cascade_device,
    device_bases,
    device_sections,
    identity_scatter,
    propagator_to_scatter,
    scatter_to_transfer,
    star,
    transfer_product_device,
    transfer_to_scatter,
)
from floquet_tunnel.floquet import ChannelGrid
from floquet_tunnel.interfaces import BlockMatrix, interface_transfer, propagator
from floquet_tunnel.model import Device, Region, Waveform, discretize_stark
from floquet_tunnel.observables import probabilities, solve

from conftest import A, MEV, triple


def _unitary_scatter(seed, n):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(2 * n, 2 * n)) + 1j * rng.normal(size=(2 * n, 2 * n))
    q, r = np.linalg.qr(z)
    return ScatterMatrix.from_full(q * (np.diag(r) / np.abs(np.diag(r))))


@settings(max_examples=40, deadline=None)
@given(seeds=st.tuples(st.integers(0, 2**31), st.integers(0, 2**31), st.integers(0, 2**31)),
       n=st.integers(1, 5))
def test_star_associative(seeds, n):
    a, b, c = (_unitary_scatter(s, n) for s in seeds)
    left = star(c, star(b, a))
    right = star(star(c, b), a)
    np.testing.assert_allclose(left.full, right.full, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 5))
def test_star_identity_and_unitarity(seed, n):
    s = _unitary_scatter(seed, n)
    e = identity_scatter(n)
    np.testing.assert_allclose(star(e, s).full, s.full, atol=1e-12)
    np.testing.assert_allclose(star(s, e).full, s.full, atol=1e-12)
    both = star(s, _unitary_scatter(seed + 1, n)).full
    np.testing.assert_allclose(both.conj().T @ both, np.eye(2 * n), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 4))
def test_scatter_transfer_round_trip(seed, n):
    s = _unitary_scatter(seed, n)
    back = transfer_to_scatter(scatter_to_transfer(s))
    np.testing.assert_allclose(back.full, s.full, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seeds=st.tuples(st.integers(0, 2**31), st.integers(0, 2**31)), n=st.integers(1, 4))
def test_star_matches_transfer_product(seeds, n):
    # the star product is the composition that the transfer-matrix product describes
    a, b = (_unitary_scatter(s, n) for s in seeds)
    ta, tb = scatter_to_transfer(a), scatter_to_transfer(b)
    expect = transfer_to_scatter(BlockMatrix.from_full(tb.full @ ta.full))
    np.testing.assert_allclose(star(b, a).full, expect.full, atol=1e-8)


def test_star_minus_plus_factor_order():
    # with non-commuting blocks the transmission uses (1 - d A)^-1, not (1 - A d)^-1
    a, b = _unitary_scatter(7, 3), _unitary_scatter(8, 3)
    got = star(b, a)
    d, A_ = a.mm, b.pp
    t = b.mp @ np.linalg.inv(np.eye(3) - d @ A_) @ a.mp
    np.testing.assert_allclose(got.mp, t, atol=1e-12)
    wrong = b.mp @ np.linalg.inv(np.eye(3) - A_ @ d) @ a.mp
    assert np.max(np.abs(wrong - t)) > 1e-3


def test_propagator_scatter(omega70):
    g = ChannelGrid(float(MEV(50.0)), omega70, 2)
    b = device_bases(triple(waveform=Waveform.monochromatic(omega70, 0.1)), g)[2]
    p = propagator(b, 7.0)
    s = propagator_to_scatter(p)
    np.testing.assert_array_equal(s.pp, 0)
    np.testing.assert_allclose(np.diag(s.mp), p.factors)
    # two slabs compose to one
    np.testing.assert_allclose(star(s, s).full, propagator_to_scatter(propagator(b, 14.0)).full, atol=1e-14)
    # zero width is neutral
    np.testing.assert_allclose(propagator_to_scatter(propagator(b, 0.0)).full, identity_scatter(5).full)


def test_sections_match_unbatched(omega70):
    dev = discretize_stark(triple(waveform=Waveform.monochromatic(omega70, 0.1)), -0.23e-4, 29)
    g = ChannelGrid(float(MEV(120.0)), omega70, 3)
    bases = device_bases(dev, g)
    sec = device_sections(dev, bases)
    xs = dev.interface_positions
    for i in (0, 1, 13, len(bases) - 2):
        s = transfer_to_scatter(interface_transfer(bases[i], bases[i + 1], i))
        if i > 0:
            s = star(s, propagator_to_scatter(propagator(bases[i], xs[i] - xs[i - 1])))
        np.testing.assert_allclose(sec[i].full, s.full, atol=1e-12)


def _transfer_totals(dev, energy, n_max):
    g = ChannelGrid(energy, dev.waveform.floquet_frequency or 1.0, n_max)
    bases = device_bases(dev, g)
    R, T = amplitudes_from_transfer(transfer_product_device(dev, g, bases=bases), g.centre)
    return probabilities(R, T, bases[0], bases[-1])


def test_cascade_agrees_with_transfer_product(omega70):
    dev = triple(waveform=Waveform.monochromatic(omega70, 0.05))
    for e in (40.0, 150.0, 300.0):
        a = solve(dev, float(MEV(e)), 3)
        b = _transfer_totals(dev, float(MEV(e)), 3)
        np.testing.assert_allclose(a.p_transmit, b.p_transmit, atol=1e-10)
        np.testing.assert_allclose(a.p_reflect, b.p_reflect, atol=1e-10)


def test_split_slab_is_invisible(omega70):
    m1, m2, v = 0.0667, 0.0918, float(MEV(237.0))
    wf = Waveform.monochromatic(omega70, 0.1)
    one = Device.from_regions([Region(m1, 0.0), Region(m2, v, float(A(30.0))), Region(m1, 0.0)], waveform=wf)
    three = Device.from_regions([Region(m1, 0.0)] + [Region(m2, v, float(A(10.0)))] * 3 + [Region(m1, 0.0)],
                                waveform=wf)
    for e in (60.0, 250.0):
        a, b = solve(one, float(MEV(e)), 4), solve(three, float(MEV(e)), 4)
        np.testing.assert_allclose(a.p_transmit, b.p_transmit, atol=1e-12)
        np.testing.assert_allclose(a.p_reflect, b.p_reflect, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(n=st.sampled_from([15, 29, 57, 141]), e=st.floats(5.0, 400.0))
def test_zero_field_staircase_is_exact(n, e):
    # with F = 0 every slab is a piece of an original layer
    dev = triple()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sd = discretize_stark(dev, 0.0, n)
    assert solve(sd, float(MEV(e))).total_transmission == pytest.approx(
        solve(dev, float(MEV(e))).total_transmission, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(shift=st.floats(-500.0, 500.0), e=st.floats(5.0, 400.0))
def test_translation_invariance(shift, e):
    dev = triple(a=70.0, b=20.0)
    assert solve(dev.translated(shift), float(MEV(e))).total_transmission == pytest.approx(
        solve(dev, float(MEV(e))).total_transmission, abs=1e-11)


def test_mirror_and_reciprocity_static():
    dev = discretize_stark(triple(a=40.0, b=30.0), 0.2e-4, 57)
    v_right = dev.regions[-1].potential
    for e in (30.0, 110.0, 270.0):
        energy = float(MEV(e))
        a = solve(dev, energy)
        # the mirrored stack, entered from its right, is the same experiment
        assert solve(dev.mirrored(), energy).total_transmission == pytest.approx(a.total_transmission, abs=1e-12)
        if energy > v_right:
            # time-reversal symmetry: a static device transmits equally from both sides
            c = solve(dev.with_incidence("right"), energy)
            assert c.total_transmission == pytest.approx(a.total_transmission, abs=1e-12)
            assert c.unitarity_deficit < 1e-13


def test_running_entries_stay_bounded(omega70):
    dev = discretize_stark(triple(waveform=Waveform.monochromatic(omega70, 0.1), field_profile="confined"),
                           -0.23e-4, 281)
    g = ChannelGrid(float(MEV(100.0)), omega70, 24)
    track = []
    S = cascade_device(dev, g, track=track)
    assert len(track) == 281
    assert max(track) < MAX_ENTRY_GUARD
    res = solve(dev, float(MEV(100.0)), 24)
    assert res.unitarity_deficit < 1e-12
    assert np.all(np.isfinite(S.full))


def test_transfer_amplitudes_nan_on_overflow():
    T = BlockMatrix.from_full(np.full((2, 2), np.inf, dtype=complex))
    r, t = amplitudes_from_transfer(T, 0)
    assert np.all(np.isnan(r)) and np.all(np.isnan(t))
