import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfdac_sim.metrics import fit_exponential_decay, fit_rb_decay
from rfdac_sim.qubit_sim import TransmonModel, average_gate_fidelity
from rfdac_sim.qubit_sim.fidelity import rz
from rfdac_sim.qubit_sim.sequences import (GateSet, analytic_echo_t2, clifford_group, clifford_inverse, depolarize,
                                           ideal_composite, idle_superop, rb_single_qubit, simulated_gate_set,
                                           spin_echo, unitary_superop, virtual_z)

Q2 = TransmonModel(2, 5.3505e9)


def test_clifford_group_has_24_distinct_elements():
    g = clifford_group()
    assert len(g) == 24
    for c in g:
        assert np.allclose(c.unitary.conj().T @ c.unitary, np.eye(2), atol=1e-12)
    # pairwise distinct up to global phase
    for a in g:
        same = [b.index for b in g if abs(np.trace(a.unitary.conj().T @ b.unitary)) > 2 - 1e-9]
        assert same == [a.index]
    assert g[0].ops == ()


def test_clifford_closure():
    g = clifford_group()
    for a in g:
        for b in g:
            p = a.unitary @ b.unitary
            assert any(abs(np.trace(c.unitary.conj().T @ p)) > 2 - 1e-9 for c in g)


@given(st.lists(st.integers(0, 23), max_size=40))
def test_inverse_restores_identity(seq):
    u = clifford_group()[clifford_inverse(seq)].unitary @ ideal_composite(seq)
    assert abs(np.trace(u)) == pytest.approx(2.0, abs=1e-9)


@given(st.floats(-2 * math.pi, 2 * math.pi))
def test_virtual_z_is_rz_on_qubit_levels(theta):
    v = virtual_z(theta, 3)
    assert average_gate_fidelity(v[:2, :2], rz(theta)) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(np.abs(np.diag(v)), 1.0)


@settings(max_examples=30)
@given(st.floats(0, 1), st.sampled_from([2, 3]), st.integers(0, 1000))
def test_depolarize_is_trace_preserving(p, d, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    out = (depolarize(p, d) @ rho.reshape(-1, order="F")).reshape(d, d, order="F")
    assert abs(np.trace(out) - 1) < 1e-12
    assert np.allclose(out, out.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(out).min() >= -1e-12


def test_depolarize_examples():
    rho = np.diag([1.0, 0.0]).astype(complex)
    out = (depolarize(0.0, 2) @ rho.reshape(-1, order="F")).reshape(2, 2, order="F")
    assert np.allclose(out, np.eye(2) / 2)
    assert np.allclose(depolarize(1.0, 3), np.eye(9))
    # qubit-leakage coherences shrink by p, the level-2 block is untouched
    rho = np.full((3, 3), 1 / 3, complex)
    out = (depolarize(0.5, 3) @ rho.reshape(-1, order="F")).reshape(3, 3, order="F")
    assert out[0, 2] == pytest.approx(1 / 6) and out[2, 2] == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        depolarize(1.2, 2)


def test_ideal_rb_survival_is_one():
    lengths, y = rb_single_qubit(Q2, None, [0, 1, 10, 50], 5, seed=1)
    assert lengths.tolist() == [0, 1, 10, 50]
    assert y.shape == (4, 5)
    assert np.allclose(y, 1.0, atol=1e-12)


def test_gate_set_words_reproduce_clifford_unitaries():
    gs = GateSet.ideal(2)
    for c in clifford_group():
        s = np.eye(4, dtype=complex)
        for name in c.ops:
            s = gs.primitive(name) @ s
        assert np.allclose(s, unitary_superop(c.unitary), atol=1e-12)


def test_rb_deterministic_per_seed():
    a = rb_single_qubit(Q2, None, [1, 5, 20], 4, seed=7, depolarizing_p=0.99)[1]
    b = rb_single_qubit(Q2, None, [1, 5, 20], 4, seed=7, depolarizing_p=0.99)[1]
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        rb_single_qubit(Q2, GateSet.ideal(3), [1], 1, seed=0)
    with pytest.raises(ValueError):
        rb_single_qubit(Q2, None, [-1], 1, seed=0)


def test_rb_depolarizing_recovery():
    m = np.array([1, 10, 25, 50, 100, 200, 400])
    lengths, y = rb_single_qubit(Q2, None, m, 30, seed=3, depolarizing_p=0.995)
    f = fit_rb_decay(lengths, y)
    assert f.p == pytest.approx(0.995, abs=1e-3)


def test_simulated_gate_set_is_near_ideal():
    gs = simulated_gate_set(Q2)
    assert np.allclose(gs.x90, GateSet.ideal(2).x90, atol=1e-5)
    assert np.allclose(gs.primitive("Z90"), unitary_superop(virtual_z(math.pi / 2, 2)))
    with pytest.raises(KeyError):
        gs.primitive("Y90")


def test_idle_superop_t1_decay():
    m = Q2.with_decoherence(40e-6, None)
    s = idle_superop(m, 20e-6)
    rho = (s @ np.diag([0.0, 1.0]).astype(complex).reshape(-1, order="F")).reshape(2, 2, order="F")
    assert rho[1, 1].real == pytest.approx(math.exp(-0.5), rel=1e-12)


def test_echo_without_decoherence_does_not_decay():
    _, y = spin_echo(Q2, np.linspace(0, 40e-6, 9))
    # X90 X180 X90 about one axis returns to the ground state
    assert np.allclose(y, y[0], atol=1e-9)
    assert y[0] < 1e-6


def test_echo_refocuses_static_detuning():
    delays = np.linspace(0, 40e-6, 9)
    _, y0 = spin_echo(Q2, delays)
    _, y1 = spin_echo(Q2, delays, detuning_hz=250e3)
    assert np.allclose(y1, y0, atol=1e-9)


def test_echo_matches_analytic_t2():
    t1, tphi = 60e-6, 40e-6
    delays = np.linspace(0, 150e-6, 61)
    _, y = spin_echo(Q2.with_decoherence(t1, tphi), delays, phase_rate_hz=50e3)
    f = fit_exponential_decay(delays, y, kind="T2_echo", oscillating=True, freq_guess_hz=50e3)
    assert f.tau_s == pytest.approx(analytic_echo_t2(t1, tphi), rel=0.03)


def test_analytic_echo_t2_examples():
    assert analytic_echo_t2(None, None) == math.inf
    assert analytic_echo_t2(50e-6, None) == pytest.approx(100e-6)
    assert analytic_echo_t2(60e-6, 40e-6) == pytest.approx(1 / (1 / 120e-6 + 1 / 40e-6))
    with pytest.raises(ValueError):
        spin_echo(Q2, [-1e-6, 0.0])
