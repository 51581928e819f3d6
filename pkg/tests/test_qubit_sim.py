import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfdac_sim.pulse_lib import DragGaussian, Gaussian, envelope_value
from rfdac_sim.qubit_sim import (CalibrationError, DriveSignal, GateResult, StepSizeError, TransmonModel,
                                 TwoQubitModel, average_gate_fidelity, calibrate_amplitude, evolve, propagate,
                                 rotation_angle, write_sweep_csv, zx)
from rfdac_sim.qubit_sim.cr import best_virtual_z, zx_rate_hz
from rfdac_sim.qubit_sim.evolve import lindblad_channel
from rfdac_sim.qubit_sim.fidelity import leakage_of, rx, rz
from rfdac_sim.qubit_sim.gates import rotating_drive, solve_amplitude
from rfdac_sim.qubit_sim.models import pauli, qubit_freq_hz, transition_freqs_hz

Q2 = TransmonModel(2, 5.3505e9)
Q3 = TransmonModel(3, 5.3505e9, -330e6)
ENV = Gaussian(12e-9, 48e-9)


def test_fidelity_examples():
    x = pauli("X")
    assert average_gate_fidelity(x, x) == pytest.approx(1.0, abs=1e-15)
    assert average_gate_fidelity(np.eye(2), x) == pytest.approx(1 / 3, abs=1e-15)
    # Tr(exp(-i pi/4 ZX)) = 4 cos(pi/4), so |Tr|^2 = 8
    assert average_gate_fidelity(np.eye(4), zx(math.pi / 2)) == pytest.approx(0.6, abs=1e-15)
    with pytest.raises(ValueError):
        average_gate_fidelity(np.eye(2), np.eye(4))


@given(st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_fidelity_phase_invariant(theta, g):
    u = rx(theta)
    assert average_gate_fidelity(np.exp(1j * g) * u, u) == pytest.approx(1.0, abs=1e-12)


def test_zero_drive_is_identity():
    d = DriveSignal(np.zeros(2001), 320e9, 200e6)
    r = evolve(Q3, d)
    assert np.allclose(r.propagator, np.eye(3), atol=1e-12)
    assert r.fidelity == pytest.approx(1.0, abs=1e-12)
    d = DriveSignal(np.zeros(201), 20e9, 200e6, "rotating")
    assert np.allclose(propagate(Q2, d), np.eye(2), atol=1e-14)


def test_constant_rabi_pi_is_x():
    g, rate = 200e6, 20e9
    t_g = 40e-9
    # rotating term pi g z (a e^{..} + h.c.) gives Rabi rate g z; pi rotation needs g z t = 1/2
    z = 0.5 / (g * t_g)
    n = int(round(t_g * rate))
    d = DriveSignal(np.full(n + 1, z, complex), rate, g, "rotating")
    r = evolve(Q2, d, ideal=pauli("X"))
    assert r.fidelity > 1 - 1e-8


def test_unitarity_over_long_run():
    # 1e4 RK4 steps; per-step norm drift is (w dt)^6 / 72
    # a continuous record; a truncated Constant would end on a step discontinuity
    u = propagate(Q2, DriveSignal(np.full(20001, 0.05, complex), 20e9, 200e6, "rotating"))
    assert np.abs(u.conj().T @ u - np.eye(2)).max() < 1e-10
    u = propagate(Q3, rotating_drive(ENV, 0.1))
    assert np.abs(u.conj().T @ u - np.eye(3)).max() < 1e-6


def test_lab_frame_needs_resolution():
    d = DriveSignal(np.zeros(200), 20e9, 200e6)
    with pytest.raises(StepSizeError):
        evolve(Q2, d)
    with pytest.raises(ValueError):
        evolve(Q2, DriveSignal(np.zeros(200), 320e9, 200e6), dt_s=1.5 / 320e9)


def test_drive_signal_invariants():
    with pytest.raises(ValueError):
        DriveSignal(np.array([0, 1j, 0]), 1e9, 1.0)
    with pytest.raises(ValueError):
        DriveSignal(np.zeros(2), 1e9, 1.0)
    with pytest.raises(ValueError):
        DriveSignal(np.zeros(5), 1e9, 1.0, frame="dressed")
    d = DriveSignal(np.zeros(11), 1e9, 1.0)
    assert d.duration_s == pytest.approx(10e-9)


def test_model_invariants():
    with pytest.raises(ValueError):
        TransmonModel(4)
    with pytest.raises(ValueError):
        TransmonModel(2, -1.0)
    with pytest.raises(ValueError):
        TransmonModel(2, t1_s=0.0)
    with pytest.raises(ValueError):
        TwoQubitModel(TransmonModel(3, 5.0e9), TransmonModel(3, 5.01e9), j_hz=3.5e6)
    with pytest.raises(ValueError):
        TwoQubitModel().with_static_terms(("ZQ", 1e5))
    m = TwoQubitModel().with_static_terms(("zi", 1e5))
    assert m.static_terms == (("ZI", 1e5),)
    with pytest.raises(ValueError, match="lab-frame"):
        propagate(m, DriveSignal(np.zeros(11), 20e9, 1.0, "rotating"))


def test_dressed_frequencies():
    m = TwoQubitModel()
    # second-order shifts: |01>-|10> with J, |11>-|20> and |11>-|02> with sqrt(2) J
    J, wc, wt, ac, at = 3.5e6, 5.4735e9, 5.3505e9, -330e6, -330e6
    s01, s10 = J**2 / (wt - wc), J**2 / (wc - wt)
    s11 = 2 * J**2 / (wt - wc - ac) + 2 * J**2 / (wc - wt - at)
    f_t = wt + 0.5 * (s01 + (s11 - s10))
    f_c = wc + 0.5 * (s10 + (s11 - s01))
    # fourth-order terms are about J^4 / Delta^3, below 100 Hz here
    assert qubit_freq_hz(m, "target") == pytest.approx(f_t, abs=300)
    assert qubit_freq_hz(m, "control") == pytest.approx(f_c, abs=300)
    assert transition_freqs_hz(Q3).tolist() == pytest.approx([5.3505e9, 5.0205e9])


def test_lab_and_rotating_agree():
    a = calibrate_amplitude(Q2, ENV, math.pi / 2)
    rot = evolve(Q2, rotating_drive(ENV, a), ideal=rx(math.pi / 2))
    rate = 320e9
    t = np.arange(int(round(48e-9 * rate)) + 1) / rate
    v = a * envelope_value(ENV, t).real * np.cos(2 * np.pi * 5.3505e9 * t)
    lab = evolve(Q2, DriveSignal(v, rate, 200e6), ideal=rx(math.pi / 2))
    assert abs(rot.fidelity - lab.fidelity) < 1e-5


def test_calibration_area_theorem():
    a1 = calibrate_amplitude(Q2, Gaussian(12e-9, 48e-9), math.pi / 2)
    a2 = calibrate_amplitude(Q2, Gaussian(24e-9, 96e-9), math.pi / 2)
    assert a2 / a1 == pytest.approx(0.5, rel=5e-3)
    api = calibrate_amplitude(Q2, ENV, math.pi)
    assert api / a1 == pytest.approx(2.0, abs=1e-3)


def test_calibrated_x90_four_times_is_identity():
    a = calibrate_amplitude(Q2, ENV, math.pi / 2)
    u = propagate(Q2, rotating_drive(ENV, a))
    assert rotation_angle(u, [1, 0, 0]) == pytest.approx(math.pi / 2, abs=1e-6)
    assert average_gate_fidelity(np.linalg.matrix_power(u, 4), np.eye(2)) > 1 - 1e-6


def test_calibration_bracket_failure():
    with pytest.raises(CalibrationError):
        calibrate_amplitude(Q2, Gaussian(0.2e-9, 0.8e-9), 3 * math.pi)
    with pytest.raises(CalibrationError):
        solve_amplitude(lambda a: 0.1 * a, 1.0, 0.5)


def _pi_leakage(beta):
    env = DragGaussian(4e-9, 16e-9, beta)
    a = calibrate_amplitude(Q3, env, math.pi)
    return leakage_of(propagate(Q3, rotating_drive(env, a)), [0, 1])


def test_drag_reduces_leakage():
    leak0 = _pi_leakage(0.0)
    # sweep beta in units of 1 / (2 pi |alpha|) and keep the best point
    unit = 1 / (2 * math.pi * abs(Q3.anharmonicity_hz))
    grid = np.linspace(-1.5, 1.5, 13)
    leaks = [_pi_leakage(k * unit) for k in grid]
    best = int(np.argmin(leaks))
    assert leak0 > 1e-5
    assert leaks[best] < leak0 / 10
    assert grid[best] == pytest.approx(-1.0, abs=0.25)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 0.3), st.floats(-math.pi, math.pi), st.floats(5e-6, 100e-6), st.floats(5e-6, 100e-6))
def test_lindblad_states_are_physical(amp, phase, t1, tphi):
    m = TransmonModel(3, 5.3505e9, -330e6, t1, tphi)
    d = rotating_drive(ENV, amp, phase_rad=phase)
    rhos = lindblad_channel(m, d, rhos=np.array([np.diag([1.0, 0, 0]), np.full((3, 3), 1 / 3)]))
    for r in rhos:
        assert abs(np.trace(r) - 1) < 1e-8
        assert np.allclose(r, r.conj().T, atol=1e-12)
        assert np.linalg.eigvalsh(r).min() >= -1e-8


def test_open_system_fidelity_below_closed():
    a = calibrate_amplitude(Q2, ENV, math.pi / 2)
    closed = evolve(Q2, rotating_drive(ENV, a), ideal=rx(math.pi / 2))
    lossy = evolve(Q2.with_decoherence(20e-6, 30e-6), rotating_drive(ENV, a), ideal=rx(math.pi / 2))
    assert lossy.channel is not None and lossy.propagator is None
    # decoherence-limited infidelity of a 48 ns gate: about t (1/(3 T1) + 1/(3 Tphi))
    expect = 48e-9 * (1 / (3 * 20e-6) + 1 / (3 * 30e-6))
    assert 1 - lossy.fidelity == pytest.approx(expect, rel=0.3)
    assert closed.fidelity > lossy.fidelity


def test_virtual_z_recovers_zx():
    u = np.kron(rz(0.3), rz(-0.7)) @ zx(math.pi / 2) @ np.kron(rz(1.1), rz(0.2))
    f, _ = best_virtual_z(u, zx(math.pi / 2))
    assert f > 1 - 1e-10
    assert zx_rate_hz(150.4e-9) == pytest.approx(1 / (4 * 150.4e-9))


def test_gate_result_summary_and_csv(tmp_path):
    r = GateResult(np.eye(2), 0.999, 1e-5, info={"amplitude": 0.1})
    assert r.infidelity == pytest.approx(1e-3)
    assert "amplitude: 0.1" in r.summary()
    write_sweep_csv([(0.1, 1e-7, 1e-3, 1e-5)], tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "amplitude,length_s,infidelity,leakage"
