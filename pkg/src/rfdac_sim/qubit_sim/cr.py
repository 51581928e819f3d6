"""Echoed cross-resonance gate on two coupled transmons, simulated in the lab frame.

Sequence (time order): X_pi(control), CR(-A), X_pi(control), CR(+A), i.e. the
operator product ``CR(+A) X_pi CR(-A) X_pi``.  Both CR halves drive the
control transmon at the target's dressed frequency.  The CR amplitude is
calibrated so the conditional rotation of the target reaches pi/2; the
fidelity against ``ZX(pi/2) = exp(-i pi/4 Z(x)X)`` is then maximised over
virtual Z frame updates of both qubits before and after the gate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from ..analog_chain import ChainSpec
from ..pulse_lib import DragGaussian, FlatTopGaussian, Pulse
from .evolve import _check_unitary, propagate
from .fidelity import (average_gate_fidelity, leakage_of, project, rotation_angle, rotation_vector, rz, zx)
from .gates import (DEFAULT_COUPLING_HZ, CalibrationError, Synthesis, lab_drive, solve_amplitude,
                    synthesize)
from .models import GateResult, TwoQubitModel, frame_of, qubit_freq_hz

X_PI_LENGTH_S = 48e-9


def simulate_schedule(model, schedule, chain: ChainSpec, synthesis: Synthesis, *,
                      coupling_hz_per_unit: float = DEFAULT_COUPLING_HZ, port: str = "control",
                      seed: int = 0, pad_s: float = 4e-9) -> np.ndarray:
    w = synthesize(schedule, chain, synthesis, pad_s=pad_s, seed=seed)
    return propagate(model, lab_drive(w, coupling_hz_per_unit, port))


def _blocks(model: TwoQubitModel, u: np.ndarray, qubit: str):
    """2x2 blocks of one qubit conditioned on the other qubit being in |0> and |1>."""
    nc, nt = frame_of(model).levels
    if qubit == "target":
        return [u[np.ix_([b * nt, b * nt + 1], [b * nt, b * nt + 1])] for b in (0, 1)]
    return [u[np.ix_([b, nt + b], [b, nt + b])] for b in (0, 1)]


@dataclass(frozen=True)
class ControlPi:
    pulse: Pulse
    angle_error_rad: float


def calibrate_control_pi(model: TwoQubitModel, chain: ChainSpec, synthesis: Synthesis, *,
                         coupling_hz_per_unit: float = DEFAULT_COUPLING_HZ, length_s: float = X_PI_LENGTH_S,
                         beta_s: float | None = None, seed: int = 0) -> ControlPi:
    """Calibrated DRAG X_pi on the control at its dressed frequency."""
    f_c = qubit_freq_hz(model, "control")
    if beta_s is None:
        beta_s = 0.5 / (2 * math.pi * model.control.anharmonicity_hz)
    env = DragGaussian(length_s / 4, length_s, beta_s)
    start = 2e-9

    def mean_angle(a, ph=0.0):
        p = Pulse(env, a, ph, f_c)
        u = simulate_schedule(model, [(start, p)], chain, synthesis,
                              coupling_hz_per_unit=coupling_hz_per_unit, seed=seed)
        return np.mean([rotation_angle(b, [1, 0, 0]) for b in _blocks(model, u, "control")]), u

    probe = 1e-3
    slope = mean_angle(probe)[0] / probe
    a = solve_amplitude(lambda x: mean_angle(x)[0], math.pi, math.pi / slope)
    _, u = mean_angle(a)
    vs = [rotation_vector(b) for b in _blocks(model, u, "control")]
    # a pi rotation fixes its axis only up to sign, so the phase is taken mod pi
    phase = -float(np.mean([(math.atan2(-v[1], v[0]) + math.pi / 2) % math.pi - math.pi / 2 for v in vs]))
    a = solve_amplitude(lambda x: mean_angle(x, phase)[0], math.pi, a)
    err, _ = mean_angle(a, phase)
    return ControlPi(Pulse(env, a, phase, f_c), float(err - math.pi))


def echo_schedule(cr: Pulse, x_pi: Pulse, start_s: float = 2e-9):
    t = start_s
    out = []
    for p in (x_pi, replace(cr, phase_rad=cr.phase_rad + math.pi), x_pi, cr):
        out.append((t, p))
        t += p.length_s
    return out


def conditional_angle(model: TwoQubitModel, u: np.ndarray) -> float:
    v0, v1 = (rotation_vector(b) for b in _blocks(model, u, "target"))
    return float(np.linalg.norm(v0 - v1) / 2)


def _embed_z(ac, at, bc, bt):
    post = np.kron(rz(ac), rz(at))
    pre = np.kron(rz(bc), rz(bt))
    return post, pre


def best_virtual_z(u_sub: np.ndarray, ideal: np.ndarray) -> tuple[float, np.ndarray]:
    """Maximise the average gate fidelity over Z frame updates before and after the gate."""

    def neg(x):
        post, pre = _embed_z(*x)
        return -average_gate_fidelity(post @ u_sub @ pre, ideal)

    best = None
    for start in ([0, 0, 0, 0], [np.pi / 2, 0, 0, 0], [0, np.pi / 2, 0, -np.pi / 2], [0, -np.pi / 2, 0, np.pi / 2]):
        r = optimize.minimize(neg, start, method="Nelder-Mead",
                              options={"xatol": 1e-9, "fatol": 1e-13, "maxiter": 4000})
        if best is None or r.fun < best.fun:
            best = r
    return -float(best.fun), best.x


def cr_pulse(amplitude: float, flat_s: float, freq_hz: float, *, two_sigma_s: float = 19.2e-9,
             phase_rad: float = 0.0) -> Pulse:
    return Pulse(FlatTopGaussian(two_sigma_s / 2, flat_s), amplitude, phase_rad, freq_hz)


def echoed_cr(model: TwoQubitModel, pulse: Pulse, chain: ChainSpec, synthesis: Synthesis, *,
              coupling_hz_per_unit: float = DEFAULT_COUPLING_HZ, x_pi: ControlPi | None = None,
              calibrate: bool = True, seed: int = 0, amplitude_window: float = 1.6) -> GateResult:
    """Echoed CR through a chain.  ``pulse`` is one CR half; its amplitude seeds the calibration.

    With ``calibrate`` the amplitude is re-solved within
    ``[A / amplitude_window, A * amplitude_window]`` (capped at full scale).
    """
    if not isinstance(model, TwoQubitModel):
        raise TypeError("echoed_cr needs a TwoQubitModel")
    f_t = qubit_freq_hz(model, "target")
    cr = pulse if pulse.freq_hz else replace(pulse, freq_hz=f_t)
    if x_pi is None:
        x_pi = calibrate_control_pi(model, chain, synthesis, coupling_hz_per_unit=coupling_hz_per_unit,
                                    seed=seed)
    total = 2 * cr.length_s + 2 * x_pi.pulse.length_s
    if total > 1e-6 + 1e-15:
        raise ValueError(f"echoed sequence of {total:g} s exceeds the 1 us lab-frame budget")

    def run(a):
        sched = echo_schedule(replace(cr, amplitude=a), x_pi.pulse)
        return simulate_schedule(model, sched, chain, synthesis,
                                 coupling_hz_per_unit=coupling_hz_per_unit, seed=seed)

    amp = cr.amplitude
    if calibrate:
        lo = amp / amplitude_window
        hi = min(amp * amplitude_window, 1.0)
        cache = {}

        def angle(a):
            if a not in cache:
                cache[a] = conditional_angle(model, run(a))
            return cache[a]

        f_lo, f_hi = angle(lo) - math.pi / 2, angle(hi) - math.pi / 2
        if f_lo > 0 or f_hi < 0:
            raise CalibrationError(
                f"ZX(pi/2) not reachable at CR length {cr.length_s:.4g} s: conditional angle spans "
                f"[{f_lo + math.pi / 2:.4g}, {f_hi + math.pi / 2:.4g}] rad over amplitudes "
                f"[{lo:.4g}, {hi:.4g}]")
        amp = float(optimize.brentq(lambda a: angle(a) - math.pi / 2, lo, hi, xtol=1e-12, rtol=1e-12))
    u = run(amp)
    _check_unitary(u, 2.0 / (synthesis.grid_rate_hz))
    fr = frame_of(model)
    sub = project(u, fr.comp_index)
    ideal = zx(math.pi / 2)
    fid, z = best_virtual_z(sub, ideal)
    info = {"cr_amplitude": amp, "cr_length_s": cr.length_s, "x_pi_amplitude": x_pi.pulse.amplitude,
            "conditional_angle_rad": conditional_angle(model, u), "virtual_z_rad": tuple(float(x) for x in z)}
    return GateResult(u, fid, leakage_of(u, fr.comp_index), ideal, None, total, info)


def zx_rate_hz(total_cr_s: float) -> float:
    """Equivalent ZX rate nu for ``H = 2 pi nu ZX / 2`` reaching pi/2 over ``total_cr_s``."""
    return 1.0 / (4.0 * total_cr_s)


EDGE_AREA_FACTOR = 1.0708  # area of one flat-top edge in units of sigma


@dataclass(frozen=True)
class CrSweepPoint:
    multiplier: float
    amplitude: float
    length_s: float
    infidelity: float
    leakage: float


def length_for_angle(model: TwoQubitModel, amplitude: float, chain: ChainSpec, synthesis: Synthesis,
                     x_pi: ControlPi, *, two_sigma_s: float = 19.2e-9, flat_guess_s: float = 40e-9,
                     coupling_hz_per_unit: float = DEFAULT_COUPLING_HZ, seed: int = 0,
                     max_total_s: float = 1e-6, tol_rad: float = 0.02) -> float:
    """Flat duration putting the conditional angle near pi/2 at a fixed amplitude (secant on duration)."""
    f_t = qubit_freq_hz(model, "target")
    edges = 2 * EDGE_AREA_FACTOR * two_sigma_s / 2
    flat_max = (max_total_s - 2 * x_pi.pulse.length_s) / 2 - 2 * two_sigma_s
    flat = min(max(flat_guess_s, 0.0), flat_max)
    for _ in range(6):
        cr = cr_pulse(amplitude, flat, f_t, two_sigma_s=two_sigma_s)
        u = simulate_schedule(model, echo_schedule(cr, x_pi.pulse), chain, synthesis,
                              coupling_hz_per_unit=coupling_hz_per_unit, seed=seed)
        theta = conditional_angle(model, u)
        if abs(theta - math.pi / 2) < tol_rad:
            return flat
        new = (flat + edges) * (math.pi / 2) / theta - edges
        if new < 0 and flat == 0.0:
            raise CalibrationError(f"amplitude {amplitude:.4g} overshoots ZX(pi/2) even with no flat section")
        if new > flat_max and flat == flat_max:
            raise CalibrationError(f"amplitude {amplitude:.4g} cannot reach ZX(pi/2) within {max_total_s:g} s")
        flat = min(max(new, 0.0), flat_max)
    return flat


def cr_error_sweep(model: TwoQubitModel, chain: ChainSpec, synthesis: Synthesis, multipliers,
                   single_qubit_amplitude: float, *, coupling_hz_per_unit: float = DEFAULT_COUPLING_HZ,
                   two_sigma_s: float = 19.2e-9, seed: int = 0, x_pi: ControlPi | None = None) -> list[CrSweepPoint]:
    """Echoed-CR infidelity at CR amplitudes ``k * single_qubit_amplitude``.

    At each point the flat duration is chosen so ZX(pi/2) is reached near the
    nominal amplitude, then the amplitude is calibrated exactly at that length.
    """
    if x_pi is None:
        x_pi = calibrate_control_pi(model, chain, synthesis, coupling_hz_per_unit=coupling_hz_per_unit, seed=seed)
    f_t = qubit_freq_hz(model, "target")
    out = []
    guess = 40e-9
    for k in sorted(multipliers, reverse=True):
        a = k * single_qubit_amplitude
        if a > 1.0:
            raise ValueError(f"multiplier {k} puts the CR amplitude above full scale")
        flat = length_for_angle(model, a, chain, synthesis, x_pi, two_sigma_s=two_sigma_s, flat_guess_s=guess,
                                coupling_hz_per_unit=coupling_hz_per_unit, seed=seed)
        guess = flat * 1.2 + 10e-9
        r = echoed_cr(model, cr_pulse(a, flat, f_t, two_sigma_s=two_sigma_s), chain, synthesis,
                      coupling_hz_per_unit=coupling_hz_per_unit, x_pi=x_pi, seed=seed, amplitude_window=1.15)
        out.append(CrSweepPoint(float(k), r.info["cr_amplitude"], 2 * r.info["cr_length_s"],
                                r.infidelity, r.leakage))
    return sorted(out, key=lambda p: p.multiplier)
