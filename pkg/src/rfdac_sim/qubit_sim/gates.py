"""Pulse synthesis through a control chain, amplitude calibration and single-qubit gates."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from ..analog_chain import ChainSpec, FilterModel, run_chain
from ..dac_core import (AnalogWaveform, DacSamples, ReconstructionMode, SampleStream,
                        nco_upconvert, reconstruct, reconstruction_response)
from ..pulse_lib import Envelope, Pulse, envelope_value
from .evolve import evolve, propagate
from .fidelity import average_gate_fidelity, project, rotation_angle, rotation_vector, rphi
from .models import DriveSignal, GateResult, TransmonModel, TwoQubitModel, frame_of

DEFAULT_COUPLING_HZ = 200e6
ROTATING_RATE_HZ = 20e9


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RfDacSynthesis:
    """Direct synthesis: complex data at f_s/2, on-chip NCO, reconstruction at f_s.

    ``nco_hz`` defaults to the first pulse's carrier; other carriers are
    reached by digital modulation of the data stream.
    """

    mode: ReconstructionMode = ReconstructionMode.MIX
    dac_rate_hz: float = 5e9
    nco_hz: float | None = None
    oversample: int = 32
    compensate_phase: bool = True

    @property
    def data_rate_hz(self) -> float:
        return self.dac_rate_hz / 2

    @property
    def grid_rate_hz(self) -> float:
        return self.dac_rate_hz * self.oversample


@dataclass(frozen=True)
class UpconversionSynthesis:
    """Baseband I/Q DACs (NRZ) with a reconstruction lowpass, feeding the chain's IQ mixer."""

    baseband_rate_hz: float = 1.2e9
    oversample: int = 128
    recon_cutoff_hz: float = 0.45e9
    recon_order: int = 7
    compensate_phase: bool = True

    @property
    def grid_rate_hz(self) -> float:
        return self.baseband_rate_hz * self.oversample


Synthesis = RfDacSynthesis | UpconversionSynthesis
Schedule = Sequence[tuple]  # (start_s, Pulse)


def _modulated(schedule: Schedule, rate_hz: float, n: int, f_ref: float, phase_fn: Callable) -> np.ndarray:
    t = np.arange(n) / rate_hz
    x = np.zeros(n, dtype=complex)
    for t0, p in schedule:
        f_off = p.freq_hz - f_ref
        if abs(f_off) >= rate_hz / 2:
            raise ValueError(f"pulse carrier {p.freq_hz:g} Hz is {f_off:g} Hz from the reference; "
                             f"exceeds the data Nyquist {rate_hz / 2:g} Hz")
        phi = p.phase_rad + phase_fn(p.freq_hz, f_off)
        x += p.amplitude * np.exp(1j * phi) * envelope_value(p.envelope, t - t0) * np.exp(2j * np.pi * f_off * t)
    return x


def schedule_length_s(schedule: Schedule) -> float:
    return max(t0 + p.length_s for t0, p in schedule)


def synthesize(schedule: Schedule, chain: ChainSpec, synthesis: Synthesis, *,
               pad_s: float = 4e-9, seed: int = 0) -> AnalogWaveform:
    """Render pulses through the chosen synthesis path and the analog chain.

    Carrier phases are referenced to t = 0 of the record, which is also the
    start of the returned waveform.
    """
    if not schedule:
        raise ValueError("empty schedule")
    total = schedule_length_s(schedule) + pad_s
    if isinstance(synthesis, RfDacSynthesis):
        rate = synthesis.data_rate_hz
        n = int(math.ceil(total * rate)) + 1
        nco = synthesis.nco_hz if synthesis.nco_hz is not None else schedule[0][1].freq_hz
        mode = ReconstructionMode.parse(synthesis.mode)

        def phase(f, f_off):
            if not synthesis.compensate_phase:
                return 0.0
            return -float(np.angle(reconstruction_response(mode, f, synthesis.dac_rate_hz)))

        x = _modulated(schedule, rate, n, nco, phase)
        dac = nco_upconvert(SampleStream(x, rate), nco)
        w = reconstruct(dac, mode, synthesis.oversample)
        return run_chain(w, chain, seed)
    if isinstance(synthesis, UpconversionSynthesis):
        mixer = chain.mixer
        if mixer is None:
            raise ValueError("upconversion synthesis needs a mixer in the chain")
        rate = synthesis.baseband_rate_hz
        n = int(math.ceil(total * rate)) + 1

        def phase(f, f_off):
            # undo the half-sample delay of the NRZ hold
            return math.pi * f_off / rate if synthesis.compensate_phase else 0.0

        x = _modulated(schedule, rate, n, mixer.lo_freq_hz, phase)
        if np.abs(x).max() > 1 + 1e-12:
            raise ValueError(f"baseband peak {np.abs(x).max():.6g} exceeds full scale")
        x = np.clip(x.real, -1, 1) + 1j * np.clip(x.imag, -1, 1)
        wi = reconstruct(DacSamples(x.real, rate), ReconstructionMode.NRZ, synthesis.oversample)
        wq = reconstruct(DacSamples(x.imag, rate), ReconstructionMode.NRZ, synthesis.oversample)
        from ..analog_chain import apply_filter

        bb = apply_filter(AnalogWaveform(wi.samples + 1j * wq.samples, wi.rate_hz),
                          FilterModel("lowpass", synthesis.recon_cutoff_hz, 80.0, synthesis.recon_order))
        return run_chain(bb, chain, seed)
    raise TypeError(f"unknown synthesis {synthesis!r}")


def lab_drive(w: AnalogWaveform, coupling_hz_per_unit: float, port: str = "control") -> DriveSignal:
    return DriveSignal(np.asarray(w.samples, float), w.rate_hz, coupling_hz_per_unit, "lab", port=port,
                       t0_s=w.t0_s)


def rotating_drive(envelope: Envelope, amplitude: float, *, phase_rad: float = 0.0,
                   coupling_hz_per_unit: float = DEFAULT_COUPLING_HZ, rate_hz: float = ROTATING_RATE_HZ,
                   detuning_hz: float = 0.0, port: str = "control") -> DriveSignal:
    n = int(round(envelope.length_s * rate_hz))
    n += n % 2  # whole RK4 steps
    t = np.arange(n + 1) / rate_hz
    z = amplitude * np.exp(1j * phase_rad) * envelope_value(envelope, t)
    return DriveSignal(z, rate_hz, coupling_hz_per_unit, "rotating", detuning_hz, port)


def _axis(phase_rad: float) -> np.ndarray:
    return np.array([np.cos(phase_rad), -np.sin(phase_rad), 0.0])


def solve_amplitude(angle_of: Callable[[float], float], target: float, guess: float, *,
                    upper: float = 1.0, xtol: float = 1e-13) -> float:
    """Root of ``angle_of(A) = target`` by bracketed Brent iteration, bracket grown from ``guess``."""
    lo, hi = 0.7 * guess, min(1.3 * guess, upper)
    f_lo, f_hi = angle_of(lo) - target, angle_of(hi) - target
    for _ in range(12):
        if f_lo <= 0 <= f_hi or f_hi <= 0 <= f_lo:
            break
        if f_lo > 0:
            hi, f_hi = lo, f_lo
            lo = lo / 1.5
            f_lo = angle_of(lo) - target
        else:
            if hi >= upper:
                raise CalibrationError(f"rotation {f_hi + target:.6g} rad at amplitude {upper:g} "
                                       f"is below the target {target:.6g} rad")
            lo, f_lo = hi, f_hi
            hi = min(hi * 1.5, upper)
            f_hi = angle_of(hi) - target
    else:
        raise CalibrationError("could not bracket the calibration target")
    return float(optimize.brentq(lambda a: angle_of(a) - target, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps))


def _block(model, u) -> np.ndarray:
    return project(u, frame_of(model).comp_index)


def calibrate_amplitude(model: TransmonModel, envelope: Envelope, target_angle_rad: float, *,
                        phase_rad: float = 0.0, coupling_hz_per_unit: float = DEFAULT_COUPLING_HZ,
                        rate_hz: float = ROTATING_RATE_HZ) -> float:
    """Rotating-frame, on-resonance amplitude giving ``target_angle_rad`` (angle tolerance 1e-6 rad)."""
    axis = _axis(phase_rad)

    def angle(a):
        u = propagate(model, rotating_drive(envelope, a, phase_rad=phase_rad,
                                            coupling_hz_per_unit=coupling_hz_per_unit, rate_hz=rate_hz))
        return rotation_angle(_block(model, u), axis)

    probe = 1e-3
    slope = angle(probe) / probe
    if not slope > 0:
        raise CalibrationError("drive produces no rotation about the requested axis")
    a = solve_amplitude(angle, target_angle_rad, target_angle_rad / slope)
    if abs(angle(a) - target_angle_rad) > 1e-6:
        raise CalibrationError("calibration did not reach 1e-6 rad")
    return a


def run_gate_through_chain(pulse: Pulse, chain: ChainSpec, synthesis: Synthesis, model: TransmonModel, *,
                           coupling_hz_per_unit: float = DEFAULT_COUPLING_HZ, target_angle_rad: float = math.pi / 2,
                           ideal: np.ndarray | None = None, pad_s: float = 4e-9, seed: int = 0,
                           start_s: float = 2e-9) -> GateResult:
    """Pulse -> synthesis -> chain -> lab-frame drive -> propagator, scored against a rotation.

    The default reference is a ``target_angle_rad`` rotation about the pulse's
    nominal axis ``(cos phi, -sin phi, 0)``.
    """
    if not isinstance(model, TransmonModel):
        raise TypeError("single-qubit gates take a TransmonModel")
    if pulse.length_s > 1e-6:
        raise ValueError("lab-frame gates are limited to 1 us")
    w = synthesize([(start_s, pulse)], chain, synthesis, pad_s=pad_s, seed=seed)
    if ideal is None:
        ideal = rphi(target_angle_rad, pulse.phase_rad)
    res = evolve(model, lab_drive(w, coupling_hz_per_unit), ideal=ideal)
    blk = _block(model, res.propagator) if res.propagator is not None else None
    info = {"amplitude": pulse.amplitude, "phase_rad": pulse.phase_rad}
    if blk is not None:
        info["rotation_angle_rad"] = float(np.linalg.norm(rotation_vector(blk)))
    return replace(res, info=info)


def calibrate_through_chain(pulse: Pulse, chain: ChainSpec, synthesis: Synthesis, model: TransmonModel, *,
                            target_angle_rad: float = math.pi / 2,
                            coupling_hz_per_unit: float = DEFAULT_COUPLING_HZ, seed: int = 0) -> Pulse:
    """Amplitude (Brent) and axis-phase calibration of a lab-frame gate through a chain."""
    axis_phase = pulse.phase_rad
    p = pulse

    def block_for(a, ph):
        q = Pulse(p.envelope, a, ph, p.freq_hz, p.channel)
        r = run_gate_through_chain(q, chain, synthesis, model, coupling_hz_per_unit=coupling_hz_per_unit,
                                   ideal=np.eye(model.n_levels)[:2, :2], seed=seed)
        return _block(model, r.propagator)

    ph = axis_phase
    amp = None
    for _ in range(3):
        def angle(a, ph=ph):
            return rotation_angle(block_for(a, ph), _axis(axis_phase))

        guess = amp
        if guess is None:
            probe = 1e-3
            guess = target_angle_rad / (angle(probe) / probe)
        amp = solve_amplitude(angle, target_angle_rad, guess)
        v = rotation_vector(block_for(amp, ph))
        achieved = math.atan2(-v[1], v[0])
        err = float(np.angle(np.exp(1j * (achieved - axis_phase))))
        if abs(err) < 1e-7:
            break
        ph = ph - err
    return Pulse(p.envelope, amp, float(np.angle(np.exp(1j * ph))), p.freq_hz, p.channel)
