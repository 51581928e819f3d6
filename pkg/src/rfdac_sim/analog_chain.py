"""Room-temperature analog stages: IQ mixer, amplifier, filter, attenuator, noise.

Stages are memoryless or magnitude-only LTI.  A chain may hold one mixer; stages
in front of it see the complex baseband (I + jQ), with amplifiers acting on each
quadrature separately, and stages after it see the real RF signal.
Filtering is done in the frequency domain over the whole record, i.e. the
record is treated as periodic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np
from scipy import integrate, optimize

from .dac_core import AnalogWaveform, fft_spectrum

log = logging.getLogger(__name__)

STAGE_VOCABULARY_VERSION = 1


@dataclass(frozen=True)
class IQCorrection:
    """Pre-distortion applied to I/Q before the mixer.

    ``I' = amp_corr * (I + tan(phase_corr) * Q) + dc_i`` and
    ``Q' = Q / cos(phase_corr) + dc_q``.
    """

    dc_i: float = 0.0
    dc_q: float = 0.0
    amp_corr: float = 1.0
    phase_corr: float = 0.0

    def apply(self, i: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        i2 = self.amp_corr * (i + math.tan(self.phase_corr) * q) + self.dc_i
        q2 = q / math.cos(self.phase_corr) + self.dc_q
        return i2, q2

    @classmethod
    def ideal_for(cls, m: "MixerModel") -> "IQCorrection":
        """Exact inverse of the mixer's linear imperfections."""
        g = 1.0 + m.gain_imbalance
        return cls(dc_i=-m.lo_leak / g, dc_q=0.0, amp_corr=1.0 / g, phase_corr=m.phase_skew_rad)


@dataclass(frozen=True)
class MixerModel:
    lo_freq_hz: float
    lo_leak: float = 0.0
    gain_imbalance: float = 0.0
    phase_skew_rad: float = 0.0
    a1: float = 1.0
    a3: float = 0.0
    a5: float = 0.0
    correction: IQCorrection | None = None

    def __post_init__(self):
        if not self.a1 > 0:
            raise ValueError("a1 must be > 0")
        if not abs(self.gain_imbalance) < 1:
            raise ValueError("|gain_imbalance| must be < 1")

    @staticmethod
    def a3_from_iip3(iip3_amplitude: float, a1: float = 1.0) -> float:
        """Cubic coefficient whose extrapolated third-order intercept is at ``iip3_amplitude``."""
        return -4.0 / 3.0 * a1 / iip3_amplitude**2

    @staticmethod
    def a3_from_p1db(p1db_amplitude: float, a1: float = 1.0) -> float:
        """Cubic coefficient that compresses the fundamental by 1 dB at ``p1db_amplitude``."""
        return -4.0 / 3.0 * (1.0 - 10 ** (-1 / 20)) * a1 / p1db_amplitude**2

    @classmethod
    def with_iip3(cls, lo_freq_hz: float, iip3_amplitude: float, **kw) -> "MixerModel":
        a1 = kw.pop("a1", 1.0)
        return cls(lo_freq_hz, a1=a1, a3=cls.a3_from_iip3(iip3_amplitude, a1), **kw)

    def corrected(self, correction: IQCorrection | None) -> "MixerModel":
        return replace(self, correction=correction)

    def nonlinearity(self, v: np.ndarray) -> np.ndarray:
        v2 = v * v
        return v * (self.a1 + v2 * (self.a3 + self.a5 * v2))


@dataclass(frozen=True)
class AmplifierModel:
    gain_db: float
    input_p1db: float

    def __post_init__(self):
        if not self.input_p1db > 0:
            raise ValueError("input_p1db must be > 0")

    @property
    def gain(self) -> float:
        return 10 ** (self.gain_db / 20)

    @property
    def x_sat(self) -> float:
        return _tanh_xsat(self.input_p1db)


@dataclass(frozen=True)
class FilterModel:
    kind: str
    cutoff_hz: float | tuple
    stopband_atten_db: float = 60.0
    order: int = 5

    def __post_init__(self):
        if self.kind not in ("lowpass", "bandpass"):
            raise ValueError(f"filter kind must be lowpass or bandpass, got {self.kind!r}")
        if not 0 <= self.stopband_atten_db <= 120:
            raise ValueError("stopband_atten_db must lie in [0, 120]")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.kind == "bandpass":
            lo, hi = self.cutoff_hz
            if not 0 < lo < hi:
                raise ValueError("bandpass edges must satisfy 0 < lo < hi")
            object.__setattr__(self, "cutoff_hz", (float(lo), float(hi)))
        elif not self.cutoff_hz > 0:
            raise ValueError("cutoff_hz must be > 0")

    @property
    def upper_edge_hz(self) -> float:
        return self.cutoff_hz[1] if self.kind == "bandpass" else self.cutoff_hz

    def magnitude(self, f) -> np.ndarray:
        f = np.abs(np.asarray(f, dtype=float))
        if self.kind == "lowpass":
            x = f / self.cutoff_hz
        else:
            lo, hi = self.cutoff_hz
            f0sq, bw = lo * hi, hi - lo
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                x = np.abs(f * f - f0sq) / (np.maximum(f, 1e-300) * bw)
        with np.errstate(over="ignore"):
            h = 1.0 / np.sqrt(1.0 + x ** (2 * self.order))
        return np.maximum(h, 10 ** (-self.stopband_atten_db / 20))


@dataclass(frozen=True)
class Attenuator:
    db: float


@dataclass(frozen=True)
class NoiseFloor:
    dbfs_per_bin: float = -100.0


Stage = Union[MixerModel, AmplifierModel, FilterModel, Attenuator, NoiseFloor]


@dataclass(frozen=True)
class ChainSpec:
    stages: tuple = field(default_factory=tuple)

    def __post_init__(self):
        stages = tuple(self.stages)
        if sum(isinstance(s, MixerModel) for s in stages) > 1:
            raise ValueError("a chain holds at most one mixer")
        for s in stages:
            if not isinstance(s, (MixerModel, AmplifierModel, FilterModel, Attenuator, NoiseFloor)):
                raise TypeError(f"unknown stage {s!r}")
        object.__setattr__(self, "stages", stages)

    @property
    def mixer(self) -> MixerModel | None:
        for s in self.stages:
            if isinstance(s, MixerModel):
                return s
        return None

    def without_noise(self) -> "ChainSpec":
        return ChainSpec(tuple(s for s in self.stages if not isinstance(s, NoiseFloor)))

    def with_mixer(self, mixer: MixerModel) -> "ChainSpec":
        rest = tuple(s for s in self.stages if not isinstance(s, MixerModel))
        return ChainSpec((mixer,) + rest)


def upconvert_iq(i: AnalogWaveform, q: AnalogWaveform, m: MixerModel,
                 bandwidth_hz: float = 0.0) -> AnalogWaveform:
    """IQ mixer with gain/phase imbalance, LO leakage and odd-order compression."""
    if len(i) != len(q) or i.rate_hz != q.rate_hz:
        raise ValueError("I and Q must share rate and length")
    if i.rate_hz < 4 * (abs(m.lo_freq_hz) + bandwidth_hz):
        raise ValueError(f"waveform rate {i.rate_hz:g} Hz is too low for LO {m.lo_freq_hz:g} Hz "
                         f"(need >= {4 * (abs(m.lo_freq_hz) + bandwidth_hz):g})")
    iv = np.asarray(i.samples, float)
    qv = np.asarray(q.samples, float)
    if m.correction is not None:
        iv, qv = m.correction.apply(iv, qv)
    wt = 2 * np.pi * m.lo_freq_hz * i.times
    v = ((1 + m.gain_imbalance) * iv * np.cos(wt) - qv * np.sin(wt + m.phase_skew_rad)
         + m.lo_leak * np.cos(wt))
    return AnalogWaveform(m.nonlinearity(v), i.rate_hz, i.t0_s)


def _tanh_fundamental(amplitude: float, x_sat: float) -> float:
    """Fundamental amplitude of ``x_sat * tanh(A sin(th) / x_sat)``."""
    val, _ = integrate.quad(lambda th: x_sat * np.tanh(amplitude * np.sin(th) / x_sat) * np.sin(th),
                            0, np.pi, epsabs=1e-14, epsrel=1e-13)
    return 2.0 / np.pi * val


_XSAT_CACHE: dict = {}


def _tanh_xsat(p1db: float) -> float:
    """Saturation level putting a tone of amplitude ``p1db`` exactly 1 dB into compression."""
    if p1db not in _XSAT_CACHE:
        target = 10 ** (-1 / 20)
        # scale-free: solve for p1db = 1 and rescale
        r = optimize.brentq(lambda xs: _tanh_fundamental(1.0, xs) - target, 0.2, 20.0, xtol=1e-15, rtol=1e-15)
        _XSAT_CACHE[p1db] = r * p1db
    return _XSAT_CACHE[p1db]


def _amplify(x: np.ndarray, a: AmplifierModel) -> np.ndarray:
    xs = a.x_sat
    if np.iscomplexobj(x):
        return a.gain * xs * (np.tanh(x.real / xs) + 1j * np.tanh(x.imag / xs))
    return a.gain * xs * np.tanh(x / xs)


def apply_amplifier(w: AnalogWaveform, a: AmplifierModel) -> AnalogWaveform:
    """Soft tanh compression, ``g * x_sat * tanh(x / x_sat)``."""
    return w.with_samples(_amplify(np.asarray(w.samples), a))


def apply_filter(w: AnalogWaveform, f: FilterModel) -> AnalogWaveform:
    """Zero-phase magnitude filter with a finite stopband floor."""
    if f.upper_edge_hz >= w.rate_hz / 2:
        raise ValueError(f"filter edge {f.upper_edge_hz:g} Hz is above the grid Nyquist {w.rate_hz / 2:g} Hz")
    x = np.asarray(w.samples)
    n = len(x)
    if np.iscomplexobj(x):
        freqs = np.fft.fftfreq(n, 1 / w.rate_hz)
        y = np.fft.ifft(np.fft.fft(x) * f.magnitude(freqs))
    else:
        freqs = np.fft.rfftfreq(n, 1 / w.rate_hz)
        y = np.fft.irfft(np.fft.rfft(x) * f.magnitude(freqs), n)
    return w.with_samples(y)


def apply_attenuator(w: AnalogWaveform, a: Attenuator) -> AnalogWaveform:
    return w.with_samples(np.asarray(w.samples) * 10 ** (-a.db / 20))


def add_noise(w: AnalogWaveform, nf: NoiseFloor, rng: np.random.Generator) -> AnalogWaveform:
    """White noise whose one-sided amplitude per FFT bin (rect window) has RMS ``dbfs_per_bin``."""
    n = len(w)
    sigma = 10 ** (nf.dbfs_per_bin / 20) * math.sqrt(n) / 2
    x = np.asarray(w.samples)
    if np.iscomplexobj(x):
        noise = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    else:
        noise = sigma * rng.standard_normal(n)
    return w.with_samples(x + noise)


def run_chain(input: AnalogWaveform, chain: ChainSpec, seed: int = 0) -> AnalogWaveform:
    """Apply the stages in order.  Noise stages draw from ``seed`` (per stage index)."""
    w = input
    for idx, stage in enumerate(chain.stages):
        if isinstance(stage, MixerModel):
            x = np.asarray(w.samples)
            if not np.iscomplexobj(x):
                raise ValueError("mixer stage needs a complex I+jQ baseband input")
            w = upconvert_iq(w.with_samples(x.real), w.with_samples(x.imag), stage)
        elif isinstance(stage, AmplifierModel):
            w = apply_amplifier(w, stage)
        elif isinstance(stage, FilterModel):
            w = apply_filter(w, stage)
        elif isinstance(stage, Attenuator):
            w = apply_attenuator(w, stage)
        elif isinstance(stage, NoiseFloor):
            rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(idx,)))
            w = add_noise(w, stage, rng)
    if w.is_baseband:
        raise ValueError("chain output is still baseband; add a mixer stage")
    return w


def chain_is_linear(chain: ChainSpec) -> bool:
    return all(isinstance(s, (FilterModel, Attenuator)) for s in chain.stages)


@dataclass
class MixerCalibration:
    correction: IQCorrection
    achieved_lo_dbc: float
    achieved_image_dbc: float
    status: str
    n_evals: int

    @property
    def dc_i(self):
        return self.correction.dc_i

    @property
    def dc_q(self):
        return self.correction.dc_q

    @property
    def amp_corr(self):
        return self.correction.amp_corr

    @property
    def phase_corr(self):
        return self.correction.phase_corr


def _probe_grid(lo_freq_hz: float, sideband_hz: float, record_s: float | None):
    rate = 8.0 * (abs(lo_freq_hz) + abs(sideband_hz))
    if record_s is None:
        # shortest record holding whole cycles of both tones, at least 200 ns
        step = math.gcd(int(round(abs(lo_freq_hz))), int(round(abs(sideband_hz)))) or 1
        record_s = 1.0 / step
        while record_s < 200e-9:
            record_s *= 2
    n = int(round(record_s * rate))
    return rate, n


def measure_sidebands(m: MixerModel, sideband_hz: float, amplitude: float = 0.5,
                      record_s: float | None = None) -> tuple[float, float]:
    """LO leakage and image power relative to the wanted sideband, in dBc."""
    rate, n = _probe_grid(m.lo_freq_hz, sideband_hz, record_s)
    t = np.arange(n) / rate
    i = AnalogWaveform(amplitude * np.cos(2 * np.pi * sideband_hz * t), rate)
    q = AnalogWaveform(amplitude * np.sin(2 * np.pi * sideband_hz * t), rate)
    s = fft_spectrum(upconvert_iq(i, q, m))
    p = s.power()
    want = p[s.index_of(m.lo_freq_hz + sideband_hz)]
    lo = p[s.index_of(m.lo_freq_hz)]
    img = p[s.index_of(m.lo_freq_hz - sideband_hz)]
    floor = 1e-30
    return 10 * math.log10(max(lo, floor) / want), 10 * math.log10(max(img, floor) / want)


def calibrate_mixer(m: MixerModel, lo_freq_hz: float | None = None, sideband_hz: float = 50e6, *,
                    amplitude: float = 0.5, record_s: float | None = None,
                    target_dbc: float = -40.0) -> MixerCalibration:
    """Nelder-Mead search for I/Q pre-distortion minimising LO leakage plus image power.

    Returns the best corrections found.  ``status`` is ``"ok"`` when both
    suppressions reach ``target_dbc`` and ``"warning"`` otherwise.
    """
    if lo_freq_hz is not None:
        m = replace(m, lo_freq_hz=lo_freq_hz)
    m = replace(m, correction=None)
    rate, n = _probe_grid(m.lo_freq_hz, sideband_hz, record_s)
    t = np.arange(n) / rate
    i0 = AnalogWaveform(amplitude * np.cos(2 * np.pi * sideband_hz * t), rate)
    q0 = AnalogWaveform(amplitude * np.sin(2 * np.pi * sideband_hz * t), rate)
    freqs = np.fft.rfftfreq(n, 1 / rate)
    k_want = int(np.argmin(np.abs(freqs - (m.lo_freq_hz + sideband_hz))))
    k_lo = int(np.argmin(np.abs(freqs - m.lo_freq_hz)))
    k_img = int(np.argmin(np.abs(freqs - (m.lo_freq_hz - sideband_hz))))
    evals = 0

    def powers(x):
        corr = IQCorrection(dc_i=x[0], dc_q=x[1], amp_corr=x[2], phase_corr=x[3])
        s = fft_spectrum(upconvert_iq(i0, q0, replace(m, correction=corr)))
        p = s.power()
        return p[k_lo] / p[k_want], p[k_img] / p[k_want]

    def cost(x):
        nonlocal evals
        evals += 1
        if not -1.2 < x[3] < 1.2 or x[2] <= 0:
            return 1e3
        lo, img = powers(x)
        # floor at -140 dBc: deeper suppression is below any measurable spur
        return math.log10(lo + img + 1e-14)

    x0 = np.array([0.0, 0.0, 1.0, 0.0])
    simplex = x0 + np.vstack([np.zeros(4), np.diag([0.02, 0.02, 0.05, 0.05])])
    best = x0
    for _ in range(3):
        res = optimize.minimize(cost, best, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-3, "maxiter": 2000,
                                         "initial_simplex": simplex})
        best = res.x
        scale = np.maximum(np.abs(best - x0), 1e-4) * 0.1
        simplex = best + np.vstack([np.zeros(4), np.diag(scale)])
    lo, img = powers(best)
    lo_db = 10 * math.log10(max(lo, 1e-30))
    img_db = 10 * math.log10(max(img, 1e-30))
    status = "ok" if lo_db <= target_dbc and img_db <= target_dbc else "warning"
    if status != "ok":
        log.warning("mixer calibration reached LO %.1f dBc, image %.1f dBc", lo_db, img_db)
    corr = IQCorrection(dc_i=float(best[0]), dc_q=float(best[1]), amp_corr=float(best[2]),
                        phase_corr=float(best[3]))
    return MixerCalibration(corr, lo_db, img_db, status, evals)
