"""Sampled-data model of an RF DAC.

The DAC is treated as an impulse train of samples convolved with a
reconstruction waveform ``r(t)`` that lives on ``[0, T)``.  Three waveforms are
supported (non-return-to-zero, return-to-zero and mix mode).  Everything here
is a pure function of its inputs.

Spectra use a one-sided amplitude convention: a real cosine ``A cos(2 pi f t + phi)``
shows up as the complex value ``A exp(i phi)`` at ``f``.  0 dBFS is a full-scale
sine amplitude (1.0).
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps


class FullScaleError(ValueError):
    """A sample exceeds the DAC full-scale range."""


class AliasingError(ValueError):
    """Baseband content outside the first Nyquist zone."""


class ReconstructionMode(str, enum.Enum):
    NRZ = "NRZ"
    RZ = "RZ"
    MIX = "MIX"

    @classmethod
    def parse(cls, value: "str | ReconstructionMode") -> "ReconstructionMode":
        if isinstance(value, cls):
            return value
        return cls(str(value).upper())


DEFAULT_MODE = ReconstructionMode.MIX
DEFAULT_OVERSAMPLE = 64

# tolerated interpolation overshoot before a sample counts as a full-scale violation
_FS_SLACK = 1e-9


def _check_full_scale(values: np.ndarray, what: str) -> None:
    mag = np.abs(values)
    if mag.size and mag.max() > 1.0 + _FS_SLACK:
        k = int(np.argmax(mag))
        raise FullScaleError(f"{what}: |sample[{k}]| = {mag[k]:.6g} exceeds full scale 1.0")


@dataclass(frozen=True)
class SampleStream:
    """Complex digital samples fed to the DAC at half its update rate."""

    data: np.ndarray
    rate_hz: float
    carrier_hz: float | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        _check_full_scale(data, "SampleStream")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dac_rate_hz(self) -> float:
        return 2.0 * self.rate_hz

    def __len__(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class DacSamples:
    """Real samples at the DAC update rate, i.e. after NCO mixing."""

    samples: np.ndarray
    dac_rate_hz: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if self.dac_rate_hz <= 0:
            raise ValueError("dac_rate_hz must be positive")
        _check_full_scale(samples, "DacSamples")
        samples = np.clip(samples, -1.0, 1.0)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class AnalogWaveform:
    """Oversampled voltage trace.

    ``samples`` is real for RF signals.  A complex array is used for baseband
    I + jQ pairs travelling through the stages that precede an IQ mixer.
    """

    samples: np.ndarray
    rate_hz: float
    t0_s: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if not np.iscomplexobj(samples):
            samples = samples.astype(float)
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0_s + np.arange(len(self.samples)) / self.rate_hz

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.rate_hz

    @property
    def is_baseband(self) -> bool:
        return np.iscomplexobj(self.samples)

    def with_samples(self, samples: np.ndarray) -> "AnalogWaveform":
        return AnalogWaveform(samples, self.rate_hz, self.t0_s)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class Spectrum:
    freqs_hz: np.ndarray
    values: np.ndarray
    ref_level: float = 1.0

    def __post_init__(self):
        freqs = np.asarray(self.freqs_hz, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if freqs.ndim != 1 or freqs.shape != values.shape:
            raise ValueError("freqs_hz and values must be 1-D arrays of equal length")
        if freqs.size > 1 and np.any(np.diff(freqs) <= 0):
            raise ValueError("freqs_hz must be strictly increasing")
        freqs.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "freqs_hz", freqs)
        object.__setattr__(self, "values", values)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def magnitude_dbfs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.values) / self.ref_level)

    def power(self) -> np.ndarray:
        """Power per line relative to a full-scale sine (linear)."""
        return (np.abs(self.values) / self.ref_level) ** 2

    def index_of(self, freq_hz: float) -> int:
        return int(np.argmin(np.abs(self.freqs_hz - freq_hz)))

    def value_at(self, freq_hz: float, tol_hz: float | None = None) -> complex:
        """Value of the line nearest ``freq_hz``; 0 if none lies within ``tol_hz``."""
        k = self.index_of(freq_hz)
        if tol_hz is not None and abs(self.freqs_hz[k] - freq_hz) > tol_hz:
            return 0j
        return complex(self.values[k])

    def to_csv(self, path: str | Path) -> None:
        write_spectrum_csv(self, path)

    def __len__(self) -> int:
        return len(self.freqs_hz)


@dataclass(frozen=True)
class NyquistZone:
    index: int
    inverted: bool = field(init=False)

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("Nyquist zone index starts at 1")
        object.__setattr__(self, "inverted", self.index % 2 == 0)

    def bounds_hz(self, dac_rate_hz: float) -> tuple[float, float]:
        half = dac_rate_hz / 2.0
        return ((self.index - 1) * half, self.index * half)


def reconstruction_response(mode, freq_hz, dac_rate_hz: float):
    """Fourier transform R(f) of the reconstruction waveform.

    Accepts a scalar or an array of frequencies.  The result carries units of
    time: ``R_NRZ(0) = T``.
    """
    mode = ReconstructionMode.parse(mode)
    if not dac_rate_hz > 0:
        raise ValueError("dac_rate_hz must be positive")
    f = np.asarray(freq_hz, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("frequency must be finite")
    T = 1.0 / dac_rate_hz
    x = f * T
    # np.sinc(u) = sin(pi u)/(pi u), so sinc(w T/2) == np.sinc(f T)
    if mode is ReconstructionMode.NRZ:
        r = T * np.exp(-1j * np.pi * x) * np.sinc(x)
    elif mode is ReconstructionMode.RZ:
        r = 0.5 * T * np.exp(-0.5j * np.pi * x) * np.sinc(0.5 * x)
    else:
        r = (0.5 * np.pi * x * T) * np.exp(-1j * (np.pi * x - 0.5 * np.pi)) * np.sinc(0.5 * x) ** 2
    if np.ndim(r) == 0:
        return complex(r)
    return r


def _hold_pattern(mode: ReconstructionMode, oversample: int) -> np.ndarray:
    half = oversample // 2
    if mode is ReconstructionMode.NRZ:
        return np.ones(oversample)
    if mode is ReconstructionMode.RZ:
        return np.concatenate([np.ones(half), np.zeros(half)])
    return np.concatenate([np.ones(half), -np.ones(half)])


def reconstruct(stream, mode=DEFAULT_MODE, oversample: int = DEFAULT_OVERSAMPLE) -> AnalogWaveform:
    """Time-domain DAC output on a grid ``oversample`` times finer than f_s.

    ``stream`` is normally a :class:`DacSamples`.  A :class:`SampleStream` is
    accepted too and goes through :func:`nco_upconvert` with the NCO at 0 Hz.
    """
    mode = ReconstructionMode.parse(mode)
    if int(oversample) != oversample or oversample < 2 or oversample % 2:
        raise ValueError(f"oversample must be an even integer >= 2, got {oversample}")
    oversample = int(oversample)
    if isinstance(stream, SampleStream):
        stream = nco_upconvert(stream, 0.0)
    if len(stream) == 0:
        raise ValueError("cannot reconstruct an empty stream")
    pattern = _hold_pattern(mode, oversample)
    out = (stream.samples[:, None] * pattern[None, :]).ravel()
    rate = stream.dac_rate_hz * oversample
    # each fine sample stands for its cell, so it is stamped at the cell centre
    return AnalogWaveform(out, rate, t0_s=0.5 / rate)


_WINDOWS = ("rect", "hann", "blackman")


def _window(name: str, n: int) -> np.ndarray:
    if name not in _WINDOWS:
        raise ValueError(f"unknown window {name!r}; expected one of {_WINDOWS}")
    if name == "rect":
        return np.ones(n)
    return sps.get_window(name, n, fftbins=True)


def fft_spectrum(waveform: AnalogWaveform, window: str = "rect") -> Spectrum:
    """Windowed one-sided amplitude spectrum of a real waveform.

    Amplitudes are divided by the window's coherent gain, so a tone that falls
    exactly on a bin reads its true amplitude for every window.  Phases are
    referenced to t = 0 rather than to the first sample.
    """
    x = np.asarray(waveform.samples)
    if np.iscomplexobj(x):
        raise ValueError("fft_spectrum expects a real waveform")
    n = len(x)
    if n < 2:
        raise ValueError("need at least 2 samples")
    w = _window(window, n)
    X = np.fft.rfft(x * w) / w.sum()
    X[1:] *= 2.0
    if n % 2 == 0:
        X[-1] /= 2.0
    freqs = np.fft.rfftfreq(n, 1.0 / waveform.rate_hz)
    if waveform.t0_s:
        X = X * np.exp(-2j * np.pi * freqs * waveform.t0_s)
    return Spectrum(freqs, X)


def sample_spectrum(stream: DacSamples) -> Spectrum:
    """One-sided spectrum of the digital samples themselves (the baseband X(f)).

    The record is treated as one period; bins run from DC to f_s/2.
    """
    x = np.asarray(stream.samples, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError("need at least 2 samples")
    X = np.fft.rfft(x) / n
    X[1:] *= 2.0
    if n % 2 == 0:
        X[-1] /= 2.0
    return Spectrum(np.fft.rfftfreq(n, 1.0 / stream.dac_rate_hz), X)


def output_spectrum(baseband: Spectrum, mode=DEFAULT_MODE, dac_rate_hz: float = 5e9,
                    n_zones: int = 4) -> Spectrum:
    """Analytic DAC output spectrum over the first ``n_zones`` Nyquist zones.

    Each baseband line at f0 is copied to ``n f_s + f0`` and, conjugated, to
    ``n f_s - f0``; every copy is weighted by ``R(f)/T``.  Copies landing on the
    same frequency are summed.
    """
    mode = ReconstructionMode.parse(mode)
    if n_zones < 1:
        raise ValueError("n_zones must be >= 1")
    fs = float(dac_rate_hz)
    T = 1.0 / fs
    f0 = baseband.freqs_hz
    a = baseband.values
    live = np.abs(a) > 0
    if np.any(f0[live] < 0) or np.any(f0[live] > fs / 2):
        bad = f0[live][(f0[live] < 0) | (f0[live] > fs / 2)][0]
        raise AliasingError(f"baseband line at {bad:.6g} Hz lies outside [0, f_s/2]")
    f_max = n_zones * fs / 2
    f0, a = f0[live], a[live]

    freqs, vals = [], []
    for n in range(0, int(math.ceil(n_zones / 2)) + 1):
        up = n * fs + f0
        freqs.append(up)
        vals.append(a * reconstruction_response(mode, up, fs) / T)
        if n > 0:
            down = n * fs - f0
            freqs.append(down)
            vals.append(np.conj(a) * reconstruction_response(mode, down, fs) / T)
    freqs = np.concatenate(freqs) if freqs else np.zeros(0)
    vals = np.concatenate(vals) if vals else np.zeros(0, complex)
    keep = (freqs >= 0) & (freqs <= f_max * (1 + 1e-12))
    freqs, vals = freqs[keep], vals[keep]

    order = np.argsort(freqs, kind="stable")
    freqs, vals = freqs[order], vals[order]
    if freqs.size == 0:
        return Spectrum(np.zeros(0), np.zeros(0, complex))
    # merge coincident copies (e.g. DC and f_s/2 images)
    tol = 1e-9 * fs
    new_group = np.concatenate([[True], np.diff(freqs) > tol])
    group = np.cumsum(new_group) - 1
    merged_vals = np.zeros(group[-1] + 1, complex)
    np.add.at(merged_vals, group, vals)
    merged_freqs = freqs[new_group]
    return Spectrum(merged_freqs, merged_vals)


def nyquist_zone(freq_hz: float, dac_rate_hz: float) -> NyquistZone:
    """Zone containing ``freq_hz``; a boundary k*f_s/2 belongs to the lower zone."""
    if not dac_rate_hz > 0:
        raise ValueError("dac_rate_hz must be positive")
    if freq_hz < 0 or not math.isfinite(freq_hz):
        raise ValueError("frequency must be finite and non-negative")
    return NyquistZone(max(1, math.ceil(freq_hz / (dac_rate_hz / 2.0))))


def interpolate_2x(stream: SampleStream) -> np.ndarray:
    """Ideal band-limited 2x interpolation of the complex stream (record taken as periodic)."""
    x = stream.data
    n = len(x)
    if n == 0:
        raise ValueError("empty stream")
    if n == 1:
        return np.repeat(x, 2)
    return sps.resample(x, 2 * n)


def nco_upconvert(baseband: SampleStream, nco_freq_hz: float, phase_rad: float = 0.0) -> DacSamples:
    """Digital upconversion to real samples at the DAC update rate.

    The stream is interpolated to f_s and multiplied by the NCO phasor; the real
    part is what the DAC converts.  NCO frequencies are folded modulo f_s, so a
    6.25 GHz setting on a 5 GHz DAC produces the 1.25 GHz digital tone whose
    third-zone image sits at 6.25 GHz.
    """
    fs = baseband.dac_rate_hz
    if not math.isfinite(nco_freq_hz):
        raise ValueError("NCO frequency must be finite")
    x2 = interpolate_2x(baseband)
    k = np.arange(len(x2), dtype=np.longdouble)
    cycles_per_sample = np.longdouble(nco_freq_hz) / np.longdouble(fs)
    cycles_per_sample -= np.floor(cycles_per_sample)
    frac = np.mod(k * cycles_per_sample, 1).astype(float)
    y = np.real(x2 * np.exp(1j * (2 * np.pi * frac + phase_rad)))
    return DacSamples(y, fs)


def write_spectrum_csv(spectrum: Spectrum, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_hz", "magnitude_dbfs", "phase_rad"])
        db = spectrum.magnitude_dbfs()
        ph = np.angle(spectrum.values)
        for f, m, p in zip(spectrum.freqs_hz, db, ph):
            w.writerow([f"{f:.17g}", f"{m:.17g}", f"{p:.17g}"])


def read_spectrum_csv(path: str | Path) -> Spectrum:
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    values = 10 ** (data["magnitude_dbfs"] / 20.0) * np.exp(1j * data["phase_rad"])
    return Spectrum(data["freq_hz"], values)
