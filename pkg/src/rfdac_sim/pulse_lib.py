"""Baseband pulse envelopes and their conversion to DAC sample streams.

Samples sit at ``t_k = k / rate`` for ``k = 0 .. round(length * rate) - 1``.
Gaussians are truncated to ``4 sigma`` by default, centred on the pulse
interval and baseline-subtracted, so the envelope is exactly zero at ``t = 0``
and at ``t = length`` and peaks at 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .dac_core import FullScaleError, SampleStream


@dataclass(frozen=True)
class Gaussian:
    sigma_s: float
    length_s: float | None = None

    def __post_init__(self):
        if self.length_s is None:
            object.__setattr__(self, "length_s", 4.0 * self.sigma_s)
        _positive(sigma_s=self.sigma_s, length_s=self.length_s)


@dataclass(frozen=True)
class DragGaussian:
    sigma_s: float
    length_s: float | None = None
    beta_s: float = 0.0

    def __post_init__(self):
        if self.length_s is None:
            object.__setattr__(self, "length_s", 4.0 * self.sigma_s)
        _positive(sigma_s=self.sigma_s, length_s=self.length_s)


@dataclass(frozen=True)
class FlatTopGaussian:
    """Gaussian rise over 2 sigma, flat section, Gaussian fall over 2 sigma."""

    sigma_s: float
    flat_s: float

    def __post_init__(self):
        _positive(sigma_s=self.sigma_s)
        if self.flat_s < 0:
            raise ValueError("flat_s must be >= 0")

    @property
    def length_s(self) -> float:
        return 4.0 * self.sigma_s + self.flat_s


@dataclass(frozen=True)
class Constant:
    length_s: float

    def __post_init__(self):
        _positive(length_s=self.length_s)


Envelope = Union[Gaussian, DragGaussian, FlatTopGaussian, Constant]


def _positive(**kw):
    for name, v in kw.items():
        if not v > 0:
            raise ValueError(f"{name} must be > 0, got {v}")


def n_samples(env: Envelope, rate_hz: float) -> int:
    return int(round(env.length_s * rate_hz))


def _edge_gaussian(t, center, sigma, half_width):
    """Baseline-subtracted, unit-peak Gaussian and its time derivative."""
    g0 = np.exp(-0.5 * (half_width / sigma) ** 2)
    g = np.exp(-0.5 * ((t - center) / sigma) ** 2)
    scale = 1.0 / (1.0 - g0)
    # clamp at the truncation edge so rounding in t - center cannot leave a residue
    e = np.where(np.abs(t - center) >= half_width * (1 - 1e-12), 0.0, (g - g0) * scale)
    return e, -(t - center) / sigma**2 * g * scale


def envelope_value(env: Envelope, t) -> np.ndarray:
    """Evaluate E(t) + i Q(t) at arbitrary times; zero outside the pulse."""
    t = np.asarray(t, dtype=float)
    L = env.length_s
    inside = (t >= 0) & (t <= L)
    if isinstance(env, Constant):
        out = np.where((t >= 0) & (t < L), 1.0, 0.0).astype(complex)
        return out
    if isinstance(env, (Gaussian, DragGaussian)):
        e, de = _edge_gaussian(t, L / 2, env.sigma_s, L / 2)
        beta = env.beta_s if isinstance(env, DragGaussian) else 0.0
        out = e + 1j * beta * de
    else:
        s2 = 2.0 * env.sigma_s
        rise, _ = _edge_gaussian(t, s2, env.sigma_s, s2)
        fall, _ = _edge_gaussian(t, s2 + env.flat_s, env.sigma_s, s2)
        out = np.where(t < s2, rise, np.where(t > s2 + env.flat_s, fall, 1.0)).astype(complex)
    return np.where(inside, out, 0.0)


def render_envelope(env: Envelope, rate_hz: float) -> np.ndarray:
    """Complex envelope samples; the DRAG quadrature uses the analytic derivative."""
    if not rate_hz > 0:
        raise ValueError("rate_hz must be positive")
    n = n_samples(env, rate_hz)
    if n < 2:
        raise ValueError(f"{type(env).__name__} of {env.length_s:g} s spans fewer than 2 samples at {rate_hz:g} Hz")
    return envelope_value(env, np.arange(n) / rate_hz)


@dataclass(frozen=True)
class Pulse:
    envelope: Envelope
    amplitude: float
    phase_rad: float = 0.0
    freq_hz: float = 0.0
    channel: str = "ch0"

    def __post_init__(self):
        if not 0.0 <= self.amplitude <= 1.0:
            raise ValueError(f"amplitude must lie in [0, 1], got {self.amplitude}")

    @property
    def length_s(self) -> float:
        return self.envelope.length_s

    def scaled(self, amplitude: float) -> "Pulse":
        return Pulse(self.envelope, amplitude, self.phase_rad, self.freq_hz, self.channel)


def pulse_samples(p: Pulse, rate_hz: float) -> np.ndarray:
    return p.amplitude * np.exp(1j * p.phase_rad) * render_envelope(p.envelope, rate_hz)


def pulse_to_stream(p: Pulse, data_rate_hz: float) -> SampleStream:
    x = pulse_samples(p, data_rate_hz)
    mag = np.abs(x)
    if mag.max() > 1.0:
        k = int(np.argmax(mag))
        raise FullScaleError(f"pulse on {p.channel}: peak sample {k} has magnitude {mag[k]:.6g} > 1")
    return SampleStream(x, data_rate_hz, carrier_hz=p.freq_hz)


def write_envelope_csv(env: Envelope, rate_hz: float, path: str | Path) -> None:
    z = render_envelope(env, rate_hz)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "re", "im"])
        for k, v in enumerate(z):
            w.writerow([f"{k / rate_hz:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}"])


def read_envelope_csv(path: str | Path) -> np.ndarray:
    """Load complex samples from a ``t_s,re,im`` (or ``re,im``) CSV file."""
    data = np.atleast_1d(np.genfromtxt(path, delimiter=",", names=True))
    return data["re"] + 1j * data["im"]
