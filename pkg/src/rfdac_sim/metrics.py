"""Spectral and decay-fit metrics: SFDR, linearity L(A), harmonics, RB and coherence fits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize

from .analog_chain import ChainSpec, run_chain
from .dac_core import AnalogWaveform, Spectrum, fft_spectrum

CARRIER_HALF_WIDTH_BINS = 2
DEFAULT_DELTA = 0.002


class FitError(RuntimeError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (last residual norm {residual:.3g})")
        self.residual = residual


@dataclass(frozen=True)
class ExclusionMask:
    windows: tuple = ()

    def __post_init__(self):
        wins = tuple(sorted((float(a), float(b)) for a, b in self.windows))
        for lo, hi in wins:
            if not lo <= hi:
                raise ValueError(f"mask window [{lo}, {hi}] is reversed")
        for (_, hi), (lo, _) in zip(wins, wins[1:]):
            if lo <= hi:
                raise ValueError("mask windows overlap")
        object.__setattr__(self, "windows", wins)

    @classmethod
    def around(cls, centers: Sequence[float], half_width_hz: float) -> "ExclusionMask":
        """Windows of +-half_width around each center; overlapping windows are merged."""
        spans = sorted((c - half_width_hz, c + half_width_hz) for c in centers)
        merged: list[list[float]] = []
        for lo, hi in spans:
            if merged and lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return cls(tuple(tuple(w) for w in merged))

    def contains(self, freqs: np.ndarray) -> np.ndarray:
        freqs = np.asarray(freqs)
        out = np.zeros(freqs.shape, bool)
        for lo, hi in self.windows:
            out |= (freqs >= lo) & (freqs <= hi)
        return out


def _band_power(p: np.ndarray, k: int, half: int = CARRIER_HALF_WIDTH_BINS) -> float:
    return float(p[max(k - half, 0):k + half + 1].sum())


def sfdr(s: Spectrum, carrier_hz: float, mask: ExclusionMask | None = None) -> float:
    """Carrier power (peak +-2 bins) over the strongest bin outside the carrier window and mask, in dB."""
    mask = mask or ExclusionMask()
    p = s.power()
    k0 = s.index_of(carrier_hz)
    lo, hi = max(k0 - CARRIER_HALF_WIDTH_BINS, 0), k0 + CARRIER_HALF_WIDTH_BINS + 1
    k = lo + int(np.argmax(p[lo:hi]))
    carrier = _band_power(p, k)
    floor = float(np.median(p))
    if not carrier > 10 * floor or carrier == 0:
        raise ValueError(f"carrier at {carrier_hz:g} Hz is not above the noise floor")
    allowed = ~mask.contains(s.freqs_hz)
    allowed[max(k - CARRIER_HALF_WIDTH_BINS, 0):k + CARRIER_HALF_WIDTH_BINS + 1] = False
    if not allowed.any():
        return math.inf
    spur = float(p[allowed].max())
    if spur == 0:
        return math.inf
    return 10 * math.log10(carrier / spur)


@dataclass(frozen=True)
class LinearityCurve:
    amplitudes: np.ndarray
    v_o: np.ndarray
    l_values: np.ndarray
    normalization: float

    @property
    def l_norm(self) -> np.ndarray:
        return self.l_values / self.normalization

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["amplitude", "v_o", "l_norm"])
            for a, v, l in zip(self.amplitudes, self.v_o, self.l_norm):
                w.writerow([f"{a:.17g}", f"{v:.17g}", f"{l:.17g}"])


def probe_waveform(chain: ChainSpec, probe_freq_hz: float, amplitude: float, *,
                   rate_hz: float, n_samples: int) -> AnalogWaveform:
    """Single-tone chain input: an RF cosine, or an I+jQ tone when the chain starts at a mixer."""
    t = np.arange(n_samples) / rate_hz
    mixer = chain.mixer
    if mixer is None:
        return AnalogWaveform(amplitude * np.cos(2 * np.pi * probe_freq_hz * t), rate_hz)
    f_bb = probe_freq_hz - mixer.lo_freq_hz
    return AnalogWaveform(amplitude * np.exp(2j * np.pi * f_bb * t), rate_hz)


def _probe_grid(chain: ChainSpec, probe_freq_hz: float, record_s: float, rate_hz: float | None):
    if rate_hz is None:
        top = max(abs(probe_freq_hz), abs(chain.mixer.lo_freq_hz) if chain.mixer else 0.0)
        rate_hz = 8.0 * top
    return rate_hz, int(round(record_s * rate_hz))


def fundamental_amplitude(chain: ChainSpec, probe_freq_hz: float, amplitude: float, *,
                          rate_hz: float, n_samples: int, seed: int = 0) -> float:
    w = probe_waveform(chain, probe_freq_hz, amplitude, rate_hz=rate_hz, n_samples=n_samples)
    s = fft_spectrum(run_chain(w, chain, seed))
    return float(np.abs(s.values[s.index_of(probe_freq_hz)]))


def linearity(chain: ChainSpec, probe_freq_hz: float, amplitudes: Sequence[float],
              delta: float = DEFAULT_DELTA, *, record_s: float = 1e-6, rate_hz: float | None = None,
              seed: int = 0, norm_range: tuple = (0.10, 0.20)) -> LinearityCurve:
    """Central-difference slope of output fundamental vs programmed amplitude.

    The curve is normalised by the mean slope over ``norm_range`` (fractions of
    full scale).  If none of the requested amplitudes fall in that range the
    slope is evaluated on a small grid inside it.
    """
    amps = np.asarray(amplitudes, float)
    if amps.size == 0:
        raise ValueError("no amplitudes given")
    if np.any(np.diff(amps) <= 0):
        raise ValueError("amplitudes must be strictly increasing")
    if amps[0] - delta < 0 or amps[-1] + delta > 1:
        raise ValueError("amplitude +- delta must stay inside [0, 1]")
    rate_hz, n = _probe_grid(chain, probe_freq_hz, record_s, rate_hz)

    def vo(a):
        return fundamental_amplitude(chain, probe_freq_hz, a, rate_hz=rate_hz, n_samples=n, seed=seed)

    def slope(a):
        return (vo(a + delta) - vo(a - delta)) / (2 * delta)

    v = np.array([vo(a) for a in amps])
    l_vals = np.array([slope(a) for a in amps])
    lo, hi = norm_range
    inside = (amps >= lo - 1e-12) & (amps <= hi + 1e-12)
    if inside.any():
        norm = float(l_vals[inside].mean())
    else:
        norm = float(np.mean([slope(a) for a in np.linspace(lo, hi, 5)]))
    return LinearityCurve(amps, v, l_vals, norm)


class Harmonic(NamedTuple):
    order: int
    freq_hz: float
    dbc: float
    in_range: bool


def harmonic_powers(s: Spectrum, f0: float, n_max: int = 5) -> list[Harmonic]:
    """Integrated power at k*f0 (k = 2..n_max) relative to the fundamental.

    Orders above the spectrum's top frequency are returned with ``in_range``
    False and ``dbc`` NaN.
    """
    p = s.power()
    k0 = s.index_of(f0)
    fund = _band_power(p, k0)
    if fund <= 0:
        raise ValueError(f"no fundamental at {f0:g} Hz")
    out = []
    for k in range(2, n_max + 1):
        fk = k * f0
        if fk > s.freqs_hz[-1]:
            out.append(Harmonic(k, fk, float("nan"), False))
            continue
        pk = _band_power(p, s.index_of(fk))
        out.append(Harmonic(k, fk, 10 * math.log10(pk / fund) if pk > 0 else -math.inf, True))
    return out


@dataclass(frozen=True)
class CoherenceFit:
    tau_s: float
    amp: float
    offset: float
    kind: str = "T1"
    freq_hz: float | None = None
    phase_rad: float | None = None
    covariance: np.ndarray = field(default=None, repr=False)
    residual_norm: float = 0.0

    def __post_init__(self):
        if not self.tau_s > 0:
            raise ValueError("tau_s must be positive")

    @property
    def tau_stderr(self) -> float:
        return float(np.sqrt(self.covariance[0, 0])) if self.covariance is not None else float("nan")

    def summary(self) -> str:
        lines = [f"kind: {self.kind}",
                 f"tau_s: {self.tau_s:.9g} +- {self.tau_stderr:.3g}",
                 f"amp: {self.amp:.9g}",
                 f"offset: {self.offset:.9g}"]
        if self.freq_hz is not None:
            lines.append(f"freq_hz: {self.freq_hz:.9g}")
        lines.append(f"residual_norm: {self.residual_norm:.3g}")
        return "\n".join(lines)


def _decay(x, tau, amp, off):
    return amp * np.exp(-x / tau) + off


def _decay_cos(x, tau, amp, off, freq, phase):
    return amp * np.exp(-x / tau) * np.cos(2 * np.pi * freq * x + phase) + off


def _decay_jac(x, tau, amp, off):
    e = np.exp(-x / tau)
    return np.column_stack([amp * e * x / tau**2, e, np.ones_like(x)])


def _decay_cos_jac(x, tau, amp, off, freq, phase):
    e = np.exp(-x / tau)
    arg = 2 * np.pi * freq * x + phase
    c, s = np.cos(arg), np.sin(arg)
    return np.column_stack([amp * e * c * x / tau**2, e * c, np.ones_like(x),
                            -amp * e * s * 2 * np.pi * x, -amp * e * s])


def fit_exponential_decay(x, y, *, kind: str = "T1", oscillating: bool | None = None,
                          freq_guess_hz: float | None = None) -> CoherenceFit:
    """Least-squares fit of ``A exp(-x/tau) + B``, optionally times ``cos(2 pi f x + phi)``.

    ``oscillating`` defaults to True for Ramsey-type data.  Internally x and y are
    rescaled to order one for conditioning.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 5 or x.shape != y.shape:
        raise ValueError("need at least 5 (x, y) points")
    if oscillating is None:
        oscillating = kind == "T2_ramsey"
    xs = float(np.ptp(x)) or 1.0
    ys = float(np.ptp(y))
    if ys <= 1e-12 * max(1.0, float(np.abs(y).max())):
        raise FitError("degenerate input: y is constant, tau is unbounded", 0.0)
    u = x / xs
    v = (y - y.mean()) / ys

    off0 = float(v[-1])
    amp0 = float(v[0] - v[-1]) or 1.0
    if oscillating:
        resid = v - v.mean()
        uu = np.linspace(u.min(), u.max(), 4 * len(u))
        spec = np.abs(np.fft.rfft(np.interp(uu, u, resid)))
        fr = np.fft.rfftfreq(len(uu), uu[1] - uu[0])
        f0 = freq_guess_hz * xs if freq_guess_hz else float(fr[1 + np.argmax(spec[1:])])
        p0 = [0.5, float(np.abs(resid).max()), float(v.mean()), f0, 0.0]
        model = _decay_cos
        best = None
        for ph in (0.0, np.pi / 2, np.pi, -np.pi / 2):
            p0[4] = ph
            try:
                popt, pcov = optimize.curve_fit(model, u, v, p0=p0, jac=_decay_cos_jac, maxfev=20000,
                                                ftol=1e-15, xtol=1e-15)
            except RuntimeError:
                continue
            r = float(np.linalg.norm(model(u, *popt) - v))
            if best is None or r < best[2]:
                best = (popt, pcov, r)
        if best is None:
            raise FitError("oscillating decay fit did not converge", float(np.linalg.norm(v)))
        popt, pcov, r = best
    else:
        model = _decay
        # rough tau from the log of the normalised decay
        z = (v - off0) / amp0
        ok = z > 0.05
        tau0 = 0.5
        if ok.sum() >= 2:
            slope = np.polyfit(u[ok], np.log(z[ok]), 1)[0]
            if slope < 0:
                tau0 = -1.0 / slope
        try:
            popt, pcov = optimize.curve_fit(model, u, v, p0=[tau0, amp0, off0], jac=_decay_jac, maxfev=20000,
                                            ftol=1e-15, xtol=1e-15, gtol=1e-15)
        except RuntimeError as exc:
            resid = float(np.linalg.norm(model(u, tau0, amp0, off0) - v))
            raise FitError(f"decay fit did not converge: {exc}", resid) from None
        r = float(np.linalg.norm(model(u, *popt) - v))
    if not np.all(np.isfinite(popt)) or popt[0] <= 0:
        raise FitError("fit produced a non-physical decay constant", r)
    if popt[0] > 1e3:
        raise FitError("degenerate fit: decay constant unbounded", r)

    tau = popt[0] * xs
    amp = popt[1] * ys
    off = popt[2] * ys + y.mean()
    scale = np.array([xs, ys, ys] + ([1 / xs, 1.0] if oscillating else []))
    cov = pcov * np.outer(scale, scale)
    freq = phase = None
    if oscillating:
        freq, phase = popt[3] / xs, popt[4]
        if freq < 0:
            freq, phase = -freq, -phase
        if amp < 0:
            amp, phase = -amp, phase + np.pi
        phase = float(np.angle(np.exp(1j * phase)))
    return CoherenceFit(float(tau), float(amp), float(off), kind, freq, phase, cov, r * ys)


@dataclass(frozen=True)
class RbFit:
    p: float
    amp: float
    offset: float
    d: int
    p_stderr: float = float("nan")
    covariance: np.ndarray = field(default=None, repr=False)
    residual_norm: float = 0.0

    @property
    def valid(self) -> bool:
        return 0.0 <= self.p <= 1.0

    @property
    def error_per_clifford(self) -> float:
        return (1.0 - self.p) * (self.d - 1) / self.d

    def summary(self) -> str:
        return "\n".join([
            f"p: {self.p:.9g} +- {self.p_stderr:.3g}",
            f"amp: {self.amp:.9g}",
            f"offset: {self.offset:.9g}",
            f"error_per_clifford: {self.error_per_clifford:.6g}",
            f"d: {self.d}",
            f"valid: {self.valid}",
            f"residual_norm: {self.residual_norm:.3g}",
        ])


def fit_rb_decay(lengths, survival, *, d: int = 2, sigma=None) -> RbFit:
    """Fit ``A p^m + B``.

    ``survival`` may be one value per length or a 2-D array of shape
    (n_lengths, n_sequences); in the latter case the mean is fitted with the
    standard error of each length as weights.
    """
    m = np.asarray(lengths, float)
    y = np.asarray(survival, float)
    if y.ndim == 2:
        if sigma is None and y.shape[1] > 1:
            sigma = y.std(axis=1, ddof=1) / np.sqrt(y.shape[1])
        y = y.mean(axis=1)
    if m.size < 4 or m.shape != y.shape:
        raise ValueError("need at least 4 sequence lengths")
    if sigma is not None:
        sigma = np.asarray(sigma, float)
        if np.any(sigma <= 0):
            sigma = None
    b0 = 1.0 / d  # depolarized asymptote
    ratio = (y[1:] - b0) / (y[:-1] - b0)
    good = np.isfinite(ratio) & (ratio > 0)
    steps = np.diff(m)
    p0 = float(np.median(ratio[good] ** (1 / steps[good]))) if good.any() else 0.99
    p0 = float(np.clip(p0, 0.01, 0.99999))
    a0 = float((y[0] - b0) / p0 ** m[0]) or 0.5

    def model(mm, a, p, b):
        return a * np.power(np.abs(p), mm) + b

    if np.allclose(y, y[0], rtol=0, atol=1e-14):
        return RbFit(1.0, float(y[0] - b0), b0, d, 0.0, np.zeros((3, 3)), 0.0)
    try:
        popt, pcov = optimize.curve_fit(model, m, y, p0=[a0, p0, b0], sigma=sigma,
                                        absolute_sigma=sigma is not None, maxfev=20000,
                                        ftol=1e-15, xtol=1e-15)
    except RuntimeError as exc:
        raise FitError(f"RB fit did not converge: {exc}",
                       float(np.linalg.norm(model(m, a0, p0, b0) - y))) from None
    r = float(np.linalg.norm(model(m, *popt) - y))
    perr = float(np.sqrt(pcov[1, 1])) if np.isfinite(pcov[1, 1]) else float("nan")
    return RbFit(float(popt[1]), float(popt[0]), float(popt[2]), d, perr, pcov, r)


def write_sfdr_csv(amplitudes, sfdr_dbc, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["amplitude", "sfdr_dbc"])
        for a, s in zip(amplitudes, sfdr_dbc):
            w.writerow([f"{a:.17g}", f"{s:.17g}"])
