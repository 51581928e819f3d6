import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfdac_sim.dac_core import (AliasingError, AnalogWaveform, DacSamples, FullScaleError, NyquistZone,
                                ReconstructionMode, SampleStream, Spectrum, fft_spectrum, nco_upconvert,
                                nyquist_zone, output_spectrum, read_spectrum_csv, reconstruct,
                                reconstruction_response, sample_spectrum, write_spectrum_csv)

FS = 5e9
T = 1 / FS

# |R(f)|/T and arg R(f), frozen from adaptive quadrature of the hold shapes
QUAD = {
    "NRZ": {0.0: (1.0, 0.0), 2.5e9: (0.6366197723675813, -1.5707963267948966),
            1.05e9: (0.9290208309024828, -0.6597344572538566), 3.95e9: (0.24695490441711565, -2.481858196335937),
            6.05e9: (0.16123502023927386, -0.6597344572538559), 8.95e9: (0.10899127066453713, -2.4818581963359363)},
    "RZ": {0.0: (0.5, 0.0), 2.5e9: (0.450158158078553, -0.7853981633974483),
           5e9: (0.31830988618379064, -1.5707963267948966), 5.3505e9: (0.2956565816122442, -1.6809091493032189),
           8.95e9: (0.05760118241318453, -2.8117254249628645)},
    "MIX": {2.5e9: (0.6366197723675813, 0.0), 5e9: (0.6366197723675814, -1.5707963267948966),
            1.05e9: (0.31807492441396645, 0.91106186954104), 3.95e9: (0.7212962509375296, -0.91106186954104),
            5.3505e9: (0.5877319969609583, -1.791021971811541), 6.05e9: (0.4709289572236765, -2.230530784048753)},
}


@pytest.mark.parametrize("mode", ["NRZ", "RZ", "MIX"])
def test_response_matches_quadrature(mode):
    for f, (mag, ph) in QUAD[mode].items():
        r = reconstruction_response(mode, f, FS) / T
        assert abs(r) == pytest.approx(mag, rel=1e-10, abs=1e-14)
        assert np.angle(r) == pytest.approx(ph, abs=1e-9)


def test_response_trivial_values():
    assert reconstruction_response("NRZ", 0.0, FS) == pytest.approx(T, rel=1e-15)
    assert reconstruction_response("RZ", 0.0, FS) == pytest.approx(T / 2, rel=1e-15)
    assert reconstruction_response("MIX", 0.0, FS) == 0
    assert abs(reconstruction_response("NRZ", FS / 2, FS)) / T == pytest.approx(2 / math.pi, abs=1e-12)
    assert abs(reconstruction_response("MIX", FS, FS)) / T == pytest.approx(2 / math.pi, abs=1e-12)


def test_response_rejects_bad_input():
    with pytest.raises(ValueError):
        reconstruction_response("NRZ", float("nan"), FS)
    with pytest.raises(ValueError):
        reconstruction_response("NRZ", 1e9, 0.0)
    with pytest.raises(ValueError):
        ReconstructionMode.parse("DUO")


def test_nulls():
    n = np.arange(1, 6)
    assert np.all(np.abs(reconstruction_response("NRZ", n * FS, FS)) < 1e-25)
    assert abs(reconstruction_response("MIX", 2 * FS, FS)) < 1e-25


def test_zone_ordering():
    f = np.linspace(FS / 2, 1.5 * FS, 2001)[1:-1]
    mix = np.abs(reconstruction_response("MIX", f, FS))
    nrz = np.abs(reconstruction_response("NRZ", f, FS))
    assert np.all(mix > nrz)
    for edge in (FS / 2, 1.5 * FS):
        assert abs(reconstruction_response("MIX", edge, FS)) == pytest.approx(
            abs(reconstruction_response("NRZ", edge, FS)), rel=1e-12)


def test_reconstruct_hold_shapes():
    d = DacSamples(np.array([1.0, 0.0, 0.0]), FS)
    rz = reconstruct(d, "RZ", 8).samples
    assert np.array_equal(rz[:8], [1, 1, 1, 1, 0, 0, 0, 0])
    mix = reconstruct(d, "MIX", 8).samples
    assert np.array_equal(mix[:8], [1, 1, 1, 1, -1, -1, -1, -1])
    assert np.all(mix[8:] == 0)
    nrz = reconstruct(DacSamples(np.ones(5), FS), "NRZ", 4)
    assert np.all(nrz.samples == 1.0)
    assert nrz.rate_hz == 4 * FS


def test_reconstruct_errors():
    with pytest.raises(ValueError):
        reconstruct(DacSamples(np.ones(3), FS), "MIX", 3)
    with pytest.raises(ValueError):
        reconstruct(DacSamples(np.zeros(0), FS), "MIX", 4)


def test_full_scale_is_an_error():
    with pytest.raises(FullScaleError):
        SampleStream(np.array([0.5, 1.2j]), 2.5e9)
    s = SampleStream(np.array([1.0, 1j]), 2.5e9)
    assert s.dac_rate_hz == 5e9


def test_nyquist_zone_examples():
    assert nyquist_zone(6.5138e9, FS) == NyquistZone(3)
    assert not nyquist_zone(6.5138e9, FS).inverted
    assert nyquist_zone(2.4e9, FS).index == 1
    z = nyquist_zone(3.95e9, FS)
    assert z.index == 2 and z.inverted
    # boundaries belong to the lower zone
    assert nyquist_zone(2.5e9, FS).index == 1
    assert nyquist_zone(5e9, FS).index == 2
    with pytest.raises(ValueError):
        nyquist_zone(-1.0, FS)


@given(st.floats(0, 40e9, allow_nan=False))
def test_nyquist_zone_partition(f):
    z = nyquist_zone(f, FS)
    lo, hi = z.bounds_hz(FS)
    assert (lo < f <= hi) or (f == 0 and z.index == 1)
    assert z.inverted == (z.index % 2 == 0)


def test_fft_spectrum_single_bin_and_zero():
    rate = 1e9
    n = 1000
    t = np.arange(n) / rate
    s = fft_spectrum(AnalogWaveform(0.7 * np.cos(2 * np.pi * 50e6 * t), rate))
    k = s.index_of(50e6)
    assert abs(s.values[k]) == pytest.approx(0.7, rel=1e-12)
    others = np.delete(np.abs(s.values), k)
    assert others.max() < 1e-12
    z = fft_spectrum(AnalogWaveform(np.zeros(64), rate))
    assert np.all(z.values == 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=8, max_size=64))
def test_parseval_rect(xs):
    x = np.array(xs)
    s = fft_spectrum(AnalogWaveform(x, 1e9), "rect")
    # one-sided amplitudes: DC and Nyquist count once, the rest as A^2/2
    p = np.abs(s.values) ** 2 / 2
    p[0] *= 2
    if len(x) % 2 == 0:
        p[-1] *= 2
    assert p.sum() == pytest.approx(np.mean(x**2), rel=1e-9, abs=1e-15)


def _tone_stream(n, nco, phase=0.0, tones=((0.0, 0.5),)):
    rate = FS / 2
    t = np.arange(n) / rate
    x = sum(a * np.exp(2j * np.pi * f * t) for f, a in tones)
    return nco_upconvert(SampleStream(x, rate), nco, phase)


def test_nco_tone_and_sideband():
    d = _tone_stream(500, 1e9, tones=((0.0, 1.0),))
    k = np.arange(1000)
    assert np.allclose(d.samples, np.cos(2 * np.pi * 1e9 * k / FS), atol=1e-12)
    d = _tone_stream(2500, 6.25e9, tones=((-100e6, 0.5),))
    s = fft_spectrum(reconstruct(d, "MIX", 16))
    band = (s.freqs_hz > 5e9) & (s.freqs_hz < 7.5e9)
    assert s.freqs_hz[band][np.argmax(np.abs(s.values[band]))] == pytest.approx(6.15e9)


def test_nco_above_nyquist_lands_in_third_zone():
    d = _tone_stream(2500, 6.25e9)
    s = fft_spectrum(reconstruct(d, "MIX", 64))
    zone3 = (s.freqs_hz > 5e9) & (s.freqs_hz < 7.5e9)
    assert s.freqs_hz[zone3][np.argmax(np.abs(s.values[zone3]))] == pytest.approx(6.25e9)
    # image amplitude follows R(f) of the MIX hold
    ratio = abs(s.values[s.index_of(6.25e9)]) / abs(s.values[s.index_of(3.75e9)])
    expect = abs(reconstruction_response("MIX", 6.25e9, FS) / reconstruction_response("MIX", 3.75e9, FS))
    assert ratio == pytest.approx(expect, rel=1e-3)


@pytest.mark.parametrize("mode", ["NRZ", "RZ", "MIX"])
def test_output_spectrum_matches_fft(mode):
    d = _tone_stream(2500, 1.05e9)
    ana = output_spectrum(sample_spectrum(d), mode, FS, 4)
    fft = fft_spectrum(reconstruct(d, mode, 64), "hann")
    for f, v in zip(ana.freqs_hz, ana.values):
        if abs(v) < 1e-4:
            continue
        got = abs(fft.values[fft.index_of(f)])
        assert 20 * np.log10(got / abs(v)) == pytest.approx(0.0, abs=0.05)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["NRZ", "RZ", "MIX"]))
def test_random_stream_analytic_vs_numeric(seed, mode):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-0.7, 0.7, 64)
    d = DacSamples(x, FS)
    ana = output_spectrum(sample_spectrum(d), mode, FS, 4)
    fft = fft_spectrum(reconstruct(d, mode, 64), "rect")
    for f, v in zip(ana.freqs_hz, ana.values):
        if 20 * np.log10(abs(v) + 1e-300) < -80 or f >= 2 * FS - 1:
            continue
        got = abs(fft.values[fft.index_of(f)])
        assert abs(20 * np.log10(got / abs(v))) < 0.1


def test_output_spectrum_dc_and_aliasing():
    dc = Spectrum(np.array([0.0]), np.array([1.0]))
    nrz = output_spectrum(dc, "NRZ", FS, 4)
    assert np.flatnonzero(np.abs(nrz.values) > 1e-12).tolist() == [0]
    mix = output_spectrum(dc, "MIX", FS, 4)
    assert mix.values[0] == 0
    # the image at f_s survives the MIX hold
    assert abs(mix.values[1]) == pytest.approx(2 * abs(reconstruction_response("MIX", FS, FS)) / T)
    with pytest.raises(AliasingError):
        output_spectrum(Spectrum(np.array([3e9]), np.array([1.0])), "NRZ", FS, 4)


def test_image_bookkeeping():
    d = _tone_stream(2500, 1.05e9)
    ana = output_spectrum(sample_spectrum(d), "MIX", FS, 4)
    live = ana.freqs_hz[np.abs(ana.values) > 1e-9]
    assert np.allclose(live, [1.05e9, 3.95e9, 6.05e9, 8.95e9])


def test_spectrum_invariants_and_csv(tmp_path):
    with pytest.raises(ValueError):
        Spectrum(np.array([1.0, 0.5]), np.array([1, 2]))
    with pytest.raises(ValueError):
        Spectrum(np.array([1.0]), np.array([1, 2]))
    s = Spectrum(np.array([0.0, 1e9, 2e9]), np.array([0.5, 0.25j, -0.125]))
    p = tmp_path / "s.csv"
    write_spectrum_csv(s, p)
    text = p.read_bytes()
    assert text.startswith(b"freq_hz,magnitude_dbfs,phase_rad\n")
    assert b"\r" not in text
    back = read_spectrum_csv(p)
    assert np.allclose(back.values, s.values, rtol=1e-15, atol=0)
