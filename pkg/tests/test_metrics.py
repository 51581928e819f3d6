import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfdac_sim.analog_chain import AmplifierModel, Attenuator, ChainSpec, FilterModel, MixerModel, run_chain
from rfdac_sim.dac_core import Spectrum, fft_spectrum
from rfdac_sim.metrics import (CoherenceFit, ExclusionMask, FitError, fit_exponential_decay, fit_rb_decay,
                               harmonic_powers, linearity, probe_waveform, sfdr, write_sfdr_csv)

F = np.arange(0, 1001) * 1e6


def _spec(lines, floor=1e-8):
    v = np.full(F.shape, floor, complex)
    for f, db in lines.items():
        v[int(round(f / 1e6))] = 10 ** (db / 20)
    return Spectrum(F, v)


def test_sfdr_single_spur():
    assert sfdr(_spec({100e6: 0.0, 300e6: -50.0}), 100e6) == pytest.approx(50.0, abs=1e-9)


def test_sfdr_mask_skips_spur():
    s = _spec({100e6: 0.0, 300e6: -50.0, 450e6: -63.0})
    mask = ExclusionMask(((295e6, 305e6),))
    assert sfdr(s, 100e6, mask) == pytest.approx(63.0, abs=1e-9)


def test_sfdr_carrier_window_is_two_bins():
    # spurs inside +-2 bins count as carrier; the one at 3 bins is a spur
    s = _spec({100e6: 0.0, 102e6: -20.0, 103e6: -30.0})
    assert sfdr(s, 100e6) == pytest.approx(10 * math.log10(1 + 0.01) + 30.0, abs=1e-9)


def test_sfdr_carrier_below_floor():
    with pytest.raises(ValueError):
        sfdr(_spec({}), 100e6)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(150, 990), st.floats(-90, -20)), min_size=1, max_size=8),
       st.lists(st.tuples(st.floats(150e6, 990e6), st.floats(0, 30e6)), max_size=4))
def test_sfdr_mask_monotone(spurs, extra):
    s = _spec({100e6: 0.0, **{k * 1e6: db for k, db in spurs}})
    small = ExclusionMask.around([c for c, _ in extra[:1]], 1e6)
    big = ExclusionMask.around([c for c, _ in extra] or [500e6], 40e6)
    merged = ExclusionMask.around([c for c, _ in extra[:1]] + [c for c, _ in extra] + [500e6], 40e6)
    assert sfdr(s, 100e6, merged) >= sfdr(s, 100e6, small) - 1e-12
    assert sfdr(s, 100e6, merged) >= sfdr(s, 100e6, big) - 1e-12
    assert sfdr(s, 100e6, big) >= sfdr(s, 100e6) - 1e-12


def test_mask_invariants():
    with pytest.raises(ValueError):
        ExclusionMask(((1.0, 3.0), (2.0, 4.0)))
    with pytest.raises(ValueError):
        ExclusionMask(((3.0, 1.0),))
    m = ExclusionMask.around([10.0, 12.0, 30.0], 2.0)
    assert m.windows == ((8.0, 14.0), (28.0, 32.0))


def test_linear_chain_linearity_is_flat():
    chain = ChainSpec((FilterModel("lowpass", 6e9, 30.0), Attenuator(3.0)))
    amps = np.linspace(0.05, 0.95, 10)
    c = linearity(chain, 1.05e9, amps, record_s=200e-9, rate_hz=40e9)
    assert np.all(np.abs(c.l_norm - 1) < 1e-3)


def test_cubic_linearity_matches_central_difference_oracle():
    a3, d = -0.4, 0.002
    chain = ChainSpec((MixerModel(5e9, a3=a3),))
    amps = np.array([0.1, 0.15, 0.2, 0.4, 0.6, 0.8])
    c = linearity(chain, 5.1e9, amps, d, record_s=100e-9)
    # V_o = A + (3/4) a3 A^3, so the central difference is 1 + (3/4) a3 (3A^2 + d^2)
    expect = 1 + 0.75 * a3 * (3 * amps**2 + d**2)
    assert np.allclose(c.l_values, expect, rtol=1e-9)
    assert c.normalization == pytest.approx(expect[:3].mean(), rel=1e-9)
    assert np.all(np.diff(c.l_norm) < 0)
    assert c.l_norm[-1] < 0.9


def test_linearity_input_errors():
    chain = ChainSpec()
    with pytest.raises(ValueError):
        linearity(chain, 1e9, [0.5, 0.4])
    with pytest.raises(ValueError):
        linearity(chain, 1e9, [0.001, 0.5])
    with pytest.raises(ValueError):
        linearity(chain, 1e9, [0.5, 0.9995])


@settings(max_examples=10, deadline=None)
@given(st.floats(-20, 20))
def test_normalized_linearity_scale_invariant(gain_db):
    base = (MixerModel(5e9, a3=-0.3), AmplifierModel(0.0, 2.0))
    amps = [0.1, 0.2, 0.5, 0.8]
    c0 = linearity(ChainSpec(base), 5.1e9, amps, record_s=100e-9)
    c1 = linearity(ChainSpec(base + (Attenuator(gain_db),)), 5.1e9, amps, record_s=100e-9)
    assert np.allclose(c0.l_norm, c1.l_norm, rtol=0, atol=1e-6)


def test_linearity_csv(tmp_path):
    c = linearity(ChainSpec(), 1e9, [0.1, 0.2], record_s=100e-9)
    c.to_csv(tmp_path / "l.csv")
    rows = (tmp_path / "l.csv").read_text().splitlines()
    assert rows[0] == "amplitude,v_o,l_norm" and len(rows) == 3
    write_sfdr_csv([0.1], [50.5], tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text() == "amplitude,sfdr_dbc\n0.10000000000000001,50.5\n"


def test_harmonics_pure_tone_at_floor():
    s = fft_spectrum(run_chain(probe_waveform(ChainSpec(), 1e9, 0.5, rate_hz=40e9, n_samples=4000),
                               ChainSpec()), "rect")
    hs = harmonic_powers(s, 1e9, 5)
    assert [h.order for h in hs] == [2, 3, 4, 5]
    assert all(h.dbc < -250 for h in hs)


def test_harmonics_cubic_identity():
    a, a3 = 0.3, -0.2
    chain = ChainSpec((MixerModel(2e9, a3=a3),))
    w = probe_waveform(chain, 2.1e9, a, rate_hz=40e9, n_samples=4000)
    s = fft_spectrum(run_chain(w, chain), "rect")
    h3 = harmonic_powers(s, 2.1e9, 3)[1]
    fund = a + 0.75 * a3 * a**3
    assert h3.dbc == pytest.approx(20 * math.log10(abs(a3) * a**3 / 4 / fund), abs=1e-9)
    # weak-regime form of the same identity
    assert h3.dbc == pytest.approx(10 * math.log10((a3 * a**2 / 4) ** 2), abs=0.2)


def test_harmonics_slope_and_range_flag():
    chain = ChainSpec((MixerModel(2e9, a3=-0.01),))
    out = []
    for a in (0.05, 0.05 * 10 ** (1 / 20)):
        w = probe_waveform(chain, 2.1e9, a, rate_hz=40e9, n_samples=4000)
        out.append(harmonic_powers(fft_spectrum(run_chain(w, chain), "rect"), 2.1e9, 12))
    h3 = [o[1] for o in out]
    # dBc slope is 2 dB/dB, so absolute power rises 3 dB per dB
    assert (h3[1].dbc + 1.0) - h3[0].dbc == pytest.approx(3.0, abs=0.05)
    flagged = [h for h in out[0] if not h.in_range]
    assert flagged and all(math.isnan(h.dbc) and h.freq_hz > 20e9 for h in flagged)


# --------------------------------------------------------------------- fits

X = np.linspace(0, 300e-6, 41)


def test_decay_fit_exact():
    y = 0.9 * np.exp(-X / 60e-6) + 0.05
    f = fit_exponential_decay(X, y)
    assert f.tau_s == pytest.approx(60e-6, rel=1e-9)
    assert f.amp == pytest.approx(0.9, rel=1e-9)
    assert f.offset == pytest.approx(0.05, rel=1e-8)
    assert "tau_s" in f.summary()


def test_decay_fit_noisy_monte_carlo():
    # 401 points over five decay constants; every seed must land within 2%
    x = np.linspace(0, 300e-6, 401)
    errs = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        y = np.exp(-x / 60e-6) + 0.01 * rng.standard_normal(x.size)
        errs.append(fit_exponential_decay(x, y).tau_s / 60e-6 - 1)
    assert np.max(np.abs(errs)) < 0.02


def test_decay_fit_oscillating():
    y = 0.5 + 0.45 * np.exp(-X / 50e-6) * np.cos(2 * np.pi * 40e3 * X + 0.3)
    f = fit_exponential_decay(X, y, kind="T2_ramsey")
    assert f.tau_s == pytest.approx(50e-6, rel=1e-7)
    assert f.freq_hz == pytest.approx(40e3, rel=1e-7)
    assert f.phase_rad == pytest.approx(0.3, abs=1e-6)


def test_decay_fit_degenerate():
    with pytest.raises(FitError):
        fit_exponential_decay(X, np.full(X.size, 0.4))
    with pytest.raises(ValueError):
        fit_exponential_decay(X[:4], X[:4])
    with pytest.raises(ValueError):
        CoherenceFit(-1.0, 1.0, 0.0)


M = np.array([1, 5, 10, 20, 40, 80, 150, 300])


def test_rb_trivial():
    f = fit_rb_decay(M, np.ones(M.size))
    assert f.p == 1.0 and f.error_per_clifford == 0.0
    f = fit_rb_decay(M, 0.5 * 0.99**M + 0.5)
    assert f.p == pytest.approx(0.99, abs=1e-9)
    assert f.error_per_clifford == pytest.approx(0.005, abs=1e-9)
    assert f.valid and "error_per_clifford" in f.summary()
    with pytest.raises(ValueError):
        fit_rb_decay(M[:3], np.ones(3))


def test_rb_two_qubit_noisy():
    rng = np.random.default_rng(11)
    y = 0.75 * 0.96 ** M[:, None] + 0.25 + 0.01 * rng.standard_normal((M.size, 30))
    f = fit_rb_decay(M, y, d=4)
    assert abs(f.p - 0.96) <= 0.002
    assert f.error_per_clifford == pytest.approx(0.75 * (1 - f.p))


def test_rb_fit_coverage():
    hits = {"amp": 0, "p": 0, "offset": 0}
    sigma = 0.004
    for seed in range(200):
        rng = np.random.default_rng(seed)
        y = 0.48 * 0.985**M + 0.5 + sigma * rng.standard_normal(M.size)
        f = fit_rb_decay(M, y, sigma=np.full(M.size, sigma))
        err = np.sqrt(np.diag(f.covariance))
        for k, (name, true) in enumerate((("amp", 0.48), ("p", 0.985), ("offset", 0.5))):
            hits[name] += abs(getattr(f, name) - true) <= 1.96 * err[k]
    for name, n in hits.items():
        assert 0.90 <= n / 200 <= 0.99, (name, n)
