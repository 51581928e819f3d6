"""Built-in studies.  Each writes CSV files into a directory and returns a JSON-able summary."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..analog_chain import ChainSpec, MixerModel, run_chain
from ..dac_core import (ReconstructionMode, SampleStream, fft_spectrum, nco_upconvert, nyquist_zone,
                        output_spectrum, reconstruct, reconstruction_response, sample_spectrum)
from ..metrics import (ExclusionMask, fit_exponential_decay, fit_rb_decay, harmonic_powers, linearity,
                       probe_waveform, sfdr)
from ..qubit_sim.cr import cr_error_sweep
from ..qubit_sim.gates import RfDacSynthesis, UpconversionSynthesis, synthesize
from ..qubit_sim.models import TransmonModel, TwoQubitModel, write_sweep_csv
from ..qubit_sim.sequences import analytic_echo_t2, rb_single_qubit, simulated_gate_set, spin_echo
from .config import ExperimentConfig


def task_seed(seed: int, task: int) -> int:
    """Independent 32-bit seed for sweep point ``task``, derived from the run seed."""
    return int(np.random.SeedSequence(seed, spawn_key=(task,)).generate_state(1)[0])


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))


def _spectrum_rows(s, f_max):
    keep = s.freqs_hz <= f_max
    db = s.magnitude_dbfs()[keep]
    return zip(s.freqs_hz[keep], db, np.angle(s.values[keep]))


SPECTRUM_HEADER = ["freq_hz", "magnitude_dbfs", "phase_rad"]


def _synthesis(cfg: ExperimentConfig):
    s = cfg.synthesis
    if s.kind == "rf_dac":
        return RfDacSynthesis(cfg.mode(), cfg.dac.rate_hz, cfg.dac.nco_hz, s.oversample)
    return UpconversionSynthesis(s.baseband_rate_hz, s.oversample, s.recon_cutoff_hz, s.recon_order)


def _probe_freq(cfg: ExperimentConfig, chain: ChainSpec) -> float:
    if cfg.sweep.probe_freq_hz is not None:
        return cfg.sweep.probe_freq_hz
    if cfg.pulses:
        return cfg.pulses[0].freq_hz
    if chain.mixer is not None:
        return chain.mixer.lo_freq_hz + 100e6
    return cfg.sweep.tone_hz


# ---------------------------------------------------------------- spectral studies

def recon_response(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    fs = cfg.dac.rate_hz
    f = np.asarray(cfg.sweep.freqs_hz, float)
    if f.size == 0:
        f = np.linspace(0.0, cfg.dac.n_zones * fs / 2, 401)
    cols = [reconstruction_response(m, f, fs) for m in ReconstructionMode]
    rows = [(fi, *[v for c in cols for v in (c[i].real, c[i].imag)]) for i, fi in enumerate(f)]
    header = ["freq_hz"] + [f"{m.value.lower()}_{p}" for m in ReconstructionMode for p in ("re", "im")]
    write_csv(out / "recon_response.csv", header, rows)
    return {"dac_rate_hz": fs, "period_s": 1 / fs, "n_points": int(f.size)}


def _tone_stream(cfg: ExperimentConfig):
    fs = cfg.dac.rate_hz
    rate = fs / 2
    n = int(round(cfg.sweep.record_s * rate))
    nco = cfg.dac.nco_hz if cfg.dac.nco_hz is not None else cfg.sweep.tone_hz
    t = np.arange(n) / rate
    x = np.full(n, 0.5, dtype=complex)
    if cfg.sweep.second_tone_hz is not None:
        x = x + cfg.sweep.second_tone_amplitude * np.exp(2j * np.pi * (cfg.sweep.second_tone_hz - nco) * t)
    return SampleStream(x, rate), nco


def zone_spectrum(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    fs = cfg.dac.rate_hz
    stream, nco = _tone_stream(cfg)
    dac = nco_upconvert(stream, nco)
    mode = cfg.mode()
    w = reconstruct(dac, mode, cfg.dac.oversample)
    s = fft_spectrum(w, "rect")
    f_max = cfg.dac.n_zones * fs / 2
    write_csv(out / "spectrum.csv", SPECTRUM_HEADER, _spectrum_rows(s, f_max))
    ana = output_spectrum(sample_spectrum(dac), mode, fs, cfg.dac.n_zones)
    rows = []
    for f, v in zip(ana.freqs_hz, ana.values):
        db = 20 * math.log10(abs(v)) if abs(v) > 0 else -math.inf
        if db < -80 or f == 0:
            continue
        z = nyquist_zone(f, fs)
        k = s.index_of(f)
        rows.append((f, z.index, z.inverted, db, float(s.magnitude_dbfs()[k])))
    write_csv(out / "images.csv", ["freq_hz", "zone", "inverted", "analytic_dbfs", "fft_dbfs"], rows)
    return {"nco_hz": nco, "mode": mode.value, "lines": [r[0] for r in rows]}


def pulse_spectra(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    chain = cfg.chain_spec()
    pc = cfg.pulses[0]
    p = pc.build()
    sched = [(pc.start_s, p)]
    f_max = cfg.dac.n_zones * cfg.dac.rate_hz / 2
    summary = {}
    paths = [("rf_dac", ChainSpec(tuple(s for s in chain.stages if not isinstance(s, MixerModel))),
              RfDacSynthesis(cfg.mode(), cfg.dac.rate_hz, cfg.dac.nco_hz, cfg.dac.oversample))]
    if chain.mixer is not None:
        syn = cfg.synthesis
        paths.append(("upconversion", chain,
                      UpconversionSynthesis(syn.baseband_rate_hz, syn.oversample, syn.recon_cutoff_hz,
                                            syn.recon_order)))
    rows = []
    for i, (name, ch, synth) in enumerate(paths):
        w = synthesize(sched, ch, synth, pad_s=cfg.sweep.record_s, seed=task_seed(cfg.seed, i))
        s = fft_spectrum(w, cfg.sweep.window)
        write_csv(out / f"spectrum_{name}.csv", SPECTRUM_HEADER, _spectrum_rows(s, f_max))
        hs = harmonic_powers(s, p.freq_hz, 5)
        rows += [(name, h.order, h.freq_hz, h.dbc, h.in_range) for h in hs]
        summary[name] = {f"h{h.order}_dbc": h.dbc for h in hs if h.in_range}
    write_csv(out / "harmonics.csv", ["path", "order", "freq_hz", "dbc", "in_range"], rows)
    return summary


def linearity_sweep(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    chain = cfg.chain_spec()
    probe = _probe_freq(cfg, chain)
    curve = linearity(chain, probe, cfg.sweep.amplitudes, cfg.sweep.delta, record_s=cfg.sweep.record_s,
                      seed=cfg.seed)
    curve.to_csv(out / "linearity.csv")
    return {"probe_freq_hz": probe, "normalization": curve.normalization,
            "min_l_norm": float(np.min(curve.l_norm))}


def sfdr_sweep(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    chain = cfg.chain_spec()
    probe = _probe_freq(cfg, chain)
    mixer = chain.mixer
    top = max(probe, mixer.lo_freq_hz if mixer else 0.0)
    rate = 8.0 * top
    n = int(round(cfg.sweep.record_s * rate))
    mask = ExclusionMask([])
    if mixer is not None:
        mask = ExclusionMask.around([mixer.lo_freq_hz, 2 * mixer.lo_freq_hz - probe],
                                    cfg.sweep.mask_half_width_hz)

    def point(task):
        i, a = task
        w = probe_waveform(chain, probe, a, rate_hz=rate, n_samples=n)
        s = fft_spectrum(run_chain(w, chain, task_seed(cfg.seed, i)), cfg.sweep.window)
        return sfdr(s, probe, mask)

    vals = _pmap(point, list(enumerate(cfg.sweep.amplitudes)), threads)
    write_csv(out / "sfdr.csv", ["amplitude", "sfdr_dbc"], zip(cfg.sweep.amplitudes, vals))
    k = int(np.argmax(vals))
    return {"probe_freq_hz": probe, "max_sfdr_dbc": float(vals[k]), "amplitude_at_max": cfg.sweep.amplitudes[k]}


# ---------------------------------------------------------------- qubit studies

def _transmon(cfg: ExperimentConfig) -> TransmonModel:
    m = cfg.model
    return TransmonModel(m.n_levels, m.f01_hz, m.anharmonicity_hz, m.t1_s, m.tphi_s)


def cr_sweep(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    m = cfg.model
    model = TwoQubitModel(TransmonModel(3, m.control_f01_hz, m.anharmonicity_hz),
                          TransmonModel(3, m.f01_hz, m.anharmonicity_hz), m.j_hz)
    chain = cfg.chain_spec()
    pts = cr_error_sweep(model, chain, _synthesis(cfg), cfg.sweep.multipliers, cfg.sweep.single_qubit_amplitude,
                         coupling_hz_per_unit=m.coupling_hz_per_unit, seed=cfg.seed)
    write_sweep_csv([(p.amplitude, p.length_s, p.infidelity, p.leakage) for p in pts], out / "cr_sweep.csv")
    return {"points": [{"multiplier": p.multiplier, "amplitude": p.amplitude, "infidelity": p.infidelity}
                       for p in pts]}


def rb(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    model = _transmon(cfg)
    gates = simulated_gate_set(model, coupling_hz_per_unit=cfg.model.coupling_hz_per_unit)
    lengths = list(cfg.sweep.lengths)

    def point(task):
        i, m = task
        _, s = rb_single_qubit(model, gates, [m], cfg.sweep.n_seq, task_seed(cfg.seed, i),
                               depolarizing_p=cfg.sweep.depolarizing_p)
        return s[0]

    surv = np.array(_pmap(point, list(enumerate(lengths)), threads))
    rows = [(m, j, surv[i, j]) for i, m in enumerate(lengths) for j in range(surv.shape[1])]
    write_csv(out / "rb.csv", ["length", "sequence", "survival"], rows)
    fit = fit_rb_decay(lengths, surv, d=2)
    return {"p": fit.p, "p_stderr": fit.p_stderr, "amp": fit.amp, "offset": fit.offset,
            "error_per_clifford": fit.error_per_clifford, "valid": fit.valid}


def echo(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    model = _transmon(cfg)
    d, y = spin_echo(model, cfg.sweep.delays_s, cfg.seed, phase_rate_hz=cfg.sweep.phase_rate_hz,
                     detuning_hz=cfg.sweep.detuning_hz, coupling_hz_per_unit=cfg.model.coupling_hz_per_unit)
    write_csv(out / "spin_echo.csv", ["delay_s", "p1"], zip(d, y))
    summary = {"analytic_t2_s": analytic_echo_t2(model.t1_s, model.tphi_s)}
    osc = cfg.sweep.phase_rate_hz != 0
    fit = fit_exponential_decay(d, y, kind="T2_echo", oscillating=osc,
                                freq_guess_hz=cfg.sweep.phase_rate_hz if osc else None)
    summary.update({"tau_s": fit.tau_s, "tau_stderr_s": fit.tau_stderr, "amp": fit.amp, "offset": fit.offset,
                    "residual_norm": fit.residual_norm})
    return summary


RUNNERS = {
    "recon-response": recon_response,
    "zone-spectrum": zone_spectrum,
    "pulse-spectra": pulse_spectra,
    "linearity-sweep": linearity_sweep,
    "sfdr-sweep": sfdr_sweep,
    "cr-error-sweep": cr_sweep,
    "rb": rb,
    "spin-echo": echo,
}
