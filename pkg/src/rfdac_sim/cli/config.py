"""Experiment configuration: TOML file, pydantic schema, conversion to model objects.

Example::

    study = "linearity-sweep"
    seed = 3

    [dac]
    rate_hz = 5e9
    mode = "MIX"

    [[chain]]
    type = "mixer"
    lo_freq_hz = 5.25e9
    a3 = -0.1

    [sweep]
    amplitudes = [0.1, 0.2, 0.3]

Unknown keys anywhere are rejected.  A missing ``seed`` defaults to 0 with a
warning.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..analog_chain import (AmplifierModel, Attenuator, ChainSpec, FilterModel, MixerModel,
                            NoiseFloor)
from ..dac_core import ReconstructionMode
from ..pulse_lib import Constant, DragGaussian, FlatTopGaussian, Gaussian, Pulse

STUDIES = {
    "recon-response": "reconstruction responses R(f) of NRZ, RZ and MIX",
    "zone-spectrum": "Nyquist-zone images of an NCO tone, FFT vs analytic",
    "pulse-spectra": "pulse spectra from RF-DAC synthesis and from the upconversion chain",
    "linearity-sweep": "normalised linearity L(A) of the configured chain",
    "sfdr-sweep": "SFDR vs tone amplitude of the configured chain",
    "cr-error-sweep": "echoed-CR infidelity vs CR amplitude",
    "rb": "single-qubit randomized benchmarking and decay fit",
    "spin-echo": "spin-echo decay and T2 fit",
}


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DacConfig(_Strict):
    rate_hz: float = Field(5e9, gt=0)
    mode: Literal["NRZ", "RZ", "MIX"] = "MIX"
    nco_hz: Optional[float] = None
    n_zones: int = Field(4, ge=1)
    oversample: int = Field(64, ge=2)

    @model_validator(mode="after")
    def _even(self):
        if self.oversample % 2:
            raise ValueError("oversample must be even")
        return self


class MixerStage(_Strict):
    type: Literal["mixer"]
    lo_freq_hz: float = Field(gt=0)
    lo_leak: float = 0.0
    gain_imbalance: float = 0.0
    phase_skew_rad: float = 0.0
    a1: float = 1.0
    a3: float = 0.0
    a5: float = 0.0

    def build(self):
        return MixerModel(self.lo_freq_hz, self.lo_leak, self.gain_imbalance, self.phase_skew_rad,
                          self.a1, self.a3, self.a5)


class AmplifierStage(_Strict):
    type: Literal["amplifier"]
    gain_db: float = 0.0
    input_p1db: float = Field(gt=0)

    def build(self):
        return AmplifierModel(self.gain_db, self.input_p1db)


class FilterStage(_Strict):
    type: Literal["filter"]
    kind: Literal["lowpass", "bandpass"]
    cutoff_hz: Union[float, tuple[float, float]]
    stopband_atten_db: float = Field(60.0, ge=0, le=120)
    order: int = Field(5, ge=1)

    def build(self):
        return FilterModel(self.kind, self.cutoff_hz, self.stopband_atten_db, self.order)


class AttenuatorStage(_Strict):
    type: Literal["attenuator"]
    db: float

    def build(self):
        return Attenuator(self.db)


class NoiseStage(_Strict):
    type: Literal["noise"]
    dbfs_per_bin: float = -100.0

    def build(self):
        return NoiseFloor(self.dbfs_per_bin)


StageConfig = Annotated[Union[MixerStage, AmplifierStage, FilterStage, AttenuatorStage, NoiseStage],
                        Field(discriminator="type")]


class EnvelopeConfig(_Strict):
    kind: Literal["gaussian", "drag", "flattop", "constant"]
    sigma_s: Optional[float] = Field(None, gt=0)
    length_s: Optional[float] = Field(None, gt=0)
    beta_s: float = 0.0
    flat_s: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _fields(self):
        if self.kind == "constant" and self.length_s is None:
            raise ValueError("constant envelope needs length_s")
        if self.kind != "constant" and self.sigma_s is None:
            raise ValueError(f"{self.kind} envelope needs sigma_s")
        return self

    def build(self):
        if self.kind == "gaussian":
            return Gaussian(self.sigma_s, self.length_s)
        if self.kind == "drag":
            return DragGaussian(self.sigma_s, self.length_s, self.beta_s)
        if self.kind == "flattop":
            return FlatTopGaussian(self.sigma_s, self.flat_s)
        return Constant(self.length_s)


class PulseConfig(_Strict):
    envelope: EnvelopeConfig
    amplitude: float = Field(ge=0, le=1)
    phase_rad: float = 0.0
    freq_hz: float = 0.0
    channel: str = "ch0"
    start_s: float = Field(2e-9, ge=0)

    def build(self) -> Pulse:
        return Pulse(self.envelope.build(), self.amplitude, self.phase_rad, self.freq_hz, self.channel)


class ModelConfig(_Strict):
    n_levels: int = Field(2, ge=2, le=3)
    f01_hz: float = Field(5.3505e9, gt=0)
    anharmonicity_hz: float = -330e6
    t1_s: Optional[float] = Field(None, gt=0)
    tphi_s: Optional[float] = Field(None, gt=0)
    control_f01_hz: float = Field(5.4735e9, gt=0)
    j_hz: float = 3.5e6
    coupling_hz_per_unit: float = Field(200e6, gt=0)


class SynthesisConfig(_Strict):
    kind: Literal["rf_dac", "upconversion"] = "rf_dac"
    oversample: int = Field(128, ge=2)
    baseband_rate_hz: float = Field(1.2e9, gt=0)
    recon_cutoff_hz: float = Field(0.45e9, gt=0)
    recon_order: int = Field(7, ge=1)


class SweepConfig(_Strict):
    amplitudes: list[float] = Field(default_factory=list)
    multipliers: list[float] = Field(default_factory=list)
    single_qubit_amplitude: float = Field(0.0826, gt=0, le=1)
    freqs_hz: list[float] = Field(default_factory=list)
    tone_hz: float = 1.05e9
    second_tone_hz: Optional[float] = None
    second_tone_amplitude: float = Field(0.25, ge=0, le=1)
    probe_freq_hz: Optional[float] = None
    delta: float = Field(0.002, gt=0)
    record_s: float = Field(1e-6, gt=0)
    window: Literal["rect", "hann", "blackman"] = "hann"
    mask_half_width_hz: float = Field(5e6, ge=0)
    lengths: list[int] = Field(default_factory=list)
    n_seq: int = Field(30, ge=1)
    depolarizing_p: Optional[float] = Field(None, ge=0, le=1)
    delays_s: list[float] = Field(default_factory=list)
    phase_rate_hz: float = 0.0
    detuning_hz: float = 0.0


class ExperimentConfig(_Strict):
    study: Literal[tuple(STUDIES)]  # type: ignore[valid-type]
    seed: int = 0
    output_dir: str = "out"
    dac: DacConfig = DacConfig()
    chain: list[StageConfig] = Field(default_factory=list)
    pulses: list[PulseConfig] = Field(default_factory=list)
    model: ModelConfig = ModelConfig()
    synthesis: SynthesisConfig = SynthesisConfig()
    sweep: SweepConfig = SweepConfig()

    @model_validator(mode="after")
    def _cross_field(self):
        fs = self.dac.rate_hz
        if self.dac.nco_hz is not None:
            if not math.isfinite(self.dac.nco_hz) or abs(self.dac.nco_hz) > self.dac.n_zones * fs:
                raise ValueError(f"dac.nco_hz = {self.dac.nco_hz:g} Hz lies beyond n_zones * f_s = "
                                 f"{self.dac.n_zones * fs:g} Hz")
        if sum(isinstance(s, MixerStage) for s in self.chain) > 1:
            raise ValueError("chain holds at most one mixer")
        if self.synthesis.kind == "upconversion" and not any(isinstance(s, MixerStage) for s in self.chain):
            raise ValueError("upconversion synthesis needs a mixer stage in the chain")
        amps = self.sweep.amplitudes
        if any(b <= a for a, b in zip(amps, amps[1:])):
            raise ValueError("sweep.amplitudes must be strictly increasing")
        if any(not 0 <= a <= 1 for a in amps):
            raise ValueError("sweep.amplitudes must lie in [0, 1]")
        if any(k * self.sweep.single_qubit_amplitude > 1 for k in self.sweep.multipliers):
            raise ValueError("sweep.multipliers put the CR amplitude above full scale")
        if self.study in ("cr-error-sweep",) and not self.sweep.multipliers:
            raise ValueError("cr-error-sweep needs sweep.multipliers")
        if self.study in ("linearity-sweep", "sfdr-sweep") and not amps:
            raise ValueError(f"{self.study} needs sweep.amplitudes")
        if self.study == "rb" and len(self.sweep.lengths) < 4:
            raise ValueError("rb needs at least 4 sweep.lengths")
        if self.study == "spin-echo" and len(self.sweep.delays_s) < 5:
            raise ValueError("spin-echo needs at least 5 sweep.delays_s")
        if self.study == "pulse-spectra" and not self.pulses:
            raise ValueError("pulse-spectra needs at least one [[pulses]] entry")
        return self

    # ------------------------------------------------------------ builders
    def chain_spec(self) -> ChainSpec:
        return ChainSpec(tuple(s.build() for s in self.chain))

    def mode(self) -> ReconstructionMode:
        return ReconstructionMode.parse(self.dac.mode)

    def content_hash(self) -> str:
        """sha256 over every field that affects outputs (output_dir excluded)."""
        data = self.model_dump(mode="json", exclude={"output_dir"})
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _loc(err: dict) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def load_config(path: str | Path, *, seed_override: int | None = None) -> tuple[ExperimentConfig, list[str]]:
    """Parse and validate; returns the config and a list of warnings."""
    notes = []
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if seed_override is not None:
        raw["seed"] = seed_override
    elif "seed" not in raw:
        notes.append("seed missing; defaulting to 0")
        warnings.warn("seed missing; defaulting to 0", stacklevel=2)
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        msgs = [f"{_loc(e)}: {e['msg']}" for e in exc.errors()]
        raise ConfigError("; ".join(msgs)) from None
    return cfg, notes
