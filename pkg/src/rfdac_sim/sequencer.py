"""Software model of the FPGA sequencer: waveform playback through NCOs.

Assembly grammar (one instruction per line, ``;`` also separates
instructions, ``#`` starts a comment, keywords are case-insensitive)::

    rate <hz>                   data rate, optional (overrides the assemble() argument)
    ncos <n>                    number of NCOs, optional (default 1)
    wave <id> <file.csv>        waveform from a ``t_s,re,im`` or ``re,im`` CSV file
    <label>:                    names the next instruction
    play <wf_id> <nco_id>       emit the waveform through an NCO
    setfreq <nco_id> <hz>
    setphase <nco_id> <rad>
    shiftphase <nco_id> <rad>
    wait <n_samples>            emit zeros
    marker <ch> <0|1>
    repeat <count> -> <label|index>
    halt

NCO ids are written ``nco0``, ``nco1``... (a bare integer is accepted).
``repeat N -> L`` runs the block from ``L`` up to the repeat N times in total.
Control instructions cost no output samples.  Every NCO phase accumulator
advances on every output sample, whether or not it is playing.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dac_core import SampleStream
from .pulse_lib import read_envelope_csv


class AssemblyError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class RunawayError(RuntimeError):
    """Program output exceeded the sample budget."""


@dataclass(frozen=True)
class Play:
    wf_id: str
    nco_id: int


@dataclass(frozen=True)
class SetFreq:
    nco_id: int
    freq_hz: float


@dataclass(frozen=True)
class SetPhase:
    nco_id: int
    phase_rad: float


@dataclass(frozen=True)
class ShiftPhase:
    nco_id: int
    delta_rad: float


@dataclass(frozen=True)
class Wait:
    n_samples: int


@dataclass(frozen=True)
class Marker:
    ch: int
    level: bool


@dataclass(frozen=True)
class Repeat:
    count: int
    target_index: int


@dataclass(frozen=True)
class Halt:
    pass


Instruction = Play | SetFreq | SetPhase | ShiftPhase | Wait | Marker | Repeat | Halt


@dataclass
class Program:
    instructions: list
    waveforms: dict
    n_ncos: int = 1
    data_rate_hz: float = 2.5e9
    lines: list = field(default_factory=list)

    def __post_init__(self):
        self.waveforms = {k: np.asarray(v, dtype=complex) for k, v in self.waveforms.items()}
        validate(self)


def validate(p: Program) -> None:
    def line(i):
        return p.lines[i] if i < len(p.lines) else i + 1

    if not p.instructions or not isinstance(p.instructions[-1], Halt):
        raise AssemblyError(line(len(p.instructions) - 1) if p.instructions else 0,
                            "program must end with halt")
    if p.n_ncos < 1:
        raise AssemblyError(0, "n_ncos must be >= 1")
    if not p.data_rate_hz > 0:
        raise AssemblyError(0, "data rate must be positive")
    for name, wf in p.waveforms.items():
        if wf.ndim != 1 or len(wf) == 0:
            raise AssemblyError(0, f"waveform {name!r} is empty")
        if np.abs(wf).max() > 1.0:
            raise AssemblyError(0, f"waveform {name!r} exceeds full scale")
    for i, ins in enumerate(p.instructions):
        nco = getattr(ins, "nco_id", None)
        if nco is not None and not 0 <= nco < p.n_ncos:
            raise AssemblyError(line(i), f"unknown NCO nco{nco}")
        if isinstance(ins, Play) and ins.wf_id not in p.waveforms:
            raise AssemblyError(line(i), f"undefined waveform {ins.wf_id!r}")
        if isinstance(ins, Repeat):
            if not ins.target_index < i:
                raise AssemblyError(line(i), "repeat target must precede the repeat (forward jump)")
            if ins.count < 1:
                raise AssemblyError(line(i), "repeat count must be >= 1")
        if isinstance(ins, Wait) and ins.n_samples < 0:
            raise AssemblyError(line(i), "wait length must be >= 0")
        if isinstance(ins, Halt) and i != len(p.instructions) - 1:
            raise AssemblyError(line(i), "halt must be the last instruction")


_LABEL = re.compile(r"^([A-Za-z_][\w.-]*)\s*:\s*(.*)$")


def _nco(tok: str, ln: int) -> int:
    m = re.fullmatch(r"(?:nco)?(\d+)", tok.lower())
    if not m:
        raise AssemblyError(ln, f"bad NCO id {tok!r}")
    return int(m.group(1))


def _num(tok: str, ln: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise AssemblyError(ln, f"expected a number, got {tok!r}") from None
    if not math.isfinite(v):
        raise AssemblyError(ln, f"non-finite value {tok!r}")
    return v


def _int(tok: str, ln: int) -> int:
    v = _num(tok, ln)
    if v != int(v):
        raise AssemblyError(ln, f"expected an integer, got {tok!r}")
    return int(v)


def assemble(source: str, waveforms: dict | None = None, *, data_rate_hz: float = 2.5e9,
             n_ncos: int | None = None, base_dir: str | Path = ".") -> Program:
    """Parse assembly text into a validated :class:`Program`."""
    wfs = dict(waveforms or {})
    base_dir = Path(base_dir)
    ncos = n_ncos
    rate = data_rate_hz
    raw: list[tuple[int, list[str]]] = []
    labels: dict[str, int] = {}
    pending_labels: list[tuple[str, int]] = []

    for ln, text in enumerate(source.splitlines(), start=1):
        text = text.split("#", 1)[0]
        for stmt in text.split(";"):
            stmt = stmt.strip()
            while stmt:
                m = _LABEL.match(stmt)
                if not m:
                    break
                name = m.group(1)
                if name in labels or name in dict(pending_labels):
                    raise AssemblyError(ln, f"duplicate label {name!r}")
                pending_labels.append((name, ln))
                stmt = m.group(2).strip()
            if not stmt:
                continue
            toks = stmt.split()
            op = toks[0].lower()
            if op == "rate":
                rate = _num(toks[1], ln) if len(toks) == 2 else _bad_arity(ln, op)
                continue
            if op == "ncos":
                ncos = _int(toks[1], ln) if len(toks) == 2 else _bad_arity(ln, op)
                continue
            if op == "wave":
                if len(toks) != 3:
                    _bad_arity(ln, op)
                path = base_dir / toks[2]
                try:
                    wfs[toks[1]] = read_envelope_csv(path)
                except OSError as exc:
                    raise AssemblyError(ln, f"cannot read waveform file {path}: {exc}") from None
                continue
            for name, _ in pending_labels:
                labels[name] = len(raw)
            pending_labels.clear()
            raw.append((ln, toks))
    if pending_labels:
        raise AssemblyError(pending_labels[0][1], f"label {pending_labels[0][0]!r} has no instruction")

    instructions, lines = [], []
    max_nco = 0
    for idx, (ln, toks) in enumerate(raw):
        op, args = toks[0].lower(), toks[1:]
        if op == "play":
            _arity(ln, op, args, 2)
            ins = Play(args[0], _nco(args[1], ln))
        elif op == "setfreq":
            _arity(ln, op, args, 2)
            ins = SetFreq(_nco(args[0], ln), _num(args[1], ln))
        elif op == "setphase":
            _arity(ln, op, args, 2)
            ins = SetPhase(_nco(args[0], ln), _num(args[1], ln))
        elif op == "shiftphase":
            _arity(ln, op, args, 2)
            ins = ShiftPhase(_nco(args[0], ln), _num(args[1], ln))
        elif op == "wait":
            _arity(ln, op, args, 1)
            ins = Wait(_int(args[0], ln))
        elif op == "marker":
            _arity(ln, op, args, 2)
            level = _int(args[1], ln)
            if level not in (0, 1):
                raise AssemblyError(ln, "marker level must be 0 or 1")
            ins = Marker(_int(args[0], ln), bool(level))
        elif op == "repeat":
            joined = " ".join(args)
            m = re.fullmatch(r"(\S+)\s*->\s*(\S+)", joined)
            if not m:
                raise AssemblyError(ln, "expected 'repeat <count> -> <label|index>'")
            count = _int(m.group(1), ln)
            target = m.group(2)
            if target in labels:
                tidx = labels[target]
            elif re.fullmatch(r"\d+", target):
                tidx = int(target)
            else:
                raise AssemblyError(ln, f"unknown label {target!r}")
            if tidx >= idx:
                raise AssemblyError(ln, f"repeat target {target!r} is a forward jump")
            ins = Repeat(count, tidx)
        elif op == "halt":
            _arity(ln, op, args, 0)
            ins = Halt()
        else:
            raise AssemblyError(ln, f"unknown instruction {op!r}")
        if isinstance(ins, Play) and ins.wf_id not in wfs:
            raise AssemblyError(ln, f"undefined waveform {ins.wf_id!r}")
        nco = getattr(ins, "nco_id", None)
        if nco is not None:
            max_nco = max(max_nco, nco)
            if ncos is not None and nco >= ncos:
                raise AssemblyError(ln, f"unknown NCO nco{nco} (program declares {ncos})")
        instructions.append(ins)
        lines.append(ln)

    if not instructions or not isinstance(instructions[-1], Halt):
        raise AssemblyError(lines[-1] if lines else 0, "missing halt at end of program")
    return Program(instructions, wfs, n_ncos=ncos if ncos is not None else max_nco + 1,
                   data_rate_hz=rate, lines=lines)


def _arity(ln, op, args, n):
    if len(args) != n:
        _bad_arity(ln, op)


def _bad_arity(ln, op):
    raise AssemblyError(ln, f"wrong number of operands for {op!r}")


class _Nco:
    """Phase accumulator in cycles, extended precision.

    The phase at absolute sample n is ``offset + inc * (n - n_ref)`` with the
    reference re-based whenever frequency or phase changes, so rounding does
    not build up over long runs.
    """

    def __init__(self, rate_hz: float):
        self.rate = np.longdouble(rate_hz)
        self.inc = np.longdouble(0)
        self.offset = np.longdouble(0)
        self.n_ref = 0
        self.freq_hz = 0.0

    def cycles_at(self, n):
        n = np.asarray(n, dtype=np.longdouble)
        return np.mod(self.offset + self.inc * (n - self.n_ref), 1)

    def rebase(self, n: int):
        self.offset = self.cycles_at(n)
        self.n_ref = n

    def set_freq(self, n: int, freq_hz: float):
        self.rebase(n)
        self.freq_hz = freq_hz
        self.inc = np.longdouble(freq_hz) / self.rate

    def set_phase(self, n: int, phase_rad: float):
        self.n_ref = n
        self.offset = np.mod(np.longdouble(phase_rad) / (2 * np.pi), 1)

    def shift_phase(self, n: int, delta_rad: float):
        self.rebase(n)
        self.offset = np.mod(self.offset + np.longdouble(delta_rad) / (2 * np.pi), 1)

    def phase_rad(self, n: int) -> float:
        return float(2 * np.pi * self.cycles_at(n))


@dataclass(frozen=True)
class ExecutionResult:
    stream: SampleStream
    markers: dict
    nco_phases_rad: tuple

    def marker_rows(self):
        """(sample_index, channel, level) for every level change, plus each channel's initial level."""
        rows = []
        for ch in sorted(self.markers):
            tl = self.markers[ch]
            if len(tl) == 0:
                continue
            rows.append((0, ch, int(tl[0])))
            for idx in np.flatnonzero(np.diff(tl.astype(np.int8))) + 1:
                rows.append((int(idx), ch, int(tl[idx])))
        rows.sort()
        return rows

    def write_markers_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_index", "channel", "level"])
            w.writerows(self.marker_rows())


def execute(p: Program, max_samples: int) -> ExecutionResult:
    """Run the program to ``halt`` and return the complex output and marker timelines."""
    if max_samples < 1:
        raise ValueError("max_samples must be positive")
    ncos = [_Nco(p.data_rate_hz) for _ in range(p.n_ncos)]
    chunks: list[np.ndarray] = []
    marker_events: list[tuple[int, int, bool]] = []
    loop_done: dict[int, int] = {}
    n = 0
    pc = 0
    while True:
        ins = p.instructions[pc]
        if isinstance(ins, Halt):
            break
        if isinstance(ins, Play):
            wf = p.waveforms[ins.wf_id]
            if n + len(wf) > max_samples:
                raise RunawayError(f"output exceeds max_samples={max_samples} at instruction {pc}")
            cyc = ncos[ins.nco_id].cycles_at(np.arange(n, n + len(wf)))
            chunks.append(wf * np.exp(2j * np.pi * cyc.astype(float)))
            n += len(wf)
        elif isinstance(ins, Wait):
            if n + ins.n_samples > max_samples:
                raise RunawayError(f"output exceeds max_samples={max_samples} at instruction {pc}")
            chunks.append(np.zeros(ins.n_samples, complex))
            n += ins.n_samples
        elif isinstance(ins, SetFreq):
            ncos[ins.nco_id].set_freq(n, ins.freq_hz)
        elif isinstance(ins, SetPhase):
            ncos[ins.nco_id].set_phase(n, ins.phase_rad)
        elif isinstance(ins, ShiftPhase):
            ncos[ins.nco_id].shift_phase(n, ins.delta_rad)
        elif isinstance(ins, Marker):
            marker_events.append((n, ins.ch, ins.level))
        elif isinstance(ins, Repeat):
            done = loop_done.get(pc, 0) + 1
            if done < ins.count:
                loop_done[pc] = done
                pc = ins.target_index
                continue
            loop_done.pop(pc, None)
        pc += 1

    data = np.concatenate(chunks) if chunks else np.zeros(0, complex)
    markers = {}
    for ch in sorted({ch for _, ch, _ in marker_events}):
        tl = np.zeros(n, dtype=bool)
        for start, c, level in marker_events:
            if c == ch:
                tl[start:] = level
        markers[ch] = tl
    return ExecutionResult(SampleStream(data, p.data_rate_hz),
                           markers, tuple(nco.phase_rad(n) for nco in ncos))


def sample_cost(ins, waveforms: dict) -> int:
    """Output samples emitted by one execution of ``ins``."""
    if isinstance(ins, Wait):
        return ins.n_samples
    if isinstance(ins, Play):
        return len(waveforms[ins.wf_id])
    return 0
