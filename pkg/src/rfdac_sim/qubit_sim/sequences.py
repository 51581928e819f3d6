"""Sequence-level experiments in the rotating frame: single-qubit RB and spin echo.

Superoperators act on column-stacked density matrices, ``vec(A rho B) =
(B^T kron A) vec(rho)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from ..pulse_lib import Envelope, Gaussian
from .evolve import lindblad_channel, propagate, superoperator
from .gates import DEFAULT_COUPLING_HZ, ROTATING_RATE_HZ, calibrate_amplitude, rotating_drive
from .models import TWO_PI, TransmonModel, lowering


def unitary_superop(u: np.ndarray) -> np.ndarray:
    return np.kron(u.conj(), u)


def _vec(rho: np.ndarray) -> np.ndarray:
    return rho.reshape(-1, order="F")


def _unvec(v: np.ndarray, d: int) -> np.ndarray:
    return v.reshape(d, d, order="F")


# ---------------------------------------------------------------- Clifford group

X90 = (np.eye(2) - 1j * np.array([[0, 1], [1, 0]])) / math.sqrt(2)
Z90 = np.diag([np.exp(-0.25j * np.pi), np.exp(0.25j * np.pi)])


def _key(u: np.ndarray) -> tuple:
    # fix the global phase on the first sizeable entry
    flat = u.ravel()
    k = int(np.argmax(np.abs(flat) > 1e-6))
    v = flat * np.exp(-1j * np.angle(flat[k]))
    return tuple(np.round(np.concatenate([v.real, v.imag]), 6) + 0.0)


@dataclass(frozen=True)
class Clifford:
    index: int
    ops: tuple  # primitives in time order: "X90" or "Z90"
    unitary: np.ndarray


@lru_cache(maxsize=None)
def clifford_group() -> tuple:
    """The 24 single-qubit Cliffords as shortest words in X90 and virtual Z90 (BFS)."""
    gens = {"X90": X90, "Z90": Z90}
    start = np.eye(2, dtype=complex)
    seen = {_key(start): ((), start)}
    frontier = [((), start)]
    while frontier:
        nxt = []
        for ops, u in frontier:
            # prefer fewer physical pulses: expand Z before X at each depth
            for name in ("Z90", "X90"):
                v = gens[name] @ u
                k = _key(v)
                if k not in seen:
                    seen[k] = (ops + (name,), v)
                    nxt.append((ops + (name,), v))
        frontier = nxt
    items = sorted(seen.values(), key=lambda t: (t[0].count("X90"), len(t[0]), t[0]))
    if len(items) != 24:
        raise RuntimeError(f"generated {len(items)} Cliffords, expected 24")
    return tuple(Clifford(i, ops, u) for i, (ops, u) in enumerate(items))


@lru_cache(maxsize=None)
def _tables():
    group = clifford_group()
    index = {_key(c.unitary): c.index for c in group}
    mult = np.zeros((24, 24), dtype=int)
    for a in group:
        for b in group:
            mult[a.index, b.index] = index[_key(a.unitary @ b.unitary)]
    inverse = np.array([int(np.where(mult[:, i] == 0)[0][0]) for i in range(24)])
    return mult, inverse


def clifford_inverse(sequence) -> int:
    """Index of the Clifford that undoes ``sequence`` (indices in time order)."""
    mult, inverse = _tables()
    acc = 0
    for i in sequence:
        acc = mult[i, acc]
    return int(inverse[acc])


def ideal_composite(sequence) -> np.ndarray:
    group = clifford_group()
    u = np.eye(2, dtype=complex)
    for i in sequence:
        u = group[i].unitary @ u
    return u


# ---------------------------------------------------------------- gate sets

def virtual_z(theta: float, d: int) -> np.ndarray:
    """Frame update on a d-level transmon; equals rz(theta) on the qubit levels up to phase."""
    n = np.arange(d)
    return np.diag(np.exp(1j * theta * (n - 0.5)))


def depolarize(p: float, d: int) -> np.ndarray:
    """``rho -> p rho + (1 - p) Tr_q(rho) I_q / 2`` on the qubit levels.

    For d = 3 the coherences between the qubit block and level 2 are scaled
    by p and the level-2 block is left alone.
    """
    if not 0 <= p <= 1:
        raise ValueError("depolarizing p must lie in [0, 1]")
    rows, cols = np.arange(d * d) % d, np.arange(d * d) // d
    in_q = (rows < 2) & (cols < 2)
    out_q = (rows >= 2) & (cols >= 2)
    s = np.diag(np.where(out_q, 1.0, p)).astype(complex)
    half_id = np.zeros((d, d))
    half_id[:2, :2] = 0.5 * np.eye(2)
    trace_q = np.zeros(d * d)
    trace_q[[0, d + 1]] = 1.0
    s += (1 - p) * np.outer(_vec(half_id), trace_q)
    return s


@dataclass(frozen=True)
class GateSet:
    """Superoperators of the physical X90 pulse; Z90 is a virtual frame update."""

    x90: np.ndarray
    d: int

    @classmethod
    def ideal(cls, d: int = 2) -> "GateSet":
        u = np.eye(d, dtype=complex)
        u[:2, :2] = X90
        return cls(unitary_superop(u), d)

    def primitive(self, name: str) -> np.ndarray:
        if name == "X90":
            return self.x90
        if name == "Z90":
            return unitary_superop(virtual_z(math.pi / 2, self.d))
        raise KeyError(name)


def simulated_gate_set(model: TransmonModel, envelope: Envelope | None = None, *,
                       coupling_hz_per_unit: float = DEFAULT_COUPLING_HZ,
                       rate_hz: float = ROTATING_RATE_HZ) -> GateSet:
    """X90 from a rotating-frame pulse, amplitude calibrated on the coherent model.

    Decoherence in ``model`` enters through the Lindblad channel of the pulse.
    """
    if envelope is None:
        envelope = Gaussian(12e-9, 48e-9)
    coherent = model.with_decoherence(None, None)
    a = calibrate_amplitude(coherent, envelope, math.pi / 2, coupling_hz_per_unit=coupling_hz_per_unit,
                            rate_hz=rate_hz)
    drive = rotating_drive(envelope, a, coupling_hz_per_unit=coupling_hz_per_unit, rate_hz=rate_hz)
    if model.collapse_ops():
        s = superoperator(lindblad_channel(model, drive))
    else:
        s = unitary_superop(propagate(model, drive))
    return GateSet(s, model.n_levels)


# ---------------------------------------------------------------- randomized benchmarking

def rb_single_qubit(model: TransmonModel, gate_impl: GateSet | None, lengths, n_seq: int, seed: int, *,
                    depolarizing_p: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Single-qubit RB: random Clifford sequences plus the inverting Clifford.

    Returns ``(lengths, survival)`` with survival of shape
    ``(len(lengths), n_seq)``: ground-state population after each sequence.
    ``depolarizing_p`` inserts a depolarizing channel after every Clifford
    (the inverting one included).
    """
    d = model.n_levels
    gs = gate_impl if gate_impl is not None else GateSet.ideal(d)
    if gs.d != d:
        raise ValueError("gate set dimension does not match the model")
    lengths = np.asarray(lengths, int)
    if np.any(lengths < 0):
        raise ValueError("sequence lengths must be non-negative")
    group = clifford_group()
    dep = depolarize(depolarizing_p, d) if depolarizing_p is not None else None
    supers = []
    for c in group:
        s = np.eye(d * d, dtype=complex)
        for name in c.ops:
            s = gs.primitive(name) @ s
        supers.append(s if dep is None else dep @ s)
    rng = np.random.default_rng(seed)
    rho0 = np.zeros((d, d), dtype=complex)
    rho0[0, 0] = 1.0
    out = np.empty((len(lengths), n_seq))
    for i, m in enumerate(lengths):
        for j in range(n_seq):
            seq = rng.integers(0, 24, size=int(m))
            inv = clifford_inverse(seq)
            if not np.allclose(np.abs(np.trace(group[inv].unitary @ ideal_composite(seq))), 2.0, atol=1e-9):
                raise RuntimeError("inverting Clifford does not restore the identity")
            v = _vec(rho0)
            for k in seq:
                v = supers[k] @ v
            v = supers[inv] @ v
            out[i, j] = float(_unvec(v, d)[0, 0].real)
    return lengths, out


# ---------------------------------------------------------------- spin echo

def idle_superop(model: TransmonModel, duration_s: float, detuning_hz: float = 0.0) -> np.ndarray:
    """Free evolution in the qubit frame: T1/Tphi dissipation plus an optional static detuning."""
    d = model.n_levels
    n = lowering(d).conj().T @ lowering(d)
    h = TWO_PI * detuning_hz * n
    eye = np.eye(d)
    gen = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for op in model.collapse_ops():
        ld = op.conj().T @ op
        gen += np.kron(op.conj(), op) - 0.5 * np.kron(eye, ld) - 0.5 * np.kron(ld.T, eye)
    return expm(gen * duration_s)


@dataclass(frozen=True)
class EchoPulses:
    amp_90: float
    amp_180: float
    envelope: Envelope
    coupling_hz_per_unit: float
    rate_hz: float


def _pulse_superop(model, ep: EchoPulses, amp: float, phase_rad: float) -> np.ndarray:
    drive = rotating_drive(ep.envelope, amp, phase_rad=phase_rad, coupling_hz_per_unit=ep.coupling_hz_per_unit,
                           rate_hz=ep.rate_hz)
    if model.collapse_ops():
        return superoperator(lindblad_channel(model, drive))
    return unitary_superop(propagate(model, drive))


def spin_echo(model: TransmonModel, delays, seed: int = 0, *, phase_rate_hz: float = 0.0,
              detuning_hz: float = 0.0, envelope: Envelope | None = None,
              coupling_hz_per_unit: float = DEFAULT_COUPLING_HZ,
              rate_hz: float = ROTATING_RATE_HZ) -> tuple[np.ndarray, np.ndarray]:
    """X90 - tau/2 - X180 - tau/2 - X90(phi), with phi = 2 pi phase_rate_hz tau.

    Pulses are Lindblad-integrated in the rotating frame; idle periods use the
    exact exponential of the Liouvillian.  ``detuning_hz`` is a static qubit
    frequency offset during the idle periods.  Returns ``(delays, P1)``,
    the excited-state population; the sequence is deterministic, ``seed`` is
    accepted for interface uniformity.
    """
    del seed
    delays = np.asarray(delays, float)
    if np.any(delays < 0):
        raise ValueError("delays must be non-negative")
    if envelope is None:
        envelope = Gaussian(12e-9, 48e-9)
    coherent = model.with_decoherence(None, None)
    a90 = calibrate_amplitude(coherent, envelope, math.pi / 2, coupling_hz_per_unit=coupling_hz_per_unit,
                              rate_hz=rate_hz)
    a180 = calibrate_amplitude(coherent, envelope, math.pi, coupling_hz_per_unit=coupling_hz_per_unit,
                               rate_hz=rate_hz)
    ep = EchoPulses(a90, a180, envelope, coupling_hz_per_unit, rate_hz)
    d = model.n_levels
    s90 = _pulse_superop(model, ep, a90, 0.0)
    s180 = _pulse_superop(model, ep, a180, 0.0)
    rho0 = np.zeros((d, d), dtype=complex)
    rho0[0, 0] = 1.0
    signal = np.empty(len(delays))
    for i, tau in enumerate(delays):
        half = idle_superop(model, tau / 2, detuning_hz)
        last = _pulse_superop(model, ep, a90, TWO_PI * phase_rate_hz * tau)
        v = last @ half @ s180 @ half @ s90 @ _vec(rho0)
        signal[i] = float(_unvec(v, d)[1, 1].real)
    return delays, signal


def analytic_echo_t2(t1_s: float | None, tphi_s: float | None) -> float:
    rate = (0.5 / t1_s if t1_s else 0.0) + (1.0 / tphi_s if tphi_s else 0.0)
    return math.inf if rate == 0 else 1.0 / rate
