"""Transmon models, drive signals and gate results.

Energies are angular (rad/s).  Two-transmon states are ordered
``|control, target>`` and every propagator is reported in the interaction
picture of the static Hamiltonian, in its (dressed) eigenbasis, i.e. in the
frame of the qubits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * math.pi

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli(label: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for ch in label.upper():
        out = np.kron(out, PAULI[ch])
    return out


def lowering(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


@dataclass(frozen=True)
class TransmonModel:
    n_levels: int = 2
    f01_hz: float = 5.3505e9
    anharmonicity_hz: float = -330e6
    t1_s: float | None = None
    tphi_s: float | None = None

    def __post_init__(self):
        if self.n_levels not in (2, 3):
            raise ValueError("n_levels must be 2 or 3")
        if not self.f01_hz > 0:
            raise ValueError("f01_hz must be positive")
        for name in ("t1_s", "tphi_s"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive or None")

    @property
    def dim(self) -> int:
        return self.n_levels

    def energies(self) -> np.ndarray:
        n = np.arange(self.n_levels, dtype=float)
        return TWO_PI * (n * self.f01_hz + 0.5 * n * (n - 1) * self.anharmonicity_hz)

    def with_decoherence(self, t1_s=None, tphi_s=None) -> "TransmonModel":
        return TransmonModel(self.n_levels, self.f01_hz, self.anharmonicity_hz, t1_s, tphi_s)

    def collapse_ops(self) -> list[np.ndarray]:
        a = lowering(self.n_levels)
        ops = []
        if self.t1_s is not None:
            ops.append(math.sqrt(1.0 / self.t1_s) * a)
        if self.tphi_s is not None:
            ops.append(math.sqrt(2.0 / self.tphi_s) * (a.conj().T @ a))
        return ops


@dataclass(frozen=True)
class TwoQubitModel:
    """Duffing transmons with exchange coupling ``J (a_c^+ a_t + a_c a_t^+)``.

    ``static_terms`` adds a Hamiltonian ``2 pi nu P / 2`` for every
    ``(pauli_label, nu_hz)`` pair, acting on the computational subspace in the
    frame of the qubits (so it is static there).
    """

    control: TransmonModel = field(default_factory=lambda: TransmonModel(3, 5.4735e9))
    target: TransmonModel = field(default_factory=lambda: TransmonModel(3, 5.3505e9))
    j_hz: float = 3.5e6
    static_terms: tuple = ()

    def __post_init__(self):
        if not abs(self.control.f01_hz - self.target.f01_hz) > 10 * abs(self.j_hz):
            raise ValueError("qubits are not dispersive: |f_c - f_t| must exceed 10 J")
        terms = tuple((str(l).upper(), float(v)) for l, v in self.static_terms)
        for label, _ in terms:
            if len(label) != 2 or any(c not in "IXYZ" for c in label):
                raise ValueError(f"bad two-qubit Pauli label {label!r}")
        object.__setattr__(self, "static_terms", terms)

    @property
    def dim(self) -> int:
        return self.control.n_levels * self.target.n_levels

    def with_static_terms(self, *terms) -> "TwoQubitModel":
        return TwoQubitModel(self.control, self.target, self.j_hz, tuple(terms))

    def bare_hamiltonian(self) -> np.ndarray:
        nc, nt = self.control.n_levels, self.target.n_levels
        ac = np.kron(lowering(nc), np.eye(nt))
        at = np.kron(np.eye(nc), lowering(nt))
        h = np.diag(np.add.outer(self.control.energies(), self.target.energies()).ravel()).astype(complex)
        h += TWO_PI * self.j_hz * (ac.conj().T @ at + ac @ at.conj().T)
        return h

    def collapse_ops(self) -> list[np.ndarray]:
        nc, nt = self.control.n_levels, self.target.n_levels
        ops = [np.kron(c, np.eye(nt)) for c in self.control.collapse_ops()]
        ops += [np.kron(np.eye(nc), c) for c in self.target.collapse_ops()]
        return ops


@dataclass(frozen=True)
class Frame:
    """Eigenbasis of the static Hamiltonian, ordered like the bare product states.

    ``dressed`` holds the eigenvalues.  ``energies`` defines the rotating
    frame: for two transmons the computational states rotate at one
    frequency per qubit (the dressed 0->1 frequency averaged over the other
    qubit's state), so static ZZ stays visible as an interaction; other
    states rotate at their dressed energies.
    """

    energies: np.ndarray
    vectors: np.ndarray
    excitations: np.ndarray
    comp_index: np.ndarray
    levels: tuple
    dressed: np.ndarray = None

    def __post_init__(self):
        if self.dressed is None:
            object.__setattr__(self, "dressed", self.energies)


def _frame_for(model) -> Frame:
    if isinstance(model, TransmonModel):
        n = model.n_levels
        e = model.energies()
        return Frame(e, np.eye(n, dtype=complex), np.arange(n), np.array([0, 1]), (n,))
    nc, nt = model.control.n_levels, model.target.n_levels
    h = model.bare_hamiltonian()
    w, v = np.linalg.eigh(h)
    order = np.argmax(np.abs(v) ** 2, axis=1)  # bare state -> dressed column
    if len(set(order.tolist())) != len(order):
        raise ValueError("dressed states cannot be labelled uniquely; coupling too strong")
    v = v[:, order]
    w = w[order]
    v = v * np.exp(-1j * np.angle(np.diag(v)))[None, :]
    exc = np.add.outer(np.arange(nc), np.arange(nt)).ravel()
    comp = np.array([0, 1, nt, nt + 1])
    e00, e01, e10, e11 = w[comp]
    w_t = 0.5 * ((e01 - e00) + (e11 - e10))
    w_c = 0.5 * ((e10 - e00) + (e11 - e01))
    local = w.copy()
    local[comp] = e00 + np.array([0.0, w_t, w_c, w_c + w_t])
    return Frame(local, v, exc, comp, (nc, nt), w)


_FRAMES: dict = {}


def frame_of(model) -> Frame:
    if model not in _FRAMES:
        _FRAMES[model] = _frame_for(model)
    return _FRAMES[model]


def drive_operator(model, on: str = "control") -> np.ndarray:
    """Lowering operator of the driven transmon, in the frame basis."""
    fr = frame_of(model)
    if isinstance(model, TransmonModel):
        return lowering(model.n_levels)
    nc, nt = fr.levels
    if on == "control":
        a = np.kron(lowering(nc), np.eye(nt))
    elif on == "target":
        a = np.kron(np.eye(nc), lowering(nt))
    else:
        raise ValueError(f"unknown drive port {on!r}")
    return fr.vectors.conj().T @ a @ fr.vectors


def static_perturbation(model) -> np.ndarray:
    fr = frame_of(model)
    d = len(fr.energies)
    p = np.diag(fr.dressed - fr.energies).astype(complex)
    if isinstance(model, TwoQubitModel):
        idx = fr.comp_index
        for label, nu in model.static_terms:
            p[np.ix_(idx, idx)] += TWO_PI * nu / 2 * pauli(label)
    return p


def transition_freqs_hz(model) -> np.ndarray:
    """All single-excitation transition frequencies of the static Hamiltonian."""
    fr = frame_of(model)
    e = fr.dressed / TWO_PI
    ex = fr.excitations
    out = [abs(e[j] - e[i]) for i in range(len(e)) for j in range(len(e)) if ex[j] == ex[i] + 1]
    return np.array(out)


def qubit_freq_hz(model, which: str = "target") -> float:
    """Dressed 0->1 frequency of one qubit, averaged over the other qubit's state."""
    fr = frame_of(model)
    e = fr.dressed / TWO_PI
    if isinstance(model, TransmonModel):
        return float(e[1] - e[0])
    nc, nt = fr.levels
    if which == "target":
        return float(0.5 * ((e[1] - e[0]) + (e[nt + 1] - e[nt])))
    return float(0.5 * ((e[nt] - e[0]) + (e[nt + 1] - e[1])))


@dataclass(frozen=True)
class DriveSignal:
    """Drive applied to one transmon's charge operator.

    ``frame="lab"``: real voltage samples ``v``; the Hamiltonian term is
    ``2 pi g v(t) (a + a^+)`` with ``g = coupling_hz_per_unit``.

    ``frame="rotating"``: complex envelope ``z`` of a carrier at
    ``f_drive = f_ref + detuning_hz`` (``f_ref`` is the driven qubit's dressed
    frequency); the term is ``pi g (z e^{i w_d t} a + h.c.)``, the rotating-wave
    part of the lab drive ``Re(z e^{i w_d t})``.
    """

    samples: np.ndarray
    rate_hz: float
    coupling_hz_per_unit: float
    frame: str = "lab"
    detuning_hz: float = 0.0
    port: str = "control"
    t0_s: float = 0.0

    def __post_init__(self):
        if self.frame not in ("lab", "rotating"):
            raise ValueError("frame must be 'lab' or 'rotating'")
        s = np.asarray(self.samples)
        if self.frame == "lab":
            if np.iscomplexobj(s):
                if np.any(s.imag != 0):
                    raise ValueError("lab-frame samples must be real")
                s = s.real
            s = s.astype(float)
        else:
            s = s.astype(complex)
        if s.ndim != 1 or len(s) < 3:
            raise ValueError("need at least 3 drive samples")
        if not self.rate_hz > 0:
            raise ValueError("rate_hz must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def duration_s(self) -> float:
        return (len(self.samples) - 1) / self.rate_hz


@dataclass(frozen=True)
class GateResult:
    propagator: np.ndarray | None
    fidelity: float
    leakage: float
    ideal: np.ndarray | None = None
    channel: np.ndarray | None = None
    duration_s: float = 0.0
    info: dict = field(default_factory=dict, compare=False)

    @cached_property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity

    def summary(self) -> str:
        lines = [f"fidelity: {self.fidelity:.12g}",
                 f"infidelity: {1 - self.fidelity:.6g}",
                 f"leakage: {self.leakage:.6g}",
                 f"duration_s: {self.duration_s:.9g}"]
        for k in sorted(self.info):
            v = self.info[k]
            lines.append(f"{k}: {v:.12g}" if isinstance(v, float) else f"{k}: {v}")
        return "\n".join(lines)


def write_sweep_csv(rows, path) -> None:
    """Rows of ``(amplitude, length_s, infidelity, leakage)``."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["amplitude", "length_s", "infidelity", "leakage"])
        for r in rows:
            w.writerow([f"{float(x):.17g}" for x in r])
