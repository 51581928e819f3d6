"""Gate fidelity, leakage and SU(2) rotation helpers."""

from __future__ import annotations

import numpy as np

from .models import PAULI


def project(u: np.ndarray, idx) -> np.ndarray:
    return u[np.ix_(idx, idx)]


def average_gate_fidelity(u_sim: np.ndarray, u_ideal: np.ndarray) -> float:
    """Average gate fidelity of ``u_sim`` (possibly a non-unitary subspace block) to ``u_ideal``.

    ``F = (|Tr(V^+ U)|^2 + Tr(U^+ U)) / (d (d + 1))``; for unitary U the second
    term is d.
    """
    u = np.asarray(u_sim, dtype=complex)
    v = np.asarray(u_ideal, dtype=complex)
    if u.shape != v.shape or u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    d = u.shape[0]
    tr = np.trace(v.conj().T @ u)
    return float((abs(tr) ** 2 + np.trace(u.conj().T @ u).real) / (d * (d + 1)))


def leakage_of(u: np.ndarray, idx) -> float:
    """Average population carried outside the computational subspace."""
    idx = np.asarray(idx)
    outside = np.setdiff1d(np.arange(u.shape[0]), idx)
    if outside.size == 0:
        return 0.0
    return float((np.abs(u[np.ix_(outside, idx)]) ** 2).sum() / len(idx))


def channel_fidelity(s: np.ndarray, ideal: np.ndarray, idx, d_full: int) -> tuple[float, float]:
    """Average gate fidelity and leakage of a column-stacked superoperator."""
    idx = np.asarray(idx)
    d = len(idx)
    # restrict to computational inputs and outputs
    pairs = [(i, j) for j in idx for i in idx]
    cols = [i + d_full * j for i, j in pairs]
    sub = s[np.ix_(cols, cols)]
    s_ideal = np.kron(ideal.conj(), ideal)
    f_pro = np.trace(s_ideal.conj().T @ sub).real / d**2
    # leakage: population of the maximally mixed computational input left outside
    diag_in = [i + d_full * i for i in idx]
    diag_out_full = [k + d_full * k for k in range(d_full)]
    out_pop = s[np.ix_(diag_out_full, diag_in)].real.sum(axis=0)
    comp_pop = s[np.ix_([i + d_full * i for i in idx], diag_in)].real.sum(axis=0)
    leak = float(np.mean(out_pop - comp_pop))
    # trace lost to leakage counts as error in the process fidelity
    f_avg = (d * f_pro + 1 - leak) / (d + 1)
    return float(f_avg), max(leak, 0.0)


def su2(u: np.ndarray) -> np.ndarray:
    """Scale a 2x2 block to unit determinant (principal branch)."""
    det = np.linalg.det(u)
    return u / np.sqrt(det)


def rotation_vector(u: np.ndarray) -> np.ndarray:
    """Axis times angle (in [0, pi] folded) of a 2x2 block, up to global phase."""
    v = su2(u)
    c = np.trace(v).real / 2
    comps = np.array([np.trace(v @ PAULI[k]) for k in "XYZ"])
    s = (1j * comps / 2).real  # sin(theta/2) * n
    if c < 0:
        c, s = -c, -s
    half = np.arctan2(np.linalg.norm(s), c)
    n = s / np.linalg.norm(s) if np.linalg.norm(s) > 0 else np.zeros(3)
    return 2 * half * n


def rotation_angle(u: np.ndarray, axis=None) -> float:
    """Rotation angle of a 2x2 block.

    Without ``axis`` the angle is folded into [0, pi].  With an axis (3-vector)
    the signed angle about it is returned in [0, 2 pi), which stays monotone
    through pi.
    """
    v = su2(u)
    c = np.trace(v).real / 2
    if axis is None:
        return float(2 * np.arccos(np.clip(abs(c), 0.0, 1.0)))
    n0 = np.asarray(axis, float)
    n0 = n0 / np.linalg.norm(n0)
    proj = sum(n0[i] * np.trace(v @ PAULI[k]) for i, k in enumerate("XYZ"))
    s = (1j * proj / 2).real
    return float((2 * np.arctan2(s, c)) % (2 * np.pi))


def rx(theta: float) -> np.ndarray:
    return np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * PAULI["X"]


def rphi(theta: float, phi: float) -> np.ndarray:
    """Rotation by ``theta`` about the equatorial axis (cos phi, -sin phi, 0)."""
    n = np.cos(phi) * PAULI["X"] - np.sin(phi) * PAULI["Y"]
    return np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * n


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def zx(theta: float) -> np.ndarray:
    """``exp(-i theta/2 Z (x) X)``."""
    from .models import pauli

    return np.cos(theta / 2) * np.eye(4) - 1j * np.sin(theta / 2) * pauli("ZX")
