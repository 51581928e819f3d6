"""Time evolution of driven transmon models."""

from __future__ import annotations

import numpy as np

from ._kernels import rk4_lindblad, rk4_unitary
from .fidelity import average_gate_fidelity, channel_fidelity, leakage_of, project
from .models import (TWO_PI, DriveSignal, GateResult, TransmonModel, TwoQubitModel,
                     drive_operator, frame_of, qubit_freq_hz, static_perturbation,
                     transition_freqs_hz)

UNITARITY_TOL = 1e-6
POINTS_PER_PERIOD = 8


class StepSizeError(RuntimeError):
    pass


def _generator(model, drive: DriveSignal):
    fr = frame_of(model)
    dop = drive_operator(model, drive.port)
    pert = static_perturbation(model)
    g = TWO_PI * drive.coupling_hz_per_unit
    if drive.frame == "lab":
        energies = fr.energies
        c = g * drive.samples.astype(complex)
        fastest = float(transition_freqs_hz(model).max())
    else:
        if getattr(model, "static_terms", ()):
            raise ValueError("static terms are defined in the qubit frame; use a lab-frame drive")
        which = drive.port if isinstance(model, TwoQubitModel) else "target"
        f_drive = qubit_freq_hz(model, which) + drive.detuning_hz
        energies = fr.energies - TWO_PI * f_drive * fr.excitations
        c = 0.5 * g * drive.samples
        e = energies / TWO_PI
        fastest = max(float(np.abs(np.subtract.outer(e, e)).max()), 1.0)
    return energies, dop, c, pert, fastest


def check_step(drive: DriveSignal, model, dt_s: float | None) -> int:
    """Samples per half step; RK4 needs the drive at start, midpoint and end of each step."""
    h = 1.0 / drive.rate_hz
    if dt_s is None:
        m = 1
    else:
        m = dt_s / (2 * h)
        if abs(m - round(m)) > 1e-9 or round(m) < 1:
            raise ValueError("dt_s must be an even multiple of the drive sample interval")
        m = int(round(m))
    _, _, _, _, fastest = _generator(model, drive)
    if 2 * m * h > 1.0 / (POINTS_PER_PERIOD * fastest) * (1 + 1e-9):
        raise StepSizeError(f"dt = {2 * m * h:.4g} s does not resolve {fastest:.4g} Hz with "
                            f"{POINTS_PER_PERIOD} points per period; raise the drive rate or lower dt")
    return m


def propagate(model, drive: DriveSignal, dt_s: float | None = None, u0: np.ndarray | None = None) -> np.ndarray:
    """Interaction-picture propagator over the drive record, in the frame basis."""
    m = check_step(drive, model, dt_s)
    energies, dop, c, pert, _ = _generator(model, drive)
    c = np.ascontiguousarray(c[::m])
    d = len(energies)
    u = np.eye(d, dtype=complex) if u0 is None else np.array(u0, dtype=complex, order="C")
    rk4_unitary(u, energies, np.ascontiguousarray(dop), c, np.ascontiguousarray(pert),
                drive.t0_s, m / drive.rate_hz)
    return u


def _check_unitary(u: np.ndarray, dt: float) -> None:
    err = float(np.abs(u.conj().T @ u - np.eye(len(u))).max())
    if err > UNITARITY_TOL:
        raise StepSizeError(f"propagator unitarity drift {err:.3g} exceeds {UNITARITY_TOL:g}; "
                            f"reduce dt (currently {dt:.4g} s)")


def lindblad_channel(model, drive: DriveSignal, dt_s: float | None = None,
                     rhos: np.ndarray | None = None) -> np.ndarray:
    """Evolve density matrices (default: all matrix units |i><j|) with T1/Tphi dissipation."""
    m = check_step(drive, model, dt_s)
    energies, dop, c, pert, _ = _generator(model, drive)
    fr = frame_of(model)
    d = len(energies)
    lops = [fr.vectors.conj().T @ l @ fr.vectors for l in model.collapse_ops()]
    lops = np.array(lops, dtype=complex).reshape(len(lops), d, d)
    if rhos is None:
        rhos = np.zeros((d * d, d, d), dtype=complex)
        for k in range(d * d):
            rhos[k, k % d, k // d] = 1.0  # column-stacked vec basis
    rhos = np.array(rhos, dtype=complex, order="C")
    rk4_lindblad(rhos, energies, np.ascontiguousarray(dop), np.ascontiguousarray(c[::m]),
                 np.ascontiguousarray(pert), lops, drive.t0_s, m / drive.rate_hz)
    return rhos


def superoperator(rhos: np.ndarray) -> np.ndarray:
    """Column-stacked superoperator from the images of the matrix units."""
    n = rhos.shape[0]
    return np.stack([rhos[k].reshape(-1, order="F") for k in range(n)], axis=1)


def evolve(model: TransmonModel | TwoQubitModel, drive: DriveSignal, dt_s: float | None = None, *,
           ideal: np.ndarray | None = None, open_system: bool | None = None) -> GateResult:
    """Integrate the model under ``drive`` with fixed-step RK4.

    ``dt_s`` defaults to two drive samples.  Closed-system runs integrate the
    propagator; with ``open_system`` (default: whenever the model carries T1
    or Tphi) the Lindblad equation is integrated for every matrix unit and the
    resulting channel is returned.  ``ideal`` (computational subspace) sets
    the fidelity reference; by default the identity.
    """
    fr = frame_of(model)
    ncomp = len(fr.comp_index)
    if ideal is None:
        ideal = np.eye(ncomp, dtype=complex)
    if open_system is None:
        open_system = bool(model.collapse_ops())
    dt = dt_s if dt_s is not None else 2.0 / drive.rate_hz
    if not open_system:
        u = propagate(model, drive, dt_s)
        _check_unitary(u, dt)
        return GateResult(u, average_gate_fidelity(project(u, fr.comp_index), ideal),
                          leakage_of(u, fr.comp_index), ideal, None, drive.duration_s)
    rhos = lindblad_channel(model, drive, dt_s)
    s = superoperator(rhos)
    f, leak = channel_fidelity(s, ideal, fr.comp_index, len(fr.energies))
    return GateResult(None, f, leak, ideal, s, drive.duration_s)
