"""Fixed-step RK4 kernels for the interaction-picture propagator and the Lindblad channel.

Both kernels see ``H(t)_ij = exp(i (E_i - E_j) t) (c(t) D_ij + conj(c(t)) conj(D_ji)) + P_ij``
with drive samples ``c`` spaced ``h``; one RK4 step of ``2h`` reads samples
``k, k+1, k+2`` (start, midpoint, end).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _hamiltonian(out, energies, dop, c, pert, t):
    d = energies.shape[0]
    ph = np.empty(d, dtype=np.complex128)
    for i in range(d):
        ph[i] = np.exp(1j * energies[i] * t)
    cc = np.conj(c)
    for i in range(d):
        for j in range(d):
            out[i, j] = ph[i] * np.conj(ph[j]) * (c * dop[i, j] + cc * np.conj(dop[j, i])) + pert[i, j]


@njit(cache=True)
def _neg_i_matmul(out, h, u):
    d = h.shape[0]
    m = u.shape[1]
    for i in range(d):
        for j in range(m):
            acc = 0j
            for k in range(d):
                acc += h[i, k] * u[k, j]
            out[i, j] = -1j * acc


@njit(cache=True)
def rk4_unitary(u, energies, dop, c, pert, t0, h):
    """Propagate ``u`` in place over ``(len(c) - 1) // 2`` steps."""
    d = u.shape[0]
    m = u.shape[1]
    n_steps = (c.shape[0] - 1) // 2
    dt = 2.0 * h
    hm = np.empty((d, d), dtype=np.complex128)
    k1 = np.empty((d, m), dtype=np.complex128)
    k2 = np.empty((d, m), dtype=np.complex128)
    k3 = np.empty((d, m), dtype=np.complex128)
    k4 = np.empty((d, m), dtype=np.complex128)
    tmp = np.empty((d, m), dtype=np.complex128)
    for s in range(n_steps):
        t = t0 + s * dt
        _hamiltonian(hm, energies, dop, c[2 * s], pert, t)
        _neg_i_matmul(k1, hm, u)
        _hamiltonian(hm, energies, dop, c[2 * s + 1], pert, t + h)
        for i in range(d):
            for j in range(m):
                tmp[i, j] = u[i, j] + h * k1[i, j]
        _neg_i_matmul(k2, hm, tmp)
        for i in range(d):
            for j in range(m):
                tmp[i, j] = u[i, j] + h * k2[i, j]
        _neg_i_matmul(k3, hm, tmp)
        _hamiltonian(hm, energies, dop, c[2 * s + 2], pert, t + dt)
        for i in range(d):
            for j in range(m):
                tmp[i, j] = u[i, j] + dt * k3[i, j]
        _neg_i_matmul(k4, hm, tmp)
        for i in range(d):
            for j in range(m):
                u[i, j] += dt / 6.0 * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
    return n_steps


@njit(cache=True)
def _lindblad_rhs(out, hm, rho, lops, ldag_l):
    d = hm.shape[0]
    for i in range(d):
        for j in range(d):
            acc = 0j
            for k in range(d):
                acc += -1j * (hm[i, k] * rho[k, j] - rho[i, k] * hm[k, j])
                acc += -0.5 * (ldag_l[i, k] * rho[k, j] + rho[i, k] * ldag_l[k, j])
            out[i, j] = acc
    for m in range(lops.shape[0]):
        for i in range(d):
            for j in range(d):
                acc = 0j
                for k in range(d):
                    lr = 0j
                    for l in range(d):
                        lr += lops[m, i, l] * rho[l, k]
                    acc += lr * np.conj(lops[m, j, k])
                out[i, j] += acc


@njit(cache=True)
def rk4_lindblad(rhos, energies, dop, c, pert, lops, t0, h):
    """Propagate a stack of density matrices ``rhos[n, d, d]`` in place."""
    n_rho = rhos.shape[0]
    d = rhos.shape[1]
    n_steps = (c.shape[0] - 1) // 2
    dt = 2.0 * h
    ldag_l = np.zeros((d, d), dtype=np.complex128)
    for m in range(lops.shape[0]):
        for i in range(d):
            for j in range(d):
                for k in range(d):
                    ldag_l[i, j] += np.conj(lops[m, k, i]) * lops[m, k, j]
    h0 = np.empty((d, d), dtype=np.complex128)
    h1 = np.empty((d, d), dtype=np.complex128)
    h2 = np.empty((d, d), dtype=np.complex128)
    k1 = np.empty((d, d), dtype=np.complex128)
    k2 = np.empty((d, d), dtype=np.complex128)
    k3 = np.empty((d, d), dtype=np.complex128)
    k4 = np.empty((d, d), dtype=np.complex128)
    tmp = np.empty((d, d), dtype=np.complex128)
    for s in range(n_steps):
        t = t0 + s * dt
        _hamiltonian(h0, energies, dop, c[2 * s], pert, t)
        _hamiltonian(h1, energies, dop, c[2 * s + 1], pert, t + h)
        _hamiltonian(h2, energies, dop, c[2 * s + 2], pert, t + dt)
        for r in range(n_rho):
            rho = rhos[r]
            _lindblad_rhs(k1, h0, rho, lops, ldag_l)
            for i in range(d):
                for j in range(d):
                    tmp[i, j] = rho[i, j] + h * k1[i, j]
            _lindblad_rhs(k2, h1, tmp, lops, ldag_l)
            for i in range(d):
                for j in range(d):
                    tmp[i, j] = rho[i, j] + h * k2[i, j]
            _lindblad_rhs(k3, h1, tmp, lops, ldag_l)
            for i in range(d):
                for j in range(d):
                    tmp[i, j] = rho[i, j] + dt * k3[i, j]
            _lindblad_rhs(k4, h2, tmp, lops, ldag_l)
            for i in range(d):
                for j in range(d):
                    rho[i, j] += dt / 6.0 * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
    return n_steps
