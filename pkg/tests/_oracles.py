"""Slow, independent reference implementations used only by the tests."""

import math

import numpy as np
from scipy.integrate import solve_ivp


def jacobi_eigenvalues(a, tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi rotations until the off-diagonal norm is below ``tol``."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    for _ in range(max_sweeps):
        off = math.sqrt(np.sum(a * a) - np.sum(np.diag(a) ** 2))
        if off < tol:
            return np.sort(np.diag(a))
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(2)
                rot[0, 0] = rot[1, 1] = c
                rot[0, 1], rot[1, 0] = s, -s
                idx = [p, q]
                a[:, idx] = a[:, idx] @ rot
                a[idx, :] = rot.T @ a[idx, :]
    raise RuntimeError("Jacobi sweep did not converge")


def annihilation(n_tr):
    """``a`` on Fock states 0..n_tr, built from ``a|n> = sqrt(n)|n-1>``."""
    a = np.zeros((n_tr + 1, n_tr + 1))
    for n in range(1, n_tr + 1):
        a[n - 1, n] = math.sqrt(n)
    return a


SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SY = np.array([[0.0, -1j], [1j, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]])


def spin_matrices():
    """Pauli matrices in the (s=1, s=2) ordering where s=1 has sigma_z = -1."""
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    return swap @ SX @ swap, swap @ SY @ swap, swap @ SZ @ swap


def rabi_terms(omega, g, lam, n_tr):
    """Four operator terms assembled by Kronecker products, boson (x) spin."""
    a = annihilation(n_tr)
    ad = a.T
    sx, _, sz = spin_matrices()
    eye_b = np.eye(n_tr + 1)
    eye_s = np.eye(2)
    return (
        np.kron(ad @ a, eye_s),
        0.5 * omega * np.kron(eye_b, sz),
        g * np.kron(a + ad, sx),
        lam * np.kron(eye_b, sx),
    )


def rabi_hamiltonian(omega, g, lam, n_tr):
    return sum(rabi_terms(omega, g, lam, n_tr))


def schroedinger_ode(h, psi0, times, rtol=1e-12, atol=1e-12):
    """States ``psi(t)`` for ``i dpsi/dt = H psi`` by adaptive Runge-Kutta."""
    h = np.asarray(h, dtype=np.complex128)
    psi0 = np.asarray(psi0, dtype=np.complex128)
    d = psi0.size

    def rhs(_, y):
        psi = y[:d] + 1j * y[d:]
        dpsi = -1j * (h @ psi)
        return np.concatenate([dpsi.real, dpsi.imag])

    sol = solve_ivp(rhs, (times[0], times[-1]), np.concatenate([psi0.real, psi0.imag]),
                    method="DOP853", t_eval=times, rtol=rtol, atol=atol)
    assert sol.success, sol.message
    return (sol.y[:d] + 1j * sol.y[d:]).T


def symplectic_gradient_fd(energy, state, step=1e-6):
    """``(dH/dp, -dH/dx, -dH/d(dphi), dH/dZ)`` by central differences.

    ``state`` is ``(x, p, Z, dphi)``; the pairs are ``(x, p)`` and ``(dphi, Z)``.
    """
    state = np.asarray(state, dtype=np.float64)

    def d(i):
        up, dn = state.copy(), state.copy()
        up[i] += step
        dn[i] -= step
        return (energy(up) - energy(dn)) / (2.0 * step)

    return np.array([d(1), -d(0), -d(3), d(2)])


def grouped_gap_deviation(coeffs, energies, elements, tol=1e-10, keep=1e-16):
    """Infinite-time standard deviation with coinciding gaps summed coherently.

    Pairs whose gaps agree within ``tol`` oscillate at one frequency, so their
    amplitudes add before squaring.
    """
    idx = np.flatnonzero(np.abs(coeffs) ** 2 > keep)
    c, e, a = coeffs[idx], energies[idx], elements[np.ix_(idx, idx)]
    i, j = np.triu_indices(idx.size, 1)
    gap = e[j] - e[i]
    amp = np.conj(c[i]) * c[j] * a[i, j]
    order = np.argsort(gap)
    gap, amp = gap[order], amp[order]
    starts = np.r_[0, np.flatnonzero(np.diff(gap) > tol) + 1]
    return float(np.sqrt(2.0 * np.sum(np.abs(np.add.reduceat(amp, starts)) ** 2)))
