"""Brute-force references built directly on the two-mode Fock space."""

import numpy as np
import scipy.linalg


def full_basis(n0):
    """All (n1, n2) with n1 + n2 <= n0, ordered by total number (descending) then n1.

    The dimension is (n0 + 1)(n0 + 2) / 2; sectors of the wrong parity stay empty.
    """
    basis = []
    for N in range(n0, -1, -1):
        basis += [(n1, N - n1) for n1 in range(N + 1)]
    return basis


def mode_operators(n0, p):
    """Dense H0 and jump operators a1^2, a2^2, a1 a2 on the full truncated space."""
    basis = full_basis(n0)
    index = {s: i for i, s in enumerate(basis)}
    D = len(basis)
    H = np.zeros((D, D))
    jumps = {"1": np.zeros((D, D)), "2": np.zeros((D, D)), "12": np.zeros((D, D))}
    for i, (n1, n2) in enumerate(basis):
        H[i, i] = (p.E1 * n1 + p.E2 * n2 + 0.5 * p.U1 * n1 * (n1 - 1)
                   + 0.5 * p.U2 * n2 * (n2 - 1) + p.U12 * n1 * n2)
        for key, (d1, d2) in (("1", (2, 0)), ("2", (0, 2)), ("12", (1, 1))):
            m1, m2 = n1 - d1, n2 - d2
            if m1 >= 0 and m2 >= 0:
                amp = 1.0
                for k in range(d1):
                    amp *= np.sqrt(n1 - k)
                for k in range(d2):
                    amp *= np.sqrt(n2 - k)
                jumps[key][index[(m1, m2)], i] = amp
    rates = {"1": p.gamma1, "2": p.gamma2, "12": p.gamma12}
    return basis, H, jumps, rates


def liouvillian(n0, p):
    """Row-major vectorized generator: vec(d rho/dt) = L vec(rho)."""
    basis, H, jumps, rates = mode_operators(n0, p)
    D = len(basis)
    I = np.eye(D)
    L = -1j * (np.kron(H, I) - np.kron(I, H.T))
    for key, M in jumps.items():
        g = rates[key]
        if g == 0:
            continue
        MdM = M.T @ M
        L += g * (np.kron(M, M.conj()) - 0.5 * np.kron(MdM, I) - 0.5 * np.kron(I, MdM.T))
    return basis, L


def brute_force_evolve(psi0, n0, p, t):
    """Full density matrix at time t from expm of the dense Liouvillian.

    Returns ``{N: block}`` for every N <= n0 (unnormalized, indexed by n1).
    """
    basis, L = liouvillian(n0, p)
    D = len(basis)
    rho0 = np.zeros((D, D), dtype=complex)
    rho0[: n0 + 1, : n0 + 1] = np.outer(psi0, psi0.conj())
    rho = (scipy.linalg.expm(L * t) @ rho0.ravel()).reshape(D, D)
    out, start = {}, 0
    for N in range(n0, -1, -1):
        out[N] = rho[start:start + N + 1, start:start + N + 1]
        start += N + 1
    return out


def heff_matrix(N, p):
    """Dense non-Hermitian H0 - i D on the fixed-N sector."""
    n1 = np.arange(N + 1)
    n2 = N - n1
    h = (p.E1 * n1 + p.E2 * n2 + 0.5 * p.U1 * n1 * (n1 - 1) + 0.5 * p.U2 * n2 * (n2 - 1)
         + p.U12 * n1 * n2)
    d = 0.5 * (p.gamma1 * n1 * (n1 - 1) + p.gamma2 * n2 * (n2 - 1) + p.gamma12 * n1 * n2)
    return np.diag(h - 1j * d)


def jump_matrix(N, key):
    """Dense jump operator from the N sector to the N - 2 sector."""
    M = np.zeros((N - 1, N + 1))
    for n1 in range(N + 1):
        n2 = N - n1
        d1, d2 = {"1": (2, 0), "2": (0, 2), "12": (1, 1)}[key]
        m1, m2 = n1 - d1, n2 - d2
        if m1 >= 0 and m2 >= 0:
            amp = 1.0
            for k in range(d1):
                amp *= np.sqrt(n1 - k)
            for k in range(d2):
                amp *= np.sqrt(n2 - k)
            M[m1, n1] = amp
    return M
