"""Quantum Fisher information, Husimi distributions and shot-noise figures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dynamics import BlockDensity, SectorDensity, mean_atom_number
from .fock import angular_momentum_matrices, log_binomial

__all__ = [
    "FisherMode",
    "FisherResult",
    "HusimiGrid",
    "fidelity",
    "husimi",
    "husimi_local_maxima",
    "qfi_matrix",
    "qfi_optimal",
    "qfi_total",
    "shot_noise_report",
]

PAIR_CUTOFF = 1e-12
HERMITICITY_TOL = 1e-8


class FisherMode(str, Enum):
    SHARED = "shared_direction"
    PER_SECTOR = "per_sector"


@dataclass(frozen=True)
class FisherResult:
    """Optimal Fisher information and the direction achieving it.

    ``tie_broken`` is set when the top eigenvalue of the Fisher matrix is
    degenerate and the direction was picked by the tie-breaking rule.
    """

    value: float
    direction: np.ndarray
    per_sector: list = field(default_factory=list)
    tie_broken: bool = False


@dataclass(frozen=True)
class HusimiGrid:
    theta_axis: np.ndarray
    phi_axis: np.ndarray
    values: np.ndarray  # indexed [theta, phi]

    def normalization(self, n_total: int) -> float:
        """``(N + 1) / (4 pi) * int Q pi sin(theta) dtheta dphi`` by the trapezoid rule."""
        # close the periodic phi axis before integrating
        phi = np.append(self.phi_axis, self.phi_axis[0] + 2 * np.pi)
        q = np.concatenate([self.values, self.values[:, :1]], axis=1)
        inner = np.trapezoid(q, phi, axis=1)
        total = np.trapezoid(inner * np.sin(self.theta_axis), self.theta_axis)
        return (n_total + 1) / (4 * np.pi) * np.pi * total


def _check_block(rho: SectorDensity) -> np.ndarray:
    mat = rho.normalized()
    herr = float(np.max(np.abs(mat - mat.conj().T)))
    if herr > HERMITICITY_TOL:
        raise ValueError(f"block is not Hermitian (max deviation {herr:.2e})")
    return 0.5 * (mat + mat.conj().T)


def qfi_matrix(rho: SectorDensity) -> np.ndarray:
    """Fisher matrix ``F_ab`` with ``F(n) = n^T F n`` for ``J_n = n . J``.

    The block is normalized to unit trace first.
    """
    mat = _check_block(rho)
    p, V = np.linalg.eigh(mat)
    p = np.clip(p, 0.0, None)
    J = angular_momentum_matrices(rho.n_total)
    A = [V.conj().T @ Ja @ V for Ja in J]
    ps = p[:, None] + p[None, :]
    keep = ps > PAIR_CUTOFF * p.max()
    W = np.zeros_like(ps)
    W[keep] = (p[:, None] - p[None, :])[keep] ** 2 / ps[keep]
    F = np.empty((3, 3))
    for a in range(3):
        for b in range(a, 3):
            F[a, b] = F[b, a] = 2.0 * np.sum(W * np.real(A[a] * A[b].conj()))
    return F


def _top_direction(F: np.ndarray, rtol: float = 1e-9) -> tuple[float, np.ndarray, bool]:
    w, V = np.linalg.eigh(F)
    top = w[-1]
    scale = max(abs(top), 1.0)
    idx = np.flatnonzero(w >= top - rtol * scale)
    if idx.size == 1:
        n = V[:, -1]
        # fix the sign so the first nonzero component is positive
        k = np.flatnonzero(np.abs(n) > 1e-12)[0]
        n = n if n[k] > 0 else -n
        return float(max(top, 0.0)), n / np.linalg.norm(n), False
    # degenerate: the lexicographically largest unit vector of the eigenspace
    # is the normalized projection of the first basis axis not orthogonal to it
    basis = V[:, idx]
    P = basis @ basis.T
    for e in np.eye(3):
        v = P @ e
        nv = np.linalg.norm(v)
        if nv > 1e-9:
            return float(max(top, 0.0)), v / nv, True
    raise AssertionError("empty eigenspace")


def qfi_optimal(rho: SectorDensity) -> FisherResult:
    """Largest eigenvalue of :func:`qfi_matrix` and its unit eigenvector."""
    value, n, tie = _top_direction(qfi_matrix(rho))
    return FisherResult(value, n, [], tie)


def qfi_total(rho: BlockDensity, mode: str | FisherMode = FisherMode.SHARED) -> FisherResult:
    """Fisher information of a block-diagonal state.

    ``shared_direction`` maximizes ``n^T (sum_N w_N F_N) n``; ``per_sector``
    returns ``sum_N w_N max_n F_N(n)``.  The result direction is the shared
    optimum in the first mode and the direction of the heaviest sector in the
    second.
    """
    mode = FisherMode(mode)
    weights = rho.weights()
    total_w = sum(weights.values())
    mats, rows = [], []
    for N in rho.sectors:
        w = weights[N] / total_w
        if w <= 0 or N == 0:
            rows.append((N, 0.0, w))
            mats.append(np.zeros((3, 3)))
            continue
        F = qfi_matrix(rho.block(N))
        mats.append(F)
        rows.append((N, float(np.linalg.eigvalsh(F)[-1]), w))
    if mode is FisherMode.SHARED:
        Fw = sum(r[2] * F for r, F in zip(rows, mats))
        value, n, tie = _top_direction(Fw)
        per = [(N, float(n @ F @ n), w) for (N, _, w), F in zip(rows, mats)]
        return FisherResult(value, n, per, tie)
    value = sum(w * f for _, f, w in rows)
    heavy = int(np.argmax([w for _, _, w in rows]))
    _, n, tie = _top_direction(mats[heavy])
    return FisherResult(float(value), n, rows, tie)


def _coherent_matrix(n_total: int, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Conjugated coherent amplitudes for every grid point, shape (points, N + 1)."""
    n = np.arange(n_total + 1)
    lb = log_binomial(n_total, n)
    with np.errstate(divide="ignore"):
        ls = np.log(np.sin(theta / 2))[:, None]
        lc = np.log(np.cos(theta / 2))[:, None]
    logmag = lb[None, :] / 2 + _safe_mul(n, ls) + _safe_mul(n_total - n, lc)
    mag = np.exp(logmag)
    return mag * np.exp(1j * phi[:, None] * n[None, :])  # conj of exp(-i phi n)


def _safe_mul(k, log_x):
    # k * log(x) with 0 * log(0) = 0
    with np.errstate(invalid="ignore"):
        out = k[None, :] * log_x
    return np.where(k[None, :] == 0, 0.0, out)


def husimi(rho: SectorDensity, theta_points: int = 181, phi_points: int = 361) -> HusimiGrid:
    """``Q(theta, phi) = <theta, phi| rho |theta, phi> / pi`` on a regular grid.

    ``theta`` spans ``[0, pi]`` inclusive and ``phi`` spans ``[-pi, pi)``.
    The block is normalized to unit trace.
    """
    if theta_points < 2 or phi_points < 2:
        raise ValueError("grids need at least two points")
    mat = rho.normalized()
    theta = np.linspace(0.0, np.pi, theta_points)
    phi = -np.pi + 2 * np.pi * np.arange(phi_points) / phi_points
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    bra = _coherent_matrix(rho.n_total, tt.ravel(), pp.ravel())
    q = np.einsum("ka,ab,kb->k", bra, mat, bra.conj()).real / np.pi
    return HusimiGrid(theta, phi, np.clip(q, 0.0, None).reshape(tt.shape))


def husimi_local_maxima(grid: HusimiGrid, theta_index: int | None = None,
                        rel_threshold: float = 0.1) -> np.ndarray:
    """Phases of local maxima of ``Q`` along one theta row (periodic in phi).

    Defaults to the row closest to the equator; peaks below ``rel_threshold``
    times the row maximum are discarded.
    """
    if theta_index is None:
        theta_index = int(np.argmin(np.abs(grid.theta_axis - np.pi / 2)))
    row = grid.values[theta_index]
    left, right = np.roll(row, 1), np.roll(row, -1)
    peak = (row > left) & (row >= right) & (row >= rel_threshold * row.max())
    return grid.phi_axis[peak]


def shot_noise_report(rho: BlockDensity, F: FisherResult) -> dict:
    """Mean atom number, best phase precision ``F^{-1/2}`` and the sub-shot-noise flag."""
    mean_n = mean_atom_number(rho)
    precision = 1.0 / math.sqrt(F.value) if F.value > 0 else math.inf
    return {
        "mean_N": mean_n,
        "F": F.value,
        "phase_precision": precision,
        "sub_shot_noise": bool(F.value > mean_n),
    }


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(a) b sqrt(a)))^2`` of two unit-trace matrices.

    Both arguments are treated as Hermitian positive semidefinite, so the
    square roots come from Hermitian eigensolves (accurate for rank-deficient
    states, unlike a general matrix square root).
    """
    a = 0.5 * (a + a.conj().T)
    b = 0.5 * (b + b.conj().T)
    pa, Va = np.linalg.eigh(a)
    sa = (Va * np.sqrt(_drop_noise(pa))) @ Va.conj().T
    inner = sa @ b @ sa
    lam = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(np.sum(np.sqrt(_drop_noise(lam))) ** 2)


def _drop_noise(w):
    # eigenvalues at the rounding level would add spurious sqrt(eps) terms
    cut = w.size * np.finfo(float).eps * max(float(w.max()), 0.0)
    return np.where(w > cut, w, 0.0)
