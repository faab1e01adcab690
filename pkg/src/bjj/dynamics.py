"""Lossless evolution and the block-structured two-body loss master equation.

The density matrix never couples sectors with different atom numbers; the
loss terms only feed sector ``N`` from sector ``N + 2``.  Because ``H0`` and
the damping operator are diagonal in the Fock basis, each block is
integrated in its own interaction picture

    X_N(tau) = exp(-lambda_N tau) rho_N(tau) exp(-conj(lambda_N) tau),
    lambda_N = -i h0_N - d_N,

which removes the fast ``H0`` phases.  The feed from ``N + 2`` then carries
factors ``exp(tau (lambda_{N+2}[a'] - lambda_N[a]))`` whose real part is
never positive, so ``X`` stays bounded.  The remaining ODE is solved with an
adaptive 8th-order Dormand-Prince pair.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.integrate import DOP853

from .fock import (
    Channel,
    ModelParams,
    SectorState,
    damping_eigenvalues,
    h0_eigenvalues,
    jump_coefficients,
    jump_shift,
)

log = logging.getLogger(__name__)

__all__ = [
    "BlockDensity",
    "IntegrationError",
    "IntegratorConfig",
    "SectorDensity",
    "StepSizeUnderflow",
    "ToleranceNotAchievable",
    "cat_component_phases",
    "evolve_master",
    "evolve_master_series",
    "formation_time",
    "lossless_evolve",
    "master_rhs",
    "mean_atom_number",
    "sector_weight",
]

# exp() of anything below this is treated as an underflowing block scale
_LOG_UNDERFLOW = -600.0


class IntegrationError(RuntimeError):
    """The master-equation integration could not reach the requested time."""


class StepSizeUnderflow(IntegrationError):
    pass


class ToleranceNotAchievable(IntegrationError):
    pass


@dataclass
class SectorDensity:
    """Unnormalized block ``w_N rho_N`` on the sector with ``n_total`` atoms.

    When the block is too small to represent (strong damping), the stored
    matrix is rescaled and the true block is ``exp(log_scale) * mat``.
    """

    n_total: int
    mat: np.ndarray
    log_scale: float = 0.0

    def __post_init__(self):
        self.mat = np.asarray(self.mat, dtype=complex)
        n = self.n_total + 1
        if self.mat.shape != (n, n):
            raise ValueError(f"sector N={self.n_total} needs a {n}x{n} matrix, got {self.mat.shape}")

    @property
    def trace_weight(self) -> float:
        tr = float(np.trace(self.mat).real)
        if self.log_scale == 0.0:
            return tr
        return tr * math.exp(self.log_scale) if self.log_scale > _LOG_UNDERFLOW else 0.0

    @property
    def log_weight(self) -> float:
        tr = float(np.trace(self.mat).real)
        return math.log(tr) + self.log_scale if tr > 0 else -math.inf

    def normalized(self) -> np.ndarray:
        tr = np.trace(self.mat).real
        if tr <= 0:
            raise ZeroDivisionError(f"sector N={self.n_total} carries no weight")
        return self.mat / tr

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.mat - self.mat.conj().T)))

    @classmethod
    def from_state(cls, state: SectorState, weight: float = 1.0) -> "SectorDensity":
        return cls(state.n_total, weight * state.density())


@dataclass
class BlockDensity:
    """Full state as blocks for ``N = N0, N0 - 2, ...`` (strictly decreasing)."""

    blocks: list[SectorDensity]
    time: float = 0.0

    def __post_init__(self):
        ns = [b.n_total for b in self.blocks]
        if any(a - b != 2 for a, b in zip(ns, ns[1:])):
            raise ValueError(f"block sectors must decrease by 2, got {ns}")

    @classmethod
    def from_state(cls, state: SectorState, time: float = 0.0) -> "BlockDensity":
        return cls([SectorDensity.from_state(state.normalized())], time)

    @property
    def sectors(self) -> list[int]:
        return [b.n_total for b in self.blocks]

    @property
    def n_top(self) -> int:
        return self.blocks[0].n_total

    def block(self, n_total: int) -> SectorDensity | None:
        for b in self.blocks:
            if b.n_total == n_total:
                return b
        return None

    def weights(self) -> dict[int, float]:
        return {b.n_total: b.trace_weight for b in self.blocks}

    def total_trace(self) -> float:
        return float(sum(b.trace_weight for b in self.blocks))


def sector_weight(rho: BlockDensity, n_total: int) -> float:
    """Probability ``w_N`` of finding ``N`` atoms; 0 for absent sectors."""
    b = rho.block(n_total)
    return 0.0 if b is None else b.trace_weight


def mean_atom_number(rho: BlockDensity) -> float:
    w = rho.weights()
    total = sum(w.values())
    return sum(n * wn for n, wn in w.items()) / total


def lossless_evolve(state: SectorState, t: float, p: ModelParams) -> SectorState:
    """``exp(-i t H0)`` applied to a sector state."""
    return SectorState(state.n_total, state.amps * np.exp(-1j * t * h0_eigenvalues(state.n_total, p)))


def formation_time(q: int, p: ModelParams) -> float:
    """Time ``t_q = pi / |chi q|`` at which a ``q``-component cat forms."""
    if p.chi == 0:
        raise ValueError("chi = 0: no cat state is ever formed")
    return math.pi / abs(p.chi * q)


def cat_component_phases(n_total: int, q: int, p: ModelParams) -> np.ndarray:
    """Azimuths ``phi_k`` of the ``q`` coherent states making up the cat at ``t_q``.

    ``H0`` restricted to the sector is ``chi n1^2 + b n1 + const``; the
    quadratic phase at ``t_q`` splits the state into components at
    ``2 pi k / q`` (q even) or ``(2k + 1) pi / q`` (q odd), and the linear
    term rotates all of them by ``b t_q``.
    """
    N = n_total
    b = (p.E1 - p.E2 - 0.5 * p.U1 + p.U2 * (0.5 - N) + p.U12 * N)
    tq = formation_time(q, p)
    k = np.arange(q)
    base = 2 * np.pi * k / q if q % 2 == 0 else (2 * k + 1) * np.pi / q
    phases = base + b * tq
    # wrap into [-pi, pi)
    return np.sort((phases + np.pi) % (2 * np.pi) - np.pi)


def master_rhs(rho: BlockDensity, p: ModelParams) -> BlockDensity:
    """Time derivative of every block (Schroedinger picture)."""
    out = []
    prev = None
    for blk in rho.blocks:
        N = blk.n_total
        mat = blk.mat * math.exp(blk.log_scale) if blk.log_scale else blk.mat
        h = h0_eigenvalues(N, p)
        d = damping_eigenvalues(N, p)
        dm = -1j * (h[:, None] - h[None, :]) * mat - (d[:, None] + d[None, :]) * mat
        if prev is not None:
            for m in p.active_channels():
                s = jump_shift(m)
                c = jump_coefficients(N, m)
                dm += p.rate(m) * c[:, None] * prev[s:s + N + 1, s:s + N + 1] * c[None, :]
        out.append(SectorDensity(N, dm))
        prev = mat
    # a sector below the lowest stored block still receives population
    low = rho.blocks[-1].n_total - 2
    if low >= 0 and not p.lossless:
        dm = np.zeros((low + 1, low + 1), dtype=complex)
        for m in p.active_channels():
            s = jump_shift(m)
            c = jump_coefficients(low, m)
            dm += p.rate(m) * c[:, None] * prev[s:s + low + 1, s:s + low + 1] * c[None, :]
        out.append(SectorDensity(low, dm))
    return BlockDensity(out, rho.time)


@dataclass
class IntegratorConfig:
    """Accuracy and bookkeeping controls for :func:`evolve_master`.

    ``rtol``/``atol`` bound the local error of every block relative to that
    block's largest interaction-picture element.  ``min_sector`` drops all
    sectors below it; this is exact for the retained blocks because the
    cascade only feeds downwards.
    """

    rtol: float = 1e-9
    atol: float = 1e-14
    max_step: float = math.inf
    first_step: float | None = None
    max_steps: int = 1_000_000
    min_sector: int | None = None


_A = DOP853.A
_B = DOP853.B
_C = DOP853.C
_E3 = DOP853.E3
_E5 = DOP853.E5
_NSTAGES = DOP853.n_stages
_ERR_EXPONENT = -1.0 / (DOP853.error_estimator_order + 1)


class _Cascade:
    """Flat interaction-picture state plus the per-block feed factors."""

    def __init__(self, sectors: list[int], p: ModelParams):
        self.sectors = sectors
        self.p = p
        sizes = [(n + 1) ** 2 for n in sectors]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.size = int(self.offsets[-1])
        self.lam = [-1j * h0_eigenvalues(n, p) - damping_eigenvalues(n, p) for n in sectors]
        # feeds[j] = list of (shift, sqrt(gamma) * coef, u) for block j fed by block j-1
        self.feeds: list[list[tuple[int, np.ndarray, np.ndarray]]] = [[]]
        for j in range(1, len(sectors)):
            N = sectors[j]
            feeds = []
            for m in p.active_channels():
                s = jump_shift(m)
                coef = math.sqrt(p.rate(m)) * jump_coefficients(N, m)
                u = self.lam[j - 1][s:s + N + 1] - self.lam[j]
                feeds.append((s, coef, u))
            self.feeds.append(feeds)
        self.max_rate = max((np.max(np.abs(u)) for fs in self.feeds for _, _, u in fs), default=0.0)

    def views(self, flat: np.ndarray) -> list[np.ndarray]:
        return [flat[self.offsets[j]:self.offsets[j + 1]].reshape(n + 1, n + 1)
                for j, n in enumerate(self.sectors)]

    def rhs(self, tau: float, y: np.ndarray, out: np.ndarray) -> np.ndarray:
        src = self.views(y)
        dst = self.views(out)
        dst[0][...] = 0.0
        for j in range(1, len(self.sectors)):
            N = self.sectors[j]
            acc = dst[j]
            acc[...] = 0.0
            for s, coef, u in self.feeds[j]:
                v = coef * np.exp(tau * u)
                acc += (v[:, None] * src[j - 1][s:s + N + 1, s:s + N + 1]) * v.conj()[None, :]
        return out

    def block_max(self, flat: np.ndarray) -> np.ndarray:
        return np.maximum.reduceat(np.abs(flat), self.offsets[:-1])

    def hermitize(self, flat: np.ndarray):
        for v in self.views(flat):
            v[...] = 0.5 * (v + v.conj().T)

    def to_blocks(self, flat: np.ndarray, tau: float, time: float) -> BlockDensity:
        blocks = []
        for j, (n, x) in enumerate(zip(self.sectors, self.views(flat))):
            e = tau * self.lam[j]
            shift = float(np.max(e.real))
            if shift > _LOG_UNDERFLOW / 2:
                shift = 0.0
            f = np.exp(e - shift)
            mat = f[:, None] * x * f.conj()[None, :]
            mat = 0.5 * (mat + mat.conj().T)
            blocks.append(SectorDensity(n, mat, log_scale=2.0 * shift))
        return BlockDensity(blocks, time)


def _initial_flat(rho0: BlockDensity, cascade: _Cascade) -> np.ndarray:
    y = np.zeros(cascade.size, dtype=complex)
    views = cascade.views(y)
    for j, n in enumerate(cascade.sectors):
        blk = rho0.block(n)
        if blk is not None:
            views[j][...] = blk.mat * math.exp(blk.log_scale) if blk.log_scale else blk.mat
    return y


def evolve_master_series(
    rho0: BlockDensity,
    times: Iterable[float],
    p: ModelParams,
    cfg: IntegratorConfig | None = None,
) -> list[BlockDensity]:
    """Solve the master equation and return the state at each of ``times``.

    ``times`` are absolute and must not precede ``rho0.time``.  Steps are
    clipped to land exactly on every requested time.
    """
    cfg = cfg or IntegratorConfig()
    t0 = rho0.time
    targets = sorted(float(t) for t in times)
    if targets and targets[0] < t0 - 1e-15:
        raise ValueError(f"requested time {targets[0]} precedes the initial time {t0}")
    n_top = rho0.n_top
    n_min = n_top % 2 if cfg.min_sector is None else max(cfg.min_sector, n_top % 2)
    if p.lossless:
        n_min = max(n_min, rho0.blocks[-1].n_total)
    sectors = list(range(n_top, n_min - 1, -2))
    cascade = _Cascade(sectors, p)
    y = _initial_flat(rho0, cascade)

    out = []
    tau = 0.0
    h = cfg.first_step
    if h is None:
        h = 0.1 / (cascade.max_rate + 1.0)
    h = min(h, cfg.max_step)
    K = np.empty((_NSTAGES + 1, cascade.size), dtype=complex)
    stats = {"accepted": 0, "rejected": 0}
    have_f0 = False
    for target in targets:
        tau_end = target - t0
        while tau < tau_end - 1e-15 * max(1.0, abs(tau_end)):
            if cascade.max_rate == 0.0:
                tau = tau_end
                break
            if stats["accepted"] + stats["rejected"] > cfg.max_steps:
                raise ToleranceNotAchievable(
                    f"exceeded {cfg.max_steps} steps before t={target}; tolerance too tight")
            h = min(h, cfg.max_step, tau_end - tau)
            if h < 1e-14 * max(1.0, abs(tau)):
                raise StepSizeUnderflow(
                    f"step size {h:.3e} underflowed at t={t0 + tau:.6g}; the problem is too stiff")
            if not have_f0:
                cascade.rhs(tau, y, K[0])
                have_f0 = True
            y_new, err = _dop853_step(cascade, tau, y, h, K, cfg)
            if err <= 1.0:
                tau += h
                cascade.hermitize(y_new)
                y = y_new
                K[0] = K[_NSTAGES]
                stats["accepted"] += 1
                factor = 10.0 if err == 0 else min(10.0, 0.9 * err ** _ERR_EXPONENT)
                h *= factor
            else:
                stats["rejected"] += 1
                h *= max(0.2, 0.9 * err ** _ERR_EXPONENT)
        tau = tau_end
        out.append(cascade.to_blocks(y, tau, t0 + tau))
    log.debug("master equation: %d sectors, %d accepted / %d rejected steps",
              len(sectors), stats["accepted"], stats["rejected"])
    return out


def _dop853_step(cascade: _Cascade, tau, y, h, K, cfg):
    for s in range(1, _NSTAGES):
        dy = np.tensordot(_A[s, :s], K[:s], axes=1) * h
        cascade.rhs(tau + _C[s] * h, y + dy, K[s])
    y_new = y + h * np.tensordot(_B, K[:_NSTAGES], axes=1)
    cascade.rhs(tau + h, y_new, K[_NSTAGES])
    scale = cfg.atol + cfg.rtol * np.maximum(cascade.block_max(y), cascade.block_max(y_new))
    e5 = cascade.block_max(np.tensordot(_E5, K, axes=1)) / scale
    e3 = cascade.block_max(np.tensordot(_E3, K, axes=1)) / scale
    e5n, e3n = float(np.max(e5)) ** 2, float(np.max(e3)) ** 2
    if e5n == 0.0 and e3n == 0.0:
        return y_new, 0.0
    err = abs(h) * e5n / math.sqrt(e5n + 0.01 * e3n)
    return y_new, err


def evolve_master(
    rho0: BlockDensity,
    t_final: float,
    p: ModelParams,
    cfg: IntegratorConfig | None = None,
) -> BlockDensity:
    """State at ``t_final`` (absolute time) of the two-body loss master equation."""
    if t_final < rho0.time:
        raise ValueError("t_final must not precede the initial time")
    return evolve_master_series(rho0, [t_final], p, cfg)[-1]
