"""Quantum-jump unraveling of the loss master equation.

Between jumps the state evolves under the diagonal ``H_eff = H0 - i D``, so
the no-jump propagator is exact and jump times are drawn by inverting the
survival probability rather than by time stepping.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .dynamics import BlockDensity, SectorDensity
from .fock import (
    Channel,
    ModelParams,
    SectorState,
    apply_jump,
    coherent_state,
    coherent_state_log_tan,
    damping_eigenvalues,
    h0_eigenvalue,
    damping_eigenvalue,
    heff_eigenvalues,
)

__all__ = [
    "EnsembleEstimate",
    "JumpRecord",
    "Trajectory",
    "channel_weights",
    "derive_seed",
    "dynamical_phase",
    "ensemble_average",
    "evolve_with_jumps",
    "jump_angles",
    "multi_jump_angles",
    "propagate_no_jump",
    "propagate_normalized",
    "run_trajectory",
    "sample_channel",
    "sample_waiting_time",
    "survival_probability",
    "trajectory_state_analytic",
    "write_trajectory_log",
]


@dataclass(frozen=True)
class JumpRecord:
    channel: Channel
    time: float

    def __post_init__(self):
        object.__setattr__(self, "channel", Channel.parse(self.channel))
        if self.time < 0:
            raise ValueError("jump times must be non-negative")


@dataclass
class Trajectory:
    seed: int
    jumps: list[JumpRecord]
    t_final: float
    final_state: SectorState

    def as_record(self) -> dict:
        return {
            "seed": int(self.seed),
            "jumps": [[j.channel.value, j.time] for j in self.jumps],
            "t_final": self.t_final,
            "n_final": self.final_state.n_total,
        }


def propagate_no_jump(state: SectorState, dt: float, p: ModelParams) -> SectorState:
    """``exp(-i dt H_eff)`` applied exactly; the result is not renormalized."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return SectorState(state.n_total, state.amps * np.exp(-1j * dt * heff_eigenvalues(state.n_total, p)))


def propagate_normalized(state: SectorState, dt: float, p: ModelParams) -> tuple[SectorState, float]:
    """Normalized ``exp(-i dt H_eff) psi`` and the log of its squared norm.

    Works in log space so that strong damping does not underflow the state.
    """
    N = state.n_total
    with np.errstate(divide="ignore"):
        log_mag = np.log(np.abs(state.amps)) - dt * damping_eigenvalues(N, p)
    phase = np.angle(state.amps) - dt * _h0(N, p)
    top = np.max(log_mag)
    if not np.isfinite(top):
        raise ZeroDivisionError("state has no support")
    mag = np.exp(log_mag - top)
    nrm2 = float(np.sum(mag ** 2))
    amps = mag / math.sqrt(nrm2) * np.exp(1j * phase)
    return SectorState(N, amps), 2.0 * top + math.log(nrm2)


def _h0(N, p):
    return heff_eigenvalues(N, p).real


def survival_probability(state: SectorState, s: float, p: ModelParams) -> float:
    """``||exp(-i s H_eff) psi||^2``."""
    d = damping_eigenvalues(state.n_total, p)
    return float(np.sum(np.abs(state.amps) ** 2 * np.exp(-2.0 * s * d)))


def sample_waiting_time(state: SectorState, r: float, t_max: float, p: ModelParams) -> float | None:
    """Time ``s`` at which the no-jump norm of ``state`` decays to ``r``.

    Returns ``None`` when no jump happens before ``t_max``.
    """
    if r >= 1.0:
        return 0.0
    if not 0.0 < r:
        raise ValueError("r must lie in (0, 1]")
    w = np.abs(state.amps) ** 2
    d = damping_eigenvalues(state.n_total, p)
    support = w > 0
    logw, d = np.log(w[support]), d[support]
    if not np.any(d > 0):
        return None
    log_r = math.log(r)

    def f(s):
        return logsumexp(logw - 2.0 * s * d) - log_r

    if f(t_max) > 0:
        return None
    # the norm is an average of exponentials, so ln(1/r)/(2 max d) is a lower bound
    lo = -log_r / (2.0 * d.max())
    if lo >= t_max or f(lo) <= 0:
        lo = 0.0
    return float(brentq(f, lo, t_max, xtol=1e-300, rtol=1e-12, maxiter=500))


def channel_weights(state: SectorState, p: ModelParams) -> dict[Channel, float]:
    """Jump rates ``gamma_m ||M_m psi||^2`` for every channel."""
    if state.n_total < 2:
        return {m: 0.0 for m in Channel}
    return {m: (p.rate(m) * apply_jump(state, m).norm2() if p.rate(m) > 0 else 0.0)
            for m in Channel}


def sample_channel(state_at_jump: SectorState, r: float, p: ModelParams) -> Channel:
    w = channel_weights(state_at_jump, p)
    total = sum(w.values())
    if total <= 0:
        raise ValueError("no loss channel has positive weight")
    acc = 0.0
    last = None
    for m in Channel:
        if w[m] <= 0:
            continue
        acc += w[m] / total
        last = m
        if r < acc:
            return m
    return last


def evolve_with_jumps(initial: SectorState, jumps: Sequence[JumpRecord], t: float,
                      p: ModelParams) -> SectorState:
    """Normalized state after ``H_eff`` evolution interrupted by the given jumps."""
    state = initial.normalized()
    now = 0.0
    for jump in sorted(jumps, key=lambda j: j.time):
        if jump.time > t:
            raise ValueError("jump time beyond the final time")
        state, _ = propagate_normalized(state, jump.time - now, p)
        state = apply_jump(state, jump.channel).normalized()
        now = jump.time
    state, _ = propagate_normalized(state, t - now, p)
    return state


def run_trajectory(n0: int, theta: float, phi: float, t_final: float, p: ModelParams,
                   seed: int) -> Trajectory:
    """One quantum trajectory from ``|n0; theta, phi>``; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    state = coherent_state(n0, theta, phi)
    now = 0.0
    jumps = []
    while True:
        r = 1.0 - rng.random()
        s = None if state.n_total < 2 else sample_waiting_time(state, r, t_final - now, p)
        if s is None:
            state, _ = propagate_normalized(state, t_final - now, p)
            break
        state, _ = propagate_normalized(state, s, p)
        now += s
        m = sample_channel(state, rng.random(), p)
        state = apply_jump(state, m).normalized()
        jumps.append(JumpRecord(m, now))
    return Trajectory(seed=int(seed), jumps=jumps, t_final=t_final, final_state=state)


def jump_angles(m: Channel, s: float, p: ModelParams) -> tuple[float, float]:
    """Bloch angles ``(2 arctan exp(-s delta_m), 2 s chi_m)`` imparted by a loss at ``s``."""
    m = Channel.parse(m)
    if s < 0:
        raise ValueError("s must be non-negative")
    return 2.0 * math.atan(math.exp(-s * p.delta_m(m))), 2.0 * s * p.chi_m(m)


def _log_tan_and_phase(jumps: Iterable[JumpRecord], p: ModelParams) -> tuple[float, float]:
    log_tan = 0.0
    phase = 0.0
    for j in jumps:
        log_tan -= j.time * p.delta_m(j.channel)
        phase += 2.0 * j.time * p.chi_m(j.channel)
    return log_tan, phase


def multi_jump_angles(jumps: Sequence[JumpRecord], p: ModelParams) -> tuple[float, float]:
    """Accumulated angles: azimuths add, ``tan(theta/2)`` factors multiply."""
    log_tan, phase = _log_tan_and_phase(jumps, p)
    return 2.0 * math.atan(math.exp(log_tan)), phase


def _heff_pair(n1: int, n2: int, p: ModelParams) -> complex:
    N = n1 + n2
    return h0_eigenvalue(n1, N, p) - 1j * damping_eigenvalue(n1, N, p)


def dynamical_phase(t: float, s: float, n1: int, n_total: int, m: Channel,
                    p: ModelParams) -> complex:
    """Complex phase accumulated by ``|n1, n2>`` that loses two atoms at ``s``.

    ``(t - s) H_eff(after) + s H_eff(before)`` with ``n1, n2`` counted before
    the loss.
    """
    m = Channel.parse(m)
    if not 0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    n2 = n_total - n1
    r1, r2 = m.removed
    if n1 < r1 or n2 < r2 or n2 < 0:
        raise ValueError(f"|{n1},{n2}> has too few atoms for a loss in channel {m.value}")
    return (t - s) * _heff_pair(n1 - r1, n2 - r2, p) + s * _heff_pair(n1, n2, p)


def trajectory_state_analytic(jumps: Sequence[JumpRecord], t: float, n0: int, p: ModelParams,
                              theta0: float = math.pi / 2, phi0: float = 0.0) -> SectorState:
    """Closed-form trajectory state: a rotated coherent state evolved by ``H_eff``.

    After ``J`` losses the state is ``exp(-i t H_eff) |n0 - 2J; theta_J, phi_J>``
    normalized, independent of the order of the jumps.
    """
    if any(j.time > t for j in jumps):
        raise ValueError("jump time beyond the final time")
    N = n0 - 2 * len(jumps)
    if N < 0:
        raise ValueError("more jumps than atom pairs")
    log_tan, phase = _log_tan_and_phase(jumps, p)
    if theta0 <= 0 or theta0 >= math.pi:
        if jumps:
            raise ValueError("polar initial states are not rotated by losses; use evolve_with_jumps")
        return propagate_normalized(coherent_state(N, theta0, phi0), t, p)[0]
    log_tan += math.log(math.tan(theta0 / 2.0))
    cs = coherent_state_log_tan(N, log_tan, phi0 + phase)
    return propagate_normalized(cs, t, p)[0]


def derive_seed(seed: int, index: int) -> int:
    """64-bit seed of trajectory ``index`` in an ensemble seeded by ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class _Partial:
    n0: int
    count: dict = field(default_factory=dict)
    s1: dict = field(default_factory=dict)
    s2re: dict = field(default_factory=dict)
    s2im: dict = field(default_factory=dict)
    records: list = field(default_factory=list)

    def add(self, traj: Trajectory, index: int, keep_record: bool):
        psi = traj.final_state
        N = psi.n_total
        rho = psi.density()
        if N not in self.count:
            shape = rho.shape
            self.count[N] = 0
            self.s1[N] = np.zeros(shape, dtype=complex)
            self.s2re[N] = np.zeros(shape)
            self.s2im[N] = np.zeros(shape)
        self.count[N] += 1
        self.s1[N] += rho
        self.s2re[N] += rho.real ** 2
        self.s2im[N] += rho.imag ** 2
        if keep_record:
            rec = traj.as_record()
            rec["index"] = index
            self.records.append(rec)

    def merge(self, other: "_Partial"):
        for N in other.count:
            if N not in self.count:
                self.count[N] = 0
                self.s1[N] = np.zeros_like(other.s1[N])
                self.s2re[N] = np.zeros_like(other.s2re[N])
                self.s2im[N] = np.zeros_like(other.s2im[N])
            self.count[N] += other.count[N]
            self.s1[N] += other.s1[N]
            self.s2re[N] += other.s2re[N]
            self.s2im[N] += other.s2im[N]
        self.records.extend(other.records)


def _run_chunk(args) -> _Partial:
    n0, theta, phi, t, p, seed, start, stop, keep = args
    part = _Partial(n0)
    for i in range(start, stop):
        traj = run_trajectory(n0, theta, phi, t, p, derive_seed(seed, i))
        part.add(traj, i, keep)
    return part


@dataclass
class EnsembleEstimate:
    """Trajectory average of ``|psi><psi|`` sorted by sector.

    ``stderr[N]`` holds the jackknife standard errors of the real parts in its
    real component and of the imaginary parts in its imaginary component.
    ``weight_stderr[N]`` is the jackknife error of the sector frequency, floored
    by the add-one binomial error so that unvisited sectors get a finite value.
    """

    rho: BlockDensity
    stderr: dict[int, np.ndarray]
    weight_stderr: dict[int, float]
    counts: dict[int, int]
    n_traj: int
    records: list[dict] = field(default_factory=list)


def ensemble_average(n0: int, theta: float, phi: float, t: float, p: ModelParams,
                     n_traj: int, seed: int, workers: int = 1, chunk_size: int = 256,
                     keep_records: bool = False) -> EnsembleEstimate:
    """Monte Carlo estimate of the block density at time ``t``.

    Trajectory ``i`` is seeded by :func:`derive_seed`, and partial sums are
    formed over fixed index chunks and merged in index order, so the result
    does not depend on ``workers``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    chunks = [(n0, theta, phi, t, p, seed, a, min(a + chunk_size, n_traj), keep_records)
              for a in range(0, n_traj, chunk_size)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, chunks))
    else:
        parts = [_run_chunk(c) for c in chunks]
    total = _Partial(n0)
    for part in parts:
        total.merge(part)

    n = n_traj
    blocks, stderr, wstderr, counts = [], {}, {}, {}
    for N in range(n0, n0 % 2 - 1, -2):
        k = total.count.get(N, 0)
        counts[N] = k
        if k == 0:
            mean = np.zeros((N + 1, N + 1), dtype=complex)
            se = np.zeros((N + 1, N + 1), dtype=complex)
        else:
            mean = total.s1[N] / n
            mean = 0.5 * (mean + mean.conj().T)
            se = _jackknife_se(total.s1[N].real, total.s2re[N], n) + 1j * _jackknife_se(
                total.s1[N].imag, total.s2im[N], n)
        blocks.append(SectorDensity(N, mean))
        stderr[N] = se
        # sector indicator is 0/1, so its sum of squares equals its sum
        jk = float(_jackknife_se(np.array(k, float), np.array(k, float), n))
        wstderr[N] = max(jk, _laplace_se(k, n))
    return EnsembleEstimate(BlockDensity(blocks, t), stderr, wstderr, counts, n, total.records)


def _laplace_se(k: int, n: int) -> float:
    # binomial standard error with add-one smoothing; stays finite for k = 0
    pt = (k + 1) / (n + 2)
    return math.sqrt(pt * (1 - pt) / n)


def _jackknife_se(s1, s2, n):
    # delete-one jackknife of a sample mean: sqrt(sum (x_i - mean)^2 / (n (n - 1)))
    if n < 2:
        return np.zeros_like(s1)
    ss = np.maximum(s2 - s1 ** 2 / n, 0.0)
    return np.sqrt(ss / (n * (n - 1)))


def write_trajectory_log(records: Iterable[dict], fp: IO[str]):
    """One JSON object per line: index, seed, jump list and final sector."""
    for rec in records:
        fp.write(json.dumps(rec, sort_keys=True) + "\n")
