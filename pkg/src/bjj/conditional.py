"""Closed-form conditional states for few loss events.

For a coherent initial state ``|N0; pi/2, 0>`` a single loss in channel ``m``
at time ``s`` leaves a rotated coherent state with ``N0 - 2`` atoms.  Summing
over channels and integrating ``s`` gives the ``N0 - 2`` block as the
no-loss conditional state of ``N0 - 2`` atoms times an elementwise envelope
``sum_m gamma_m C_m(t; n, n')``.  The overall constant ``N0 (N0 - 1) / 4`` is
kept, so the block carries its absolute weight.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .dynamics import SectorDensity
from .fock import (Channel, ModelParams, coherent_state, damping_eigenvalues, h0_eigenvalues,
                   log_binomial)
from .trajectories import jump_angles

__all__ = [
    "EnvelopeSpec",
    "damping_center",
    "envelope_C",
    "envelope_matrix",
    "envelope_spec",
    "gaussian_no_loss_form",
    "jump_time_distribution",
    "log_jump_time_density",
    "loss_time_std",
    "multi_loss_conditional_approx",
    "no_loss_conditional",
    "single_loss_conditional",
    "single_loss_weight",
    "weak_loss_envelope",
]


class DegenerateDamping(ValueError):
    """``gamma1 + gamma2 - gamma12 = 0``: the no-loss damping is not quadratic."""


@dataclass(frozen=True)
class EnvelopeSpec:
    channel: Channel
    G_m: float
    delta_m: float
    chi_m: float


def decay_constant(m: Channel, p: ModelParams, n0: int) -> float:
    g1, g2, g12 = p.gamma1, p.gamma2, p.gamma12
    if m is Channel.ONE:
        return (2 * g1 + g12) * n0 - 2 * g1 - 2 * g12
    if m is Channel.TWO:
        return (2 * g2 + g12) * n0 - 2 * g2 - 2 * g12
    return (g1 + g2 + g12) * n0 - 2 * g1 - 2 * g2 - g12


def envelope_spec(m: Channel, p: ModelParams, n0: int) -> EnvelopeSpec:
    m = Channel.parse(m)
    return EnvelopeSpec(m, decay_constant(m, p, n0), p.delta_m(m), p.chi_m(m))


def damping_center(p: ModelParams, n0: int) -> float:
    """Center ``n1_bar`` of the quadratic no-loss damping ``d(n1)``."""
    curv = p.gamma1 + p.gamma2 - p.gamma12
    if abs(curv) <= 1e-12 * max(p.gamma1, p.gamma2, p.gamma12, 0.0):
        raise DegenerateDamping("gamma1 + gamma2 - gamma12 = 0: damping is linear in n1")
    return (p.gamma1 - p.gamma2 + n0 * (2 * p.gamma2 - p.gamma12)) / (2.0 * curv)


def _no_loss_amplitudes(t: float, p: ModelParams, n_total: int):
    """Log-magnitudes and phases of ``exp(-i t H_eff) |N; pi/2, 0>``."""
    cs = coherent_state(n_total, math.pi / 2, 0.0)
    with np.errstate(divide="ignore"):
        log_mag = np.log(np.abs(cs.amps)) - t * damping_eigenvalues(n_total, p)
    phase = -t * h0_eigenvalues(n_total, p)
    return log_mag, phase


def _stable_outer(log_mag, phase, extra=None):
    """``outer(psi, conj(psi)) * extra`` with the magnitude shifted to max 1."""
    shift = float(np.max(log_mag))
    a = np.exp(log_mag - shift) * np.exp(1j * phase)
    mat = np.outer(a, a.conj())
    if extra is not None:
        mat = mat * extra
    return mat, 2.0 * shift


def _as_sector(n_total, mat, log_scale):
    # fold the scale back into the matrix whenever it is representable
    if log_scale > -600.0:
        return SectorDensity(n_total, mat * math.exp(log_scale))
    return SectorDensity(n_total, mat, log_scale=log_scale)


def no_loss_conditional(t: float, p: ModelParams, n0: int) -> SectorDensity:
    """Unnormalized state conditioned on no loss in ``[0, t]``.

    Its trace is the no-jump probability ``w_{N0}(t)``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    log_mag, phase = _no_loss_amplitudes(t, p, n0)
    return _as_sector(n0, *_stable_outer(log_mag, phase))


def gaussian_no_loss_form(t: float, p: ModelParams, n0: int) -> np.ndarray:
    """Normalized no-loss state built as Gaussian damping of the lossless state.

    Each element of ``|psi0(t)><psi0(t)|`` is multiplied by
    ``exp(-t [d(n1) + d(n1')])`` with ``d = (g1 + g2 - g12)/2 (n1 - n1_bar)^2``.
    """
    nbar = damping_center(p, n0)
    n = np.arange(n0 + 1)
    d = 0.5 * (p.gamma1 + p.gamma2 - p.gamma12) * (n - nbar) ** 2
    cs = coherent_state(n0, math.pi / 2, 0.0)
    with np.errstate(divide="ignore"):
        log_mag = np.log(np.abs(cs.amps)) - t * d
    mat, _ = _stable_outer(log_mag, -t * h0_eigenvalues(n0, p))
    return mat / np.trace(mat).real


def envelope_C(m: Channel, t: float, n, n_prime, p: ModelParams, n0: int):
    """Envelope ``C_m(t; n, n') = (1 - exp(-t z)) / z``.

    ``z = G_m + delta_m (n + n' - N0 + 2) + 2 i chi_m (n - n')``; a series is
    used when ``|z t| < 1e-6``.  Accepts scalars or broadcastable arrays.
    """
    spec = envelope_spec(m, p, n0)
    n = np.asarray(n, dtype=float)
    n_prime = np.asarray(n_prime, dtype=float)
    z = spec.G_m + spec.delta_m * (n + n_prime - n0 + 2) + 2j * spec.chi_m * (n - n_prime)
    out = _one_minus_exp_over(z, t)
    return complex(out) if out.ndim == 0 else out


def _one_minus_exp_over(z, t):
    z = np.asarray(z, dtype=complex)
    zt = z * t
    small = np.abs(zt) < 1e-6
    safe = np.where(small, 1.0, z)
    with np.errstate(over="ignore", invalid="ignore"):
        full = -np.expm1(-zt) / safe
    series = t * (1.0 - zt / 2.0 + zt ** 2 / 6.0)
    return np.where(small, series, full)


def envelope_matrix(t: float, p: ModelParams, n0: int) -> np.ndarray:
    """``sum_m gamma_m C_m(t; n, n')`` on the ``N0 - 2`` sector."""
    n = np.arange(n0 - 1, dtype=float)
    env = np.zeros((n0 - 1, n0 - 1), dtype=complex)
    for m in p.active_channels():
        env += p.rate(m) * envelope_C(m, t, n[:, None], n[None, :], p, n0)
    return env


def _single_loss_block(t: float, p: ModelParams, n0: int) -> tuple[np.ndarray, float]:
    env = envelope_matrix(t, p, n0)
    log_mag, phase = _no_loss_amplitudes(t, p, n0 - 2)
    mat, log_scale = _stable_outer(log_mag, phase, env)
    return mat, log_scale + math.log(n0 * (n0 - 1) / 4.0)


def single_loss_conditional(t: float, p: ModelParams, n0: int) -> tuple[SectorDensity, float]:
    """State with ``N0 - 2`` atoms after exactly one loss in ``[0, t]``.

    Returns the unit-trace block and the weight ``w_{N0-2}(t)`` obtained by
    integrating the jump-time density over ``s`` and summing channels.
    """
    if n0 < 2:
        raise ValueError("need at least two atoms")
    if p.lossless:
        raise ValueError("no loss channel is active")
    mat, _ = _single_loss_block(t, p, n0)
    mat = mat / np.trace(mat).real
    return SectorDensity(n0 - 2, mat), single_loss_weight(t, p, n0)


def single_loss_block(t: float, p: ModelParams, n0: int) -> SectorDensity:
    """Unnormalized ``w_{N0-2} rho_{N0-2}`` with the absolute constant restored."""
    return _as_sector(n0 - 2, *_single_loss_block(t, p, n0))


def multi_loss_conditional_approx(t: float, J: int, p: ModelParams, n0: int) -> SectorDensity:
    """Weak-loss approximation of the ``N0 - 2J`` block (unit trace).

    The single-loss envelope is raised to the power ``J`` and applied to the
    no-loss state of ``N0 - 2J`` atoms.
    """
    if J < 1 or n0 - 2 * J < 0:
        raise ValueError(f"cannot lose {J} pairs from {n0} atoms")
    rates = [p.rate(m) * t for m in p.active_channels()]
    if rates and max(rates) > 0.1:
        warnings.warn("gamma_m t is not small; the J-loss envelope formula is unreliable",
                      stacklevel=2)
    if J > max(1, n0 // 10):
        warnings.warn("J is not small compared to N0", stacklevel=2)
    N = n0 - 2 * J
    n = np.arange(N + 1, dtype=float)
    env = np.zeros((N + 1, N + 1), dtype=complex)
    for m in p.active_channels():
        env += p.rate(m) * envelope_C(m, t, n[:, None], n[None, :], p, n0)
    log_mag, phase = _no_loss_amplitudes(t, p, N)
    mat, _ = _stable_outer(log_mag, phase, env ** J)
    return SectorDensity(N, mat / np.trace(mat).real)


def weak_loss_envelope(q: int, n: int, n_prime: int, chi: float) -> float:
    """Weak-loss modulus ``pi / (|chi| q) |sinc(pi (n - n') / q)|`` at ``t_q``."""
    if q < 2:
        raise ValueError("q must be at least 2")
    # numpy's sinc is sin(pi x) / (pi x)
    return math.pi / (abs(chi) * q) * abs(float(np.sinc((n - n_prime) / q)))


def log_jump_time_density(m: Channel, s, t: float, p: ModelParams, n0: int):
    """Log of the single-loss jump-time density (``-inf`` when ``gamma_m = 0``)."""
    m = Channel.parse(m)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    gm = p.rate(m)
    if gm == 0:
        return np.full(s.shape, -np.inf)
    spec = envelope_spec(m, p, n0)
    N = n0 - 2
    n = np.arange(N + 1)
    d = damping_eigenvalues(N, p)
    lb = log_binomial(N, n)
    out = np.empty(s.shape)
    for i, si in enumerate(s):
        x = -si * spec.delta_m  # log tan(theta_m / 2)
        log_s = x - np.logaddexp(0.0, 2 * x) / 2
        log_c = -np.logaddexp(0.0, 2 * x) / 2
        norm = logsumexp(lb + 2 * n * log_s + 2 * (N - n) * log_c - 2 * t * d)
        ax = abs(si * spec.delta_m)
        log_cosh = ax + math.log1p(math.exp(-2 * ax)) - math.log(2.0)
        out[i] = (math.log(gm) - si * spec.G_m + N * log_cosh + norm
                  + math.log(n0 * (n0 - 1) / 4.0))
    return out


def jump_time_distribution(m: Channel, s: float, t: float, p: ModelParams, n0: int) -> float:
    """Density of the loss time ``s`` for trajectories with exactly one loss in channel ``m``."""
    if not 0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    return float(np.exp(log_jump_time_density(m, s, t, p, n0))[0])


def _quad_pieces(t, scale):
    # breakpoints resolving a density that decays on the time scale ``scale``
    pts = [0.0]
    if 0 < scale < t:
        for k in (1, 3, 10, 30):
            if k * scale < t:
                pts.append(k * scale)
    pts.append(t)
    return pts


def _moments(m, t, p, n0, orders=(0, 1, 2)):
    spec = envelope_spec(m, p, n0)
    grid = np.linspace(0.0, t, 65)
    ref = float(np.max(log_jump_time_density(m, grid, t, p, n0)))
    pts = _quad_pieces(t, 1.0 / spec.G_m if spec.G_m > 0 else t)
    out = []
    for k in orders:
        total = 0.0
        for a, b in zip(pts, pts[1:]):
            val, _ = integrate.quad(
                lambda s: s ** k * math.exp(log_jump_time_density(m, s, t, p, n0)[0] - ref),
                a, b, epsrel=1e-10, epsabs=0.0, limit=200)
            total += val
        out.append(total)
    return out, ref


def single_loss_weight(t: float, p: ModelParams, n0: int) -> float:
    """``w_{N0-2}(t)``: the jump-time density integrated over ``s`` and summed over channels."""
    total = 0.0
    for m in p.active_channels():
        (m0,), ref = _moments(m, t, p, n0, orders=(0,))
        total += m0 * math.exp(ref) if ref > -700 else 0.0
    return total


def loss_time_std(m: Channel, t: float, p: ModelParams, n0: int) -> float:
    """Standard deviation of the single-loss time ``s`` in channel ``m``."""
    m = Channel.parse(m)
    if p.rate(m) <= 0:
        raise ValueError(f"channel {m.value} has zero rate")
    (m0, m1, m2), _ = _moments(m, t, p, n0)
    if m0 <= 0:
        raise ValueError("jump-time density has zero total weight")
    mean = m1 / m0
    return math.sqrt(max(m2 / m0 - mean ** 2, 0.0))


def angles_for_loss(m: Channel, s: float, p: ModelParams) -> tuple[float, float]:
    """Alias of :func:`bjj.trajectories.jump_angles` for analytic callers."""
    return jump_angles(m, s, p)
