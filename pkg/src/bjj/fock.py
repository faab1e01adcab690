"""Fixed-N Fock sectors of the two-mode junction.

A sector with ``N`` atoms is spanned by ``|n1, N - n1>`` for ``n1 = 0..N``;
every vector and matrix in the package is indexed by ``n1`` ascending.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

__all__ = [
    "Channel",
    "ModelParams",
    "SectorState",
    "angular_momentum_apply",
    "angular_momentum_matrices",
    "apply_jump",
    "coherent_state",
    "coherent_state_log_tan",
    "damping_eigenvalue",
    "damping_eigenvalues",
    "h0_eigenvalue",
    "h0_eigenvalues",
    "heff_eigenvalues",
    "jump_coefficients",
    "log_binomial",
]


class Channel(enum.Enum):
    """Two-body loss channel; every channel removes two atoms."""

    ONE = "1"
    TWO = "2"
    TWELVE = "12"

    @property
    def removed(self) -> tuple[int, int]:
        """Atoms removed from (mode 1, mode 2)."""
        return {"1": (2, 0), "2": (0, 2), "12": (1, 1)}[self.value]

    @classmethod
    def parse(cls, text: str | "Channel") -> "Channel":
        if isinstance(text, Channel):
            return text
        key = str(text).strip().lower()
        aliases = {"1": "1", "one": "1", "2": "2", "two": "2", "12": "12", "twelve": "12"}
        if key not in aliases:
            raise ValueError(f"unknown loss channel {text!r}")
        return cls(aliases[key])


@dataclass(frozen=True)
class ModelParams:
    """Energies and two-body loss rates (hbar = 1).

    ``chi`` and the per-channel ``chi_m`` / ``delta_m`` are derived once at
    construction.
    """

    E1: float = 0.0
    E2: float = 0.0
    U1: float = 0.0
    U2: float = 0.0
    U12: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    gamma12: float = 0.0
    chi: float = field(init=False)
    chi_1: float = field(init=False)
    chi_2: float = field(init=False)
    chi_12: float = field(init=False)
    delta_1: float = field(init=False)
    delta_2: float = field(init=False)
    delta_12: float = field(init=False)

    def __post_init__(self):
        for name in ("gamma1", "gamma2", "gamma12"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        U1, U2, U12 = self.U1, self.U2, self.U12
        g1, g2, g12 = self.gamma1, self.gamma2, self.gamma12
        derived = {
            "chi": (U1 + U2 - 2.0 * U12) / 2.0,
            "chi_1": U1 - U12,
            "chi_2": -(U2 - U12),
            "chi_12": (U1 - U2) / 2.0,
            "delta_1": 2.0 * g1 - g12,
            "delta_2": -(2.0 * g2 - g12),
            "delta_12": g1 - g2,
        }
        for name, value in derived.items():
            object.__setattr__(self, name, float(value))

    @classmethod
    def from_chis(
        cls,
        chi1: float,
        chi2: float,
        gamma1: float = 0.0,
        gamma2: float = 0.0,
        gamma12: float = 0.0,
        E1: float = 0.0,
        E2: float = 0.0,
        U12: float = 0.0,
    ) -> "ModelParams":
        """Build parameters from the channel energies ``chi_1``, ``chi_2``.

        The split into ``U1, U2, U12`` is fixed by the choice of ``U12``
        (default 0); ``chi = (chi1 - chi2) / 2`` does not depend on it.
        """
        return cls(E1=E1, E2=E2, U1=chi1 + U12, U2=U12 - chi2, U12=U12,
                   gamma1=gamma1, gamma2=gamma2, gamma12=gamma12)

    def with_rates(self, gamma1=None, gamma2=None, gamma12=None) -> "ModelParams":
        return ModelParams(
            E1=self.E1, E2=self.E2, U1=self.U1, U2=self.U2, U12=self.U12,
            gamma1=self.gamma1 if gamma1 is None else gamma1,
            gamma2=self.gamma2 if gamma2 is None else gamma2,
            gamma12=self.gamma12 if gamma12 is None else gamma12,
        )

    def rate(self, m: Channel) -> float:
        return {Channel.ONE: self.gamma1, Channel.TWO: self.gamma2,
                Channel.TWELVE: self.gamma12}[m]

    def chi_m(self, m: Channel) -> float:
        return {Channel.ONE: self.chi_1, Channel.TWO: self.chi_2,
                Channel.TWELVE: self.chi_12}[m]

    def delta_m(self, m: Channel) -> float:
        return {Channel.ONE: self.delta_1, Channel.TWO: self.delta_2,
                Channel.TWELVE: self.delta_12}[m]

    @property
    def lossless(self) -> bool:
        return self.gamma1 == 0 and self.gamma2 == 0 and self.gamma12 == 0

    def active_channels(self) -> list[Channel]:
        return [m for m in Channel if self.rate(m) > 0]

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("E1", "E2", "U1", "U2", "U12", "gamma1", "gamma2", "gamma12")}


@dataclass(frozen=True)
class SectorState:
    """Amplitudes of a pure state with ``n_total`` atoms, indexed by ``n1``."""

    n_total: int
    amps: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=complex)
        if self.n_total < 0:
            raise ValueError("n_total must be non-negative")
        if amps.shape != (self.n_total + 1,):
            raise ValueError(
                f"sector N={self.n_total} needs {self.n_total + 1} amplitudes, got {amps.shape}")
        object.__setattr__(self, "amps", amps)

    def norm2(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    def normalized(self) -> "SectorState":
        nrm = np.sqrt(self.norm2())
        if nrm == 0:
            raise ZeroDivisionError("cannot normalize the zero vector")
        return SectorState(self.n_total, self.amps / nrm)

    def is_normalized(self, tol: float = 1e-12) -> bool:
        return abs(self.norm2() - 1.0) <= tol

    def overlap(self, other: "SectorState") -> complex:
        """<self|other>."""
        if other.n_total != self.n_total:
            raise ValueError("states live in different sectors")
        return complex(np.vdot(self.amps, other.amps))

    def density(self) -> np.ndarray:
        return np.outer(self.amps, self.amps.conj())


def log_binomial(n: int, k) -> np.ndarray:
    k = np.asarray(k)
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def coherent_state(n_total: int, theta: float, phi: float) -> SectorState:
    """Spin coherent state ``|N; theta, phi>``.

    Amplitudes are ``sqrt(C(N, n1)) sin^n1(theta/2) cos^(N-n1)(theta/2)
    exp(-i phi n1)``, evaluated in log space so that ``N`` in the hundreds
    does not overflow and ``theta = pi`` lands on ``|N, 0>`` without
    evaluating ``tan(pi/2)``.
    """
    if n_total < 0:
        raise ValueError("n_total must be non-negative")
    if not 0.0 <= theta <= np.pi:
        raise ValueError(f"theta must lie in [0, pi], got {theta}")
    n = np.arange(n_total + 1)
    s, c = np.sin(theta / 2.0), np.cos(theta / 2.0)
    if theta == np.pi:
        s, c = 1.0, 0.0
    with np.errstate(divide="ignore"):
        log_mag = (0.5 * log_binomial(n_total, n)
                   + _xlogy(n, s) + _xlogy(n_total - n, c))
    amps = np.exp(log_mag) * np.exp(-1j * phi * n)
    return SectorState(n_total, amps)


def coherent_state_log_tan(n_total: int, log_tan_half: float, phi: float) -> SectorState:
    """Coherent state parameterised by ``log tan(theta/2)``.

    Products of many ``tan(theta_m/2)`` factors are sums in this variable,
    which keeps extreme tilts accurate.
    """
    n = np.arange(n_total + 1)
    # log sin(theta/2) and log cos(theta/2) from x = log tan(theta/2)
    x = float(log_tan_half)
    log_norm = np.logaddexp(0.0, 2.0 * x) / 2.0
    log_s, log_c = x - log_norm, -log_norm
    log_mag = 0.5 * log_binomial(n_total, n) + n * log_s + (n_total - n) * log_c
    return SectorState(n_total, np.exp(log_mag) * np.exp(-1j * phi * n))


def _xlogy(k, v):
    # k*log(v) with 0*log(0) = 0
    k = np.asarray(k, dtype=float)
    if v == 0:
        return np.where(k == 0, 0.0, -np.inf)
    return k * np.log(v)


def jump_coefficients(n_out: int, m: Channel) -> np.ndarray:
    """Matrix elements of the jump operator into sector ``n_out``.

    ``out[a] = coef[a] * in[a + shift]`` with ``shift = 2, 0, 1`` for
    channels 1, 2, 12, where ``in`` lives in sector ``n_out + 2``.
    """
    a = np.arange(n_out + 1, dtype=float)
    if m is Channel.ONE:
        return np.sqrt((a + 2) * (a + 1))
    if m is Channel.TWO:
        return np.sqrt((n_out + 2 - a) * (n_out + 1 - a))
    return np.sqrt((a + 1) * (n_out + 1 - a))


def jump_shift(m: Channel) -> int:
    return m.removed[0]


def apply_jump(state: SectorState, m: Channel) -> SectorState:
    """Apply ``a1^2``, ``a2^2`` or ``a1 a2``; the result is not renormalized."""
    m = Channel.parse(m)
    N = state.n_total
    if N < 2:
        raise ValueError(f"sector N={N} too small for a two-body loss")
    shift = jump_shift(m)
    coef = jump_coefficients(N - 2, m)
    return SectorState(N - 2, coef * state.amps[shift:shift + N - 1])


def h0_eigenvalues(n_total: int, p: ModelParams) -> np.ndarray:
    n1 = np.arange(n_total + 1, dtype=float)
    n2 = n_total - n1
    return (p.E1 * n1 + p.E2 * n2
            + 0.5 * p.U1 * n1 * (n1 - 1) + 0.5 * p.U2 * n2 * (n2 - 1)
            + p.U12 * n1 * n2)


def damping_eigenvalues(n_total: int, p: ModelParams) -> np.ndarray:
    n1 = np.arange(n_total + 1, dtype=float)
    n2 = n_total - n1
    return 0.5 * (p.gamma1 * n1 * (n1 - 1) + p.gamma2 * n2 * (n2 - 1)
                  + p.gamma12 * n1 * n2)


def heff_eigenvalues(n_total: int, p: ModelParams) -> np.ndarray:
    """Eigenvalues of ``H0 - i D`` on the sector."""
    return h0_eigenvalues(n_total, p) - 1j * damping_eigenvalues(n_total, p)


def _check_index(n1: int, n_total: int):
    if not 0 <= n1 <= n_total:
        raise ValueError(f"need 0 <= n1 <= N, got n1={n1}, N={n_total}")


def h0_eigenvalue(n1: int, n_total: int, p: ModelParams) -> float:
    _check_index(n1, n_total)
    n2 = n_total - n1
    return float(p.E1 * n1 + p.E2 * n2 + 0.5 * p.U1 * n1 * (n1 - 1)
                 + 0.5 * p.U2 * n2 * (n2 - 1) + p.U12 * n1 * n2)


def damping_eigenvalue(n1: int, n_total: int, p: ModelParams) -> float:
    _check_index(n1, n_total)
    n2 = n_total - n1
    return float(0.5 * (p.gamma1 * n1 * (n1 - 1) + p.gamma2 * n2 * (n2 - 1)
                        + p.gamma12 * n1 * n2))


def angular_momentum_matrices(n_total: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense ``(Jx, Jy, Jz)`` on the sector, with ``J+ = a1^dag a2``."""
    n1 = np.arange(n_total + 1, dtype=float)
    jz = np.diag(n1 - n_total / 2.0).astype(complex)
    # <n1+1| J+ |n1> = sqrt((n1 + 1)(N - n1))
    up = np.sqrt((n1[:-1] + 1) * (n_total - n1[:-1]))
    jplus = np.diag(up, -1).astype(complex)
    jminus = jplus.conj().T
    jx = 0.5 * (jplus + jminus)
    jy = -0.5j * (jplus - jminus)
    return jx, jy, jz


def angular_momentum_apply(state: SectorState, axis: str) -> SectorState:
    N = state.n_total
    n1 = np.arange(N + 1, dtype=float)
    psi = state.amps
    if axis == "z":
        return SectorState(N, (n1 - N / 2.0) * psi)
    up = np.sqrt((n1[:-1] + 1) * (N - n1[:-1]))
    jp = np.zeros_like(psi)
    jm = np.zeros_like(psi)
    jp[1:] = up * psi[:-1]
    jm[:-1] = up * psi[1:]
    if axis == "x":
        return SectorState(N, 0.5 * (jp + jm))
    if axis == "y":
        return SectorState(N, -0.5j * (jp - jm))
    raise ValueError(f"axis must be 'x', 'y' or 'z', got {axis!r}")
