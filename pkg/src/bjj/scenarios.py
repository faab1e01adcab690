"""Scenario configuration and the computations behind the command-line tools.

Config files are flat ``key = value`` text.  Blank lines and lines starting
with ``#`` are ignored, lists are comma separated, and every key can be
overridden by an environment variable ``BJJ_<KEY>`` (upper case).  Rates are
given in units of ``1/T`` and times in units of ``T = 2 pi / |chi|``.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import __version__
from .conditional import single_loss_conditional
from .dynamics import (BlockDensity, IntegratorConfig, evolve_master_series,
                       mean_atom_number)
from .fock import ModelParams, coherent_state
from .metrics import husimi, qfi_optimal, qfi_total, shot_noise_report
from .trajectories import ensemble_average, write_trajectory_log

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "Table",
    "load_config",
    "parse_config_text",
    "run_command",
]

ENV_PREFIX = "BJJ_"
OUTPUT_KINDS = ("density_block", "fisher_total", "fisher_sector", "husimi", "weights", "mean_n")
COMMANDS = ("fig2", "fig3", "fig4", "evolve", "trajectory", "sweep")

# energy presets in units of chi: (chi1, chi2)
SYMMETRIC = (1.0, -1.0)
PROTECTED = (0.0, -2.0)
MIRRORED = (2.0, 0.0)


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class Table:
    """One output table: named columns plus ``#`` header metadata."""

    name: str
    columns: list[str]
    rows: list[tuple]
    meta: dict = field(default_factory=dict)


_FLOAT_KEYS = {"chi", "chi1", "chi2", "U1", "U2", "U12", "E1", "E2", "gamma1", "gamma2",
               "gamma12", "rtol", "atol", "gamma1_min", "gamma1_max"}
_INT_KEYS = {"n0", "q", "theta_points", "phi_points", "n_traj", "gamma1_points",
             "chunk_size", "threads"}
_LIST_FLOAT_KEYS = {"times", "husimi_gamma1"}
_LIST_INT_KEYS = {"blocks"}
_LIST_STR_KEYS = {"outputs", "lines"}
_STR_KEYS = {"fisher_mode", "fig2_energies", "format", "source", "gamma2_tied",
             "trajectory_log"}
_KNOWN = (_FLOAT_KEYS | _INT_KEYS | _LIST_FLOAT_KEYS | _LIST_INT_KEYS | _LIST_STR_KEYS
          | _STR_KEYS | {"seed"})
_KEY_LOOKUP = {k.lower(): k for k in _KNOWN}


@dataclass(frozen=True)
class ScenarioConfig:
    """Resolved scenario settings (rates in ``1/T``, times in ``T``)."""

    n0: int = 100
    chi: float = 1.0
    chi1: float | None = None
    chi2: float | None = None
    U1: float | None = None
    U2: float | None = None
    U12: float | None = None
    E1: float = 0.0
    E2: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    gamma12: float = 0.0
    gamma2_tied: bool = False
    times: tuple = (0.25,)
    outputs: tuple = ("fisher_total", "mean_n", "weights")
    blocks: tuple = ()
    seed: int = 0
    rtol: float = 1e-9
    atol: float = 1e-14
    q: int = 2
    fisher_mode: str = "shared_direction"
    theta_points: int = 181
    phi_points: int = 361
    n_traj: int = 10000
    chunk_size: int = 256
    gamma1_min: float = 1e-4
    gamma1_max: float = 10.0
    gamma1_points: int = 25
    husimi_gamma1: tuple = ()
    lines: tuple = ()
    fig2_energies: str = "chi1_zero"
    source: str = "analytic"
    format: str = "csv"
    trajectory_log: str = ""
    threads: int = 1
    sweep: tuple = ()  # ((key, (values...)), ...)

    def __post_init__(self):
        if self.n0 < 2:
            raise ConfigError("n0 must be at least 2")
        if self.chi == 0:
            raise ConfigError("chi must be nonzero (it sets the time unit)")
        has_chis = self.chi1 is not None or self.chi2 is not None
        has_us = any(v is not None for v in (self.U1, self.U2, self.U12))
        if has_chis and has_us:
            raise ConfigError("give either chi1/chi2 or U1/U2/U12, not both")
        if has_chis:
            if self.chi1 is None or self.chi2 is None:
                raise ConfigError("chi1 and chi2 must be given together")
            if abs((self.chi1 - self.chi2) / 2 - self.chi) > 1e-12:
                raise ConfigError(
                    f"chi = (chi1 - chi2)/2 violated: ({self.chi1} - {self.chi2})/2 != {self.chi}")
        if has_us:
            u1, u2, u12 = (v or 0.0 for v in (self.U1, self.U2, self.U12))
            if abs((u1 + u2) / 2 - u12 - self.chi) > 1e-12:
                raise ConfigError("chi = (U1 + U2)/2 - U12 violated")
        for name in ("gamma1", "gamma2", "gamma12", "gamma1_min", "gamma1_max"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if any(t < 0 for t in self.times):
            raise ConfigError("times must be non-negative")
        bad = [o for o in self.outputs if o not in OUTPUT_KINDS]
        if bad:
            raise ConfigError(f"unknown outputs {bad}; choose from {list(OUTPUT_KINDS)}")
        if len(set(self.outputs)) != len(self.outputs):
            raise ConfigError("duplicate output flags")
        if self.fisher_mode not in ("shared_direction", "per_sector"):
            raise ConfigError("fisher_mode must be shared_direction or per_sector")
        if self.fig2_energies not in ("chi1_zero", "chi2_zero"):
            raise ConfigError("fig2_energies must be chi1_zero or chi2_zero")
        if self.source not in ("analytic", "master"):
            raise ConfigError("source must be analytic or master")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.q < 2:
            raise ConfigError("q must be at least 2")
        if self.theta_points < 2 or self.phi_points < 2:
            raise ConfigError("husimi grids need at least two points")
        if self.n_traj < 1 or self.chunk_size < 1 or self.threads < 1:
            raise ConfigError("n_traj, chunk_size and threads must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    # unit conversions ---------------------------------------------------
    @property
    def period(self) -> float:
        return 2.0 * math.pi / abs(self.chi)

    def raw_time(self, t_in_T: float) -> float:
        return t_in_T * self.period

    def raw_rate(self, g_in_invT: float) -> float:
        return g_in_invT / self.period

    def energies_set(self) -> bool:
        return self.chi1 is not None or self.U1 is not None or self.U2 is not None

    def model(self) -> ModelParams:
        """Raw-unit model parameters."""
        g2 = self.gamma1 if self.gamma2_tied else self.gamma2
        rates = dict(gamma1=self.raw_rate(self.gamma1), gamma2=self.raw_rate(g2),
                     gamma12=self.raw_rate(self.gamma12))
        if self.chi1 is not None:
            return ModelParams.from_chis(self.chi1, self.chi2, E1=self.E1, E2=self.E2, **rates)
        if self.U1 is not None or self.U2 is not None or self.U12 is not None:
            return ModelParams(E1=self.E1, E2=self.E2, U1=self.U1 or 0.0, U2=self.U2 or 0.0,
                               U12=self.U12 or 0.0, **rates)
        raise ConfigError("no energies given: set chi1/chi2 or U1/U2/U12")

    def with_energies(self, chi1: float, chi2: float) -> "ScenarioConfig":
        return replace(self, chi1=chi1 * self.chi, chi2=chi2 * self.chi,
                       U1=None, U2=None, U12=None)

    def integrator(self, min_sector: int | None = None) -> IntegratorConfig:
        return IntegratorConfig(rtol=self.rtol, atol=self.atol, min_sector=min_sector)

    def header(self) -> dict:
        meta = {"version": __version__, "seed": self.seed,
                "units": "rates in 1/T, times in T, T = 2 pi/|chi|, hbar = 1"}
        for k in ("n0", "chi", "chi1", "chi2", "U1", "U2", "U12", "E1", "E2",
                  "gamma1", "gamma2", "gamma12", "gamma2_tied", "rtol", "atol", "q",
                  "fisher_mode"):
            v = getattr(self, k)
            if v is not None:
                meta[k] = v
        if self.gamma2_tied:
            meta["gamma2"] = self.gamma1  # effective value
        return meta


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _convert(key: str, raw: str):
    try:
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _INT_KEYS:
            return int(raw)
        if key == "seed":
            v = int(raw, 0)
            if not 0 <= v < 2 ** 64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            return v
        items = [x.strip() for x in raw.split(",") if x.strip()]
        if key in _LIST_FLOAT_KEYS:
            return tuple(float(x) for x in items)
        if key in _LIST_INT_KEYS:
            return tuple(int(x) for x in items)
        if key in _LIST_STR_KEYS:
            return tuple(items)
        if key == "gamma2_tied":
            return _parse_bool(raw)
        return raw.strip()
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def _canonical(key: str) -> str:
    k = _KEY_LOOKUP.get(key.strip().lower())
    if k is None:
        raise ConfigError(f"unknown config key {key!r}")
    return k


def parse_config_text(text: str, env: Mapping[str, str] | None = None) -> dict:
    """Parse ``key = value`` lines into typed settings.

    ``sweep.<key> = v1, v2, ...`` lines declare sweep axes.  ``env`` entries
    named ``BJJ_<KEY>`` override file values.
    """
    values: dict = {}
    sweep: list = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key.lower().startswith("sweep."):
            name = _canonical(key[6:])
            if name not in _FLOAT_KEYS | _INT_KEYS:
                raise ConfigError(f"line {lineno}: cannot sweep {name}")
            vals = tuple(_convert(name, x) for x in raw.split(",") if x.strip())
            if not vals:
                raise ConfigError(f"line {lineno}: empty sweep axis")
            sweep.append((name, vals))
            continue
        name = _canonical(key)
        if name in values:
            raise ConfigError(f"line {lineno}: duplicate key {name}")
        values[name] = _convert(name, raw)
    for env_key, raw in (env or {}).items():
        if env_key.startswith(ENV_PREFIX):
            name = _canonical(env_key[len(ENV_PREFIX):])
            values[name] = _convert(name, raw)
    if sweep:
        values["sweep"] = tuple(sweep)
    return values


def load_config(path: str | None, overrides: Mapping | None = None,
                env: Mapping[str, str] | None = None) -> ScenarioConfig:
    """Read a config file (may be ``None``), apply env and CLI overrides, validate."""
    text = ""
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = parse_config_text(text, os.environ if env is None else env)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return ScenarioConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# work pool

def _pool_map(fn: Callable, items: Sequence, threads: int) -> list:
    """Ordered map; results follow input order whatever the completion order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def _initial(cfg: ScenarioConfig) -> BlockDensity:
    return BlockDensity.from_state(coherent_state(cfg.n0, math.pi / 2, 0.0))


# ---------------------------------------------------------------------------
# fig2

def fig2_panels(cfg: ScenarioConfig) -> list[tuple[str, ScenarioConfig]]:
    right = PROTECTED if cfg.fig2_energies == "chi1_zero" else MIRRORED
    sym_rates = dict(gamma1=1 / 100, gamma2=1 / 100, gamma12=0.0)
    asym_rates = dict(gamma1=8 / 300, gamma2=0.0, gamma12=0.0)
    out = []
    for row, rates in (("upper", sym_rates), ("lower", asym_rates)):
        for col, en in (("left", SYMMETRIC), ("right", right)):
            c = replace(cfg.with_energies(*en), gamma2_tied=False, **rates)
            out.append((f"{row}_{col}", c))
    return out


def _fig2_task(args):
    name, c = args
    n0 = c.n0
    p = c.model()
    t2 = c.raw_time(0.25)
    (rho,) = evolve_master_series(_initial(c), [t2], p, c.integrator(min_sector=n0 - 2))
    exact = rho.block(n0 - 2).normalized()
    analytic, w = single_loss_conditional(t2, p, n0)
    ana = analytic.normalized()
    rows = [(i, j, abs(exact[i, j]), abs(ana[i, j]))
            for i in range(n0 - 1) for j in range(n0 - 1)]
    meta = c.header()
    meta.update(panel=name, t_over_T=0.25, sector=n0 - 2,
                weight=rho.block(n0 - 2).trace_weight, weight_analytic=w)
    return Table(f"fig2_{name}", ["n1", "n1_prime", "abs_rho", "abs_rho_analytic"], rows, meta)


def cmd_fig2(cfg: ScenarioConfig) -> list[Table]:
    return _pool_map(_fig2_task, fig2_panels(cfg), cfg.threads)


# ---------------------------------------------------------------------------
# fig3

FIG3_LINES = {
    # name: (tie gamma2 to gamma1, energies)
    "black": (True, SYMMETRIC),
    "brown": (True, PROTECTED),
    "red": (False, SYMMETRIC),
    "blue": (False, PROTECTED),
}


def sector_fisher(c: ScenarioConfig, t_in_T: float, source: str):
    """Per-sector optimal Fisher information of the ``N0 - 2`` block."""
    p = c.model()
    t = c.raw_time(t_in_T)
    if source == "analytic":
        block, w = single_loss_conditional(t, p, c.n0)
    else:
        (rho,) = evolve_master_series(_initial(c), [t], p, c.integrator(min_sector=c.n0 - 2))
        block = rho.block(c.n0 - 2)
        w = block.trace_weight
    return qfi_optimal(block), w, block


def _fig3_task(args):
    c, line = args
    res, w, _ = sector_fisher(c, 0.25, c.source)
    return (line, c.gamma1, res.value, w, *res.direction)


def _fig3_configs(cfg: ScenarioConfig, gammas) -> list:
    lines = cfg.lines or tuple(FIG3_LINES)
    tasks = []
    for line in lines:
        if line not in FIG3_LINES:
            raise ConfigError(f"unknown fig3 line {line!r}; choose from {list(FIG3_LINES)}")
        tied, en = FIG3_LINES[line]
        for g in gammas:
            c = replace(cfg.with_energies(*en), gamma1=g, gamma2=0.0, gamma12=0.0,
                        gamma2_tied=tied)
            tasks.append((c, line))
    return tasks


def cmd_fig3(cfg: ScenarioConfig) -> list[Table]:
    if not 0 < cfg.gamma1_min < cfg.gamma1_max:
        raise ConfigError("need 0 < gamma1_min < gamma1_max")
    gammas = np.geomspace(cfg.gamma1_min, cfg.gamma1_max, cfg.gamma1_points)
    rows = _pool_map(_fig3_task, _fig3_configs(cfg, gammas), cfg.threads)
    meta = cfg.header()
    meta.update(t_over_T=0.25, sector=cfg.n0 - 2, mode="per_sector", source=cfg.source)
    tables = [Table("fig3_fisher", ["line", "gamma1", "F_sector", "w_sector", "nx", "ny", "nz"],
                    rows, meta)]
    for c, line in _fig3_configs(cfg, cfg.husimi_gamma1):
        _, _, block = sector_fisher(c, 0.25, c.source)
        tables.append(_husimi_table(f"fig3_husimi_{line}_g{c.gamma1:g}", block, c,
                                    dict(line=line, gamma1=c.gamma1)))
    return tables


def _husimi_table(name, block, c: ScenarioConfig, extra: dict) -> Table:
    g = husimi(block, c.theta_points, c.phi_points)
    rows = [(float(th), float(ph), float(g.values[i, j]))
            for i, th in enumerate(g.theta_axis) for j, ph in enumerate(g.phi_axis)]
    meta = c.header()
    meta.update(extra, sector=block.n_total)
    return Table(name, ["theta", "phi", "Q"], rows, meta)


# ---------------------------------------------------------------------------
# fig4

FIG4_CURVES = (
    ("blue", dict(gamma1=8 / 300, gamma2=0.0), PROTECTED),
    ("red", dict(gamma1=8 / 300, gamma2=0.0), SYMMETRIC),
    ("brown", dict(gamma1=1 / 100, gamma2=1 / 100), PROTECTED),
    ("black", dict(gamma1=1 / 100, gamma2=1 / 100), SYMMETRIC),
)

FIG4_TIMES = tuple(np.round(np.linspace(0.0, 0.25, 26), 12))


def _series_rows(c: ScenarioConfig, times: Sequence[float]):
    p = c.model()
    series = evolve_master_series(_initial(c), [c.raw_time(t) for t in times], p, c.integrator())
    rows = []
    for t, rho in zip(times, series):
        F = qfi_total(rho, c.fisher_mode)
        rows.append((t, F.value, mean_atom_number(rho)))
    return rows


def _fig4_task(args):
    name, c, times = args
    return name, _series_rows(c, times)


def cmd_fig4(cfg: ScenarioConfig, times: Sequence[float] | None = None) -> list[Table]:
    times = tuple(times or (cfg.times if len(cfg.times) > 1 else FIG4_TIMES))
    tasks = [(name, replace(cfg.with_energies(*en), gamma12=0.0, gamma2_tied=False, **rates), times)
             for name, rates, en in FIG4_CURVES]
    results = _pool_map(_fig4_task, tasks, cfg.threads)
    meta = cfg.header()
    meta.update(curves="blue, red, brown, black (top to bottom at t2)")
    rows = [(name, *r) for name, rs in results for r in rs]
    return [Table("fig4", ["curve", "t_over_T", "F_tot", "mean_N"], rows, meta)]


# ---------------------------------------------------------------------------
# evolve

def _evolve_tables(cfg: ScenarioConfig, name_prefix: str = "evolve") -> list[Table]:
    p = cfg.model()
    times = sorted(cfg.times)
    series = evolve_master_series(_initial(cfg), [cfg.raw_time(t) for t in times], p,
                                  cfg.integrator())
    meta = cfg.header()
    tables = []
    scalar_cols, scalar_rows = ["t_over_T"], []
    if "fisher_total" in cfg.outputs:
        scalar_cols += ["F_tot", "nx", "ny", "nz", "mean_N_shot", "sub_shot_noise"]
    if "mean_n" in cfg.outputs:
        scalar_cols += ["mean_N"]
    blocks = cfg.blocks or (cfg.n0, cfg.n0 - 2)
    for t, rho in zip(times, series):
        row = [t]
        if "fisher_total" in cfg.outputs:
            F = qfi_total(rho, cfg.fisher_mode)
            rep = shot_noise_report(rho, F)
            row += [F.value, *F.direction, rep["mean_N"], int(rep["sub_shot_noise"])]
        if "mean_n" in cfg.outputs:
            row.append(mean_atom_number(rho))
        scalar_rows.append(tuple(row))
    if len(scalar_cols) > 1:
        tables.append(Table(f"{name_prefix}_scalars", scalar_cols, scalar_rows, dict(meta)))
    if "weights" in cfg.outputs:
        rows = [(t, N, w) for t, rho in zip(times, series) for N, w in rho.weights().items()]
        tables.append(Table(f"{name_prefix}_weights", ["t_over_T", "N", "w"], rows, dict(meta)))
    if "fisher_sector" in cfg.outputs:
        rows = []
        for t, rho in zip(times, series):
            for N in rho.sectors:
                if N in blocks and N > 0 and rho.block(N).trace_weight > 0:
                    r = qfi_optimal(rho.block(N))
                    rows.append((t, N, r.value, rho.block(N).trace_weight, *r.direction))
        tables.append(Table(f"{name_prefix}_fisher_sector",
                            ["t_over_T", "N", "F_N", "w_N", "nx", "ny", "nz"], rows, dict(meta)))
    for t, rho in zip(times, series):
        for N in blocks:
            b = rho.block(N)
            if b is None or b.trace_weight <= 0:
                continue
            if "density_block" in cfg.outputs:
                m = b.normalized()
                rows = [(i, j, m[i, j].real, m[i, j].imag, abs(m[i, j]))
                        for i in range(N + 1) for j in range(N + 1)]
                extra = dict(meta, t_over_T=t, sector=N, weight=b.trace_weight)
                tables.append(Table(f"{name_prefix}_rho_N{N}_t{t:g}",
                                    ["n1", "n1_prime", "re", "im", "abs"], rows, extra))
            if "husimi" in cfg.outputs and N > 0:
                tables.append(_husimi_table(f"{name_prefix}_husimi_N{N}_t{t:g}", b, cfg,
                                            dict(t_over_T=t)))
    return tables


def cmd_evolve(cfg: ScenarioConfig) -> list[Table]:
    return _evolve_tables(cfg)


# ---------------------------------------------------------------------------
# trajectory

def cmd_trajectory(cfg: ScenarioConfig) -> list[Table]:
    """Trajectory ensemble compared against the master equation at the last time."""
    p = cfg.model()
    t_T = max(cfg.times)
    t = cfg.raw_time(t_T)
    est = ensemble_average(cfg.n0, math.pi / 2, 0.0, t, p, cfg.n_traj, cfg.seed,
                           workers=cfg.threads, chunk_size=cfg.chunk_size,
                           keep_records=bool(cfg.trajectory_log))
    if cfg.trajectory_log:
        with open(cfg.trajectory_log, "w", encoding="utf-8") as fh:
            write_trajectory_log(est.records, fh)
    (rho,) = evolve_master_series(_initial(cfg), [t], p, cfg.integrator())
    report = compare_ensemble(est, rho)
    meta = cfg.header()
    meta.update(t_over_T=t_T, n_traj=cfg.n_traj,
                element_fraction_within_3se=report["fraction"],
                elements_compared=report["n_elements"],
                all_weights_within_3se=report["weights_ok"])
    rows = [(N, est.counts[N], est.rho.block(N).trace_weight, est.weight_stderr[N],
             rho.block(N).trace_weight, int(abs(est.rho.block(N).trace_weight
                                                - rho.block(N).trace_weight)
                                            <= 3 * est.weight_stderr[N]))
            for N in rho.sectors]
    return [Table("trajectory_report",
                  ["N", "count", "w_ensemble", "w_stderr", "w_master", "within_3se"], rows, meta)]


def compare_ensemble(est, rho: BlockDensity) -> dict:
    """Fraction of matrix elements (real and imaginary parts) within three standard errors.

    Only sectors visited by at least one trajectory contribute elements; every
    sector contributes its weight.
    """
    good = total = 0
    weights_ok = True
    for N in rho.sectors:
        exact_b = rho.block(N)
        exact = exact_b.mat * math.exp(exact_b.log_scale)
        eb = est.rho.block(N)
        w_est = eb.trace_weight if eb is not None else 0.0
        if abs(w_est - exact_b.trace_weight) > 3 * est.weight_stderr[N]:
            weights_ok = False
        if est.counts.get(N, 0) == 0:
            continue
        mean = eb.mat * math.exp(eb.log_scale)
        se = est.stderr[N]
        for part, err in ((np.real, se.real), (np.imag, se.imag)):
            ok = np.abs(part(mean) - part(exact)) <= 3 * err
            good += int(ok.sum())
            total += ok.size
    return {"fraction": good / total if total else 1.0, "n_elements": total,
            "weights_ok": weights_ok}


# ---------------------------------------------------------------------------
# sweep

def _sweep_task(args):
    c, point = args
    p = c.model()
    times = sorted(c.times)
    need_all = "fisher_total" in c.outputs or "mean_n" in c.outputs or "weights" in c.outputs
    min_sector = None if need_all else c.n0 - 2
    series = evolve_master_series(_initial(c), [c.raw_time(t) for t in times], p,
                                  c.integrator(min_sector=min_sector))
    rows = []
    for t, rho in zip(times, series):
        row = [*point, t]
        if "fisher_total" in c.outputs:
            row.append(qfi_total(rho, c.fisher_mode).value)
        if "fisher_sector" in c.outputs:
            b = rho.block(c.n0 - 2)
            row.append(qfi_optimal(b).value if b.trace_weight > 0 else 0.0)
        if "mean_n" in c.outputs:
            row.append(mean_atom_number(rho))
        if "weights" in c.outputs:
            row += [rho.block(c.n0).trace_weight, rho.block(c.n0 - 2).trace_weight]
        rows.append(tuple(row))
    return rows


def cmd_sweep(cfg: ScenarioConfig) -> list[Table]:
    """Cartesian product over the ``sweep.<key>`` axes; one row per point and time."""
    if not cfg.sweep:
        raise ConfigError("sweep needs at least one sweep.<key> = v1, v2, ... line")
    if "density_block" in cfg.outputs or "husimi" in cfg.outputs:
        raise ConfigError("sweep supports scalar outputs only "
                          "(fisher_total, fisher_sector, mean_n, weights)")
    keys = [k for k, _ in cfg.sweep]
    if len(set(keys)) != len(keys):
        raise ConfigError("duplicate sweep axis")
    tasks = []
    for point in itertools.product(*(v for _, v in cfg.sweep)):
        try:
            c = replace(cfg, sweep=(), **dict(zip(keys, point)))
        except ConfigError as exc:
            raise ConfigError(f"sweep point {dict(zip(keys, point))}: {exc}") from exc
        c.model()
        tasks.append((c, point))
    rows = [r for rs in _pool_map(_sweep_task, tasks, cfg.threads) for r in rs]
    cols = [*keys, "t_over_T"]
    if "fisher_total" in cfg.outputs:
        cols.append("F_tot")
    if "fisher_sector" in cfg.outputs:
        cols.append("F_sector")
    if "mean_n" in cfg.outputs:
        cols.append("mean_N")
    if "weights" in cfg.outputs:
        cols += ["w_N0", "w_N0m2"]
    meta = cfg.header()
    meta["sweep"] = "; ".join(f"{k}: {', '.join(map(str, v))}" for k, v in cfg.sweep)
    return [Table("sweep", cols, rows, meta)]


def run_command(command: str, cfg: ScenarioConfig) -> list[Table]:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    return {"fig2": cmd_fig2, "fig3": cmd_fig3, "fig4": cmd_fig4, "evolve": cmd_evolve,
            "trajectory": cmd_trajectory, "sweep": cmd_sweep}[command](cfg)
