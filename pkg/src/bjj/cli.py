"""Command-line entry point ``bjj``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .dynamics import IntegrationError
from .scenarios import COMMANDS, ConfigError, Table, load_config, run_command

log = logging.getLogger("bjj")

EPILOG = """\
config file: flat 'key = value' lines, '#' comments, comma-separated lists.
Rates are in 1/T and times in T (T = 2 pi/|chi|). Any key can be overridden
by an environment variable BJJ_<KEY>, e.g. BJJ_N0=40.

common keys:
  n0, chi, chi1 + chi2 | U1 + U2 + U12, E1, E2, gamma1, gamma2, gamma12,
  gamma2_tied (gamma2 follows gamma1), times, outputs, blocks, seed, rtol,
  atol, q, fisher_mode (shared_direction | per_sector), theta_points,
  phi_points, threads, format (csv | json)
  outputs: density_block, fisher_total, fisher_sector, husimi, weights, mean_n
fig2:        fig2_energies (chi1_zero: chi1 = 0, chi2 = -2 chi | chi2_zero: chi1 = 2 chi,
             chi2 = 0) for the right-hand panels
fig3:        gamma1_min, gamma1_max, gamma1_points, lines, husimi_gamma1,
             source (analytic | master)
trajectory:  n_traj, chunk_size, trajectory_log (path of a JSON-lines log)
sweep:       sweep.<key> = v1, v2, ...   (Cartesian product over all axes)

CSV columns:
  fig2        n1, n1_prime, abs_rho (master equation), abs_rho_analytic
  fig3        line, gamma1, F_sector, w_sector, nx, ny, nz
  fig3 husimi theta, phi, Q
  fig4        curve, t_over_T, F_tot, mean_N
  evolve      t_over_T, F_tot, nx, ny, nz, mean_N_shot, sub_shot_noise, mean_N;
              weights: t_over_T, N, w; blocks: n1, n1_prime, re, im, abs
  trajectory  N, count, w_ensemble, w_stderr, w_master, within_3se
  sweep       <sweep keys>, t_over_T, then the requested scalar outputs
Every table starts with '# key=value' header lines.

exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(table: Table, path: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k in sorted(table.meta):
            fh.write(f"# {k}={_fmt(table.meta[k])}\n")
        fh.write(",".join(table.columns) + "\n")
        for row in table.rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_json(tables: list[Table], path: str):
    doc = [{"name": t.name, "meta": {k: _jsonable(v) for k, v in sorted(t.meta.items())},
            "columns": t.columns, "rows": [_jsonable(r) for r in t.rows]} for t in tables]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bjj", description="Two-body losses in a Bose-Josephson junction: "
        "figure scenarios, master-equation runs, trajectory ensembles and sweeps.",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="config file (key = value lines)")
    ap.add_argument("--out", default=".", help="output directory (default: current)")
    ap.add_argument("--seed", type=lambda s: int(s, 0), help="unsigned 64-bit seed")
    ap.add_argument("--threads", type=int, help="worker processes")
    ap.add_argument("--format", choices=("csv", "json"), help="output format")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {"seed": args.seed, "threads": args.threads,
                                         "format": args.format})
        tables = run_command(args.command, cfg)
    except ConfigError as exc:
        print(f"bjj: config error: {exc}", file=sys.stderr)
        return 1
    except (IntegrationError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"bjj: numerical failure: {exc}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    if cfg.format == "json":
        path = os.path.join(args.out, f"{args.command}.json")
        write_json(tables, path)
        log.info("wrote %s", path)
    else:
        for t in tables:
            path = os.path.join(args.out, f"{t.name}.csv")
            write_csv(t, path)
            log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
