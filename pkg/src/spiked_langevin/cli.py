"""Command-line entry point: ``spiked-langevin {simulate,solve,phase,compare}``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 simulation blow-up.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .asymptotics import phase_grid
from .chsck import (ChsckSolution, Moments, evaluate_K_offdiag, solve_fast, solve_picard)
from .config import RunConfig, config_from_dict, parse_beta
from .errors import (CapacityError, ConfigError, ConsistencyError, ConvergenceError, DomainError,
                     InvalidParameter, OverflowGuardError, PositivityError, SimulationBlowUp)
from .output import write_json, write_rows, write_table
from .sde import TimeGrid, aggregate, run_replicas
from .spectral import Semicircle

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_BLOWUP = 0, 2, 3, 4

CHSCK_COLUMNS = ["t", "g", "F", "h", "R", "K", "corr_ratio"]
OFFDIAG_COLUMNS = ["t", "s", "K"]
ENSEMBLE_COLUMNS = ["t", "mean_R", "stderr_R", "mean_K", "stderr_K"]
PHASE_COLUMNS = ["lambda", "beta", "sigma_star", "rho", "lambda_tilde", "s_beta", "regime", "limit_corr"]
COMPARE_COLUMNS = ["t", "R_sim", "R_limit", "K_sim", "K_limit", "abs_err_R", "abs_err_K", "stderr_R"]


def _out_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.output.directory)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _transformed_from_RK(R, K, grid: TimeGrid):
    """``g, F, h`` for a solution known only through ``R`` and ``K`` (quadratic confinement)."""
    Lam = np.concatenate(([0.0], np.cumsum(0.5 * grid.dt * (K[1:] + K[:-1]))))
    E = np.exp(Lam)
    return E * R, E * E, E * E * K


def _solve_limits(cfg: RunConfig, params) -> tuple[ChsckSolution, dict]:
    rule = params.measure.rule(cfg.solver.rule_order)
    moments = Moments.from_params(params.lam, params.rho)
    grid = TimeGrid(cfg.grid.T, cfg.grid.dt)
    route = cfg.solver.route
    info = {"route": route}
    fast = picard = None
    if route in ("fast", "both"):
        if params.confinement != "quadratic":
            raise ConfigError("solver.route: the fast route needs the quadratic confinement")
        fast = solve_fast(moments, rule, grid, params.beta)
        info["fast"] = fast.diagnostics
    if route in ("picard", "both"):
        picard = solve_picard(moments, rule, grid, params.beta, fprime=params.confinement,
                              tol=cfg.solver.tol, max_iter=cfg.solver.max_iter)
        info["picard"] = picard.diagnostics
    if fast is not None and picard is not None:
        info["sup_route_discrepancy"] = max(float(np.abs(fast.R - picard.R).max()),
                                            float(np.abs(fast.K_diag - picard.K_diag).max()))
    return (fast if fast is not None else picard), info


def cmd_solve(cfg: RunConfig) -> dict:
    t0 = time.perf_counter()
    params = cfg.params.model_params()
    out = _out_dir(cfg)
    sol, info = _solve_limits(cfg, params)
    grid = sol.grid
    if sol.g is not None:
        g, F, h = sol.g, sol.F, sol.h
    else:
        g, F, h = _transformed_from_RK(sol.R, sol.K_diag, grid)
    files = write_table(out, "chsck_solution", CHSCK_COLUMNS,
                        [grid.times, g, F, h, sol.R, sol.K_diag, sol.corr_ratio], cfg.output.format)
    if cfg.solver.offdiag_every:
        ts, Kmat = evaluate_K_offdiag(sol.R, sol.K_diag, sol.moments, sol.rule, grid, params.beta,
                                      cfg.solver.offdiag_every, params.confinement)
        ti, si = np.meshgrid(ts, ts, indexing="ij")
        files += write_table(out, "K_offdiag", OFFDIAG_COLUMNS, [ti.ravel(), si.ravel(), Kmat.ravel()],
                             cfg.output.format)
        info["offdiag_every"] = cfg.solver.offdiag_every
        info["offdiag_diagonal_mismatch"] = float(np.abs(np.diag(Kmat) - sol.K_diag[::cfg.solver.offdiag_every]).max())
    info.update({"rule_order": sol.rule.order, "shift": sol.shift,
                 "moments": {"E_u2": sol.moments.E_u2, "E_Y0u": sol.moments.E_Y0u, "E_Y02": sol.moments.E_Y02},
                 "final_corr_ratio": float(sol.corr_ratio[-1])})
    run = {"command": "solve", "version": __version__, "config": cfg.to_dict(), "solver": info,
           "runtime_s": time.perf_counter() - t0}
    files.append(write_json(out / "run.json", run))
    return {"files": [str(f) for f in files], "solver": info, "solution": sol}


def _simulate(cfg: RunConfig, params):
    grid = TimeGrid(cfg.grid.T, cfg.grid.dt)
    trajs = run_replicas(params, grid, cfg.ensemble.n_replicas, cfg.ensemble.base_seed,
                         cfg.ensemble.coordinate_mode)
    return aggregate(trajs), trajs


def cmd_simulate(cfg: RunConfig) -> dict:
    t0 = time.perf_counter()
    params = cfg.params.model_params()
    out = _out_dir(cfg)
    ens, trajs = _simulate(cfg, params)
    files = write_table(out, "ensemble", ENSEMBLE_COLUMNS,
                        [ens.grid.times, ens.mean_R, ens.stderr_R, ens.mean_K, ens.stderr_K], cfg.output.format)
    run = {"command": "simulate", "version": __version__, "config": cfg.to_dict(),
           "seeds": list(ens.seeds), "n_replicas": ens.n_replicas,
           "u_sq_norm": [tr.u_sq_norm for tr in trajs], "runtime_s": time.perf_counter() - t0}
    files.append(write_json(out / "run.json", run))
    return {"files": [str(f) for f in files], "ensemble": ens}


def cmd_phase(cfg: RunConfig) -> dict:
    measure = cfg.params.measure.build()
    if not isinstance(measure, Semicircle):
        raise ConfigError("params.measure: the phase map is defined for the semicircle law only")
    out = _out_dir(cfg)
    points = phase_grid(cfg.phase.lambda_axis(), cfg.phase.beta_axis(), measure.sigma_star, cfg.params.rho)
    rows = [p.as_row() for p in points]
    files = []
    if cfg.output.format in ("csv", "both"):
        files.append(write_rows(out / "phase.csv", PHASE_COLUMNS, rows))
    if cfg.output.format in ("json", "both"):
        files.append(write_json(out / "phase.json", rows))
    counts = {}
    for p in points:
        counts[p.regime.value] = counts.get(p.regime.value, 0) + 1
    files.append(write_json(out / "run.json", {"command": "phase", "version": __version__,
                                               "config": cfg.to_dict(), "regime_counts": counts}))
    return {"files": [str(f) for f in files], "points": points}


def cmd_compare(cfg: RunConfig) -> dict:
    t0 = time.perf_counter()
    params = cfg.params.model_params()
    out = _out_dir(cfg)
    sol, info = _solve_limits(cfg, params)
    ens, _ = _simulate(cfg, params)
    t = ens.grid.times
    err_R = np.abs(ens.mean_R - sol.R)
    err_K = np.abs(ens.mean_K - sol.K_diag)
    files = write_table(out, "compare", COMPARE_COLUMNS,
                        [t, ens.mean_R, sol.R, ens.mean_K, sol.K_diag, err_R, err_K, ens.stderr_R],
                        cfg.output.format)
    # pooled standard error: root mean square of the per-time standard errors
    pooled_R = float(np.sqrt(np.mean(ens.stderr_R ** 2)))
    pooled_K = float(np.sqrt(np.mean(ens.stderr_K ** 2)))
    summary = {
        "N": params.N, "n_replicas": ens.n_replicas, "seeds": list(ens.seeds),
        "sup_abs_err_R": float(err_R.max()), "sup_abs_err_K": float(err_K.max()),
        "argmax_t_R": float(t[err_R.argmax()]), "argmax_t_K": float(t[err_K.argmax()]),
        "pooled_stderr_R": pooled_R, "pooled_stderr_K": pooled_K,
        "within_3_pooled_stderr_R": bool(err_R.max() < 3 * pooled_R),
        "within_3_pooled_stderr_K": bool(err_K.max() < 3 * pooled_K),
        "R_limit_end": float(sol.R[-1]), "K_limit_end": float(sol.K_diag[-1]),
        "R_sim_end": float(ens.mean_R[-1]), "K_sim_end": float(ens.mean_K[-1]),
    }
    files.append(write_json(out / "compare_summary.json", summary))
    files.append(write_json(out / "run.json", {"command": "compare", "version": __version__,
                                               "config": cfg.to_dict(), "solver": info, "summary": summary,
                                               "runtime_s": time.perf_counter() - t0}))
    return {"files": [str(f) for f in files], "summary": summary, "solution": sol, "ensemble": ens}


COMMANDS = {"simulate": cmd_simulate, "solve": cmd_solve, "phase": cmd_phase, "compare": cmd_compare}


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="JSON run configuration; flags override it")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--format", choices=("csv", "json", "both"), help="table output format")
    p.add_argument("--seed", type=int, metavar="U64", help="base seed; replica i uses seed + i")
    p.add_argument("--dt", type=float, help="time step")
    p.add_argument("--t-end", type=float, help="final time T")
    p.add_argument("--lambda", dest="lam", type=float, help="spike strength lambda")
    p.add_argument("--beta", type=str, help="inverse temperature; 'inf' for gradient flow")
    p.add_argument("--rho", type=float, help="initial overlap rho in [0, 1]")
    p.add_argument("--sigma-star", type=float, help="semicircle edge sigma_star")
    p.add_argument("--measure-csv", metavar="PATH", help="discrete spectral law as a sigma,weight CSV")
    p.add_argument("--n", type=int, help="dimension N")
    p.add_argument("--replicas", type=int, help="number of replicas")
    p.add_argument("--coordinate-mode", choices=("rotated", "direct"), help="simulation coordinates")
    p.add_argument("--rule-order", type=int, help="quadrature order for the semicircle law")
    p.add_argument("--route", choices=("fast", "picard", "both"), help="deterministic solver route")
    p.add_argument("--offdiag-every", type=int, help="also write K(t, s) on every k-th grid point")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spiked-langevin",
                                     description="Langevin dynamics for spiked rotationally invariant matrices.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_flags()
    helps = {"simulate": "finite-N Monte Carlo ensemble",
             "solve": "deterministic large-N limits",
             "phase": "regime map over (lambda, beta)",
             "compare": "ensemble versus deterministic limit"}
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _set(raw: dict, path: str, value):
    *parents, leaf = path.split(".")
    node = raw
    for key in parents:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{key}: expected an object")
        node = child
    node[leaf] = value


def config_from_args(args: argparse.Namespace) -> RunConfig:
    raw = {}
    if args.config:
        path = Path(args.config)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a JSON object")
    raw["command"] = args.command
    overrides = {
        "out": "output.directory", "format": "output.format", "seed": "ensemble.base_seed",
        "dt": "grid.dt", "t_end": "grid.T", "lam": "params.lambda", "rho": "params.rho",
        "n": "params.N", "replicas": "ensemble.n_replicas", "coordinate_mode": "ensemble.coordinate_mode",
        "rule_order": "solver.rule_order", "route": "solver.route", "offdiag_every": "solver.offdiag_every",
    }
    for attr, path in overrides.items():
        value = getattr(args, attr)
        if value is not None:
            _set(raw, path, value)
    if args.beta is not None:
        _set(raw, "params.beta", parse_beta(args.beta))
    if args.measure_csv is not None and args.sigma_star is not None:
        raise ConfigError("--measure-csv and --sigma-star are mutually exclusive")
    if args.measure_csv is not None:
        _set(raw, "params.measure", {"kind": "discrete", "path": args.measure_csv})
    if args.sigma_star is not None:
        measure = raw.setdefault("params", {}).get("measure", {})
        if isinstance(measure, dict) and measure.get("kind", "semicircle") != "semicircle":
            raise ConfigError("--sigma-star applies to the semicircle law only")
        _set(raw, "params.measure.sigma_star", args.sigma_star)
    return config_from_dict(raw)


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except InvalidParameter as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = COMMANDS[cfg.command](cfg)
    except SimulationBlowUp as exc:
        print(f"simulation blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except ConvergenceError as exc:
        print(f"solver error: {exc} (residual {exc.residual}, iterations {exc.iterations})", file=sys.stderr)
        return EXIT_SOLVER
    except (PositivityError, OverflowGuardError, ConsistencyError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (CapacityError, DomainError, InvalidParameter) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in result["files"]:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
