"""Command-line entry point: ``bubbleride {validate,simulate,solve,verify} SCENARIO``.

Exit codes: 0 success, 1 invalid scenario or failed check, 2 runtime error,
3 fixed point not converged, 64 usage error.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, ScenarioError, load_scenario, validate

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_NOT_CONVERGED, EXIT_USAGE = 0, 1, 2, 3, 64
OUT_DIR_ENV = "BUBBLERIDE_OUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bubbleride", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, solver: bool):
        sp.add_argument("scenario", type=Path)
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--paths", type=int, help="Monte Carlo path count")
        sp.add_argument("--steps", type=int, help="time steps")
        sp.add_argument("--level", type=int, help="dyadic level of the common-noise grid")
        sp.add_argument("--out-dir", type=Path, help=f"output directory (default ${OUT_DIR_ENV})")
        sp.add_argument("--dump-paths", type=int, nargs="?", const=-1, default=None, metavar="N",
                        help="write price paths of the first N scenarios (all if N omitted)")
        sp.add_argument("--workers", type=int, default=1, help="threads for noise generation")
        if solver:
            sp.add_argument("--tol", type=float, help="fixed-point tolerance")
            sp.add_argument("--max-iter", type=int, help="fixed-point iteration cap")
            sp.add_argument("--per-threshold", type=int, metavar="ATOMS",
                            help="also solve per threshold atom for cross-validation")

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario", type=Path)
    s = sub.add_parser("simulate", help="simulate the N-player game")
    common(s, solver=False)
    s.add_argument("--control-field", type=Path, help="control_field.npz written by solve")
    s.add_argument("--constant-action", type=float, help="every player uses this action after entry")
    common(sub.add_parser("solve", help="solve the mean field equilibrium"), solver=True)
    common(sub.add_parser("verify", help="solve, then run exploitability and oracle checks"),
           solver=True)
    return p


def apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    changes = {}
    for flag, name in (("seed", "master_seed"), ("paths", "n_paths"), ("steps", "n_steps"),
                       ("level", "dyadic_level"), ("tol", "fp_tolerance"),
                       ("max_iter", "fp_max_iter")):
        val = getattr(args, flag, None)
        if val is not None:
            changes[name] = val
    if "n_paths" in changes and changes["n_paths"] % cfg.idio_per_common:
        changes["idio_per_common"] = 1
    return cfg.replace(**changes) if changes else cfg


def _out_dir(args) -> Path:
    if args.out_dir is not None:
        return args.out_dir
    return Path(os.environ.get(OUT_DIR_ENV, "bubbleride-out"))


def _paths_table(price, n_dump: int) -> dict:
    rows = price.p.shape[0] if n_dump < 0 else min(n_dump, price.p.shape[0])
    n1 = price.p.shape[1]
    flags = price.burst_flags()[:rows]
    return {"path": np.repeat(np.arange(rows), n1), "t": np.tile(price.t, rows),
            "p": price.p[:rows].ravel(), "m": price.m[:rows].ravel(),
            "gamma": price.gamma[:rows].ravel(), "burst_flag": flags.ravel().astype(int)}


def _cmd_validate(cfg: ScenarioConfig, args) -> int:
    rep = validate(cfg)
    print(rep)
    return EXIT_OK if rep.ok else EXIT_INVALID


def _cmd_simulate(cfg: ScenarioConfig, args) -> int:
    from .bsde import ControlField
    from .io import emit_reports, manifest
    from .noise import StreamRole, sample_noise
    from .population import (constant_strategy, evaluate_player_cost, field_strategy,
                             simulate_population)

    strategy, label = None, "zero"
    if args.control_field is not None:
        with np.load(args.control_field) as data:
            field = ControlField.from_arrays(dict(data))
        if field.n_steps != cfg.n_steps:
            raise ValueError("control field was fitted on a different time grid")
        strategy, label = field_strategy(field, cfg.regression_scope), str(args.control_field)
    elif args.constant_action is not None:
        strategy, label = constant_strategy(args.constant_action), f"constant {args.constant_action}"
    n_games = max(1, cfg.n_paths // cfg.n_players)
    noise = sample_noise(cfg, StreamRole.POPULATION, n_common=n_games, n_idio=cfg.n_players,
                         workers=args.workers)
    res = simulate_population(cfg, noise, strategy)
    cost = evaluate_player_cost(cfg, res)
    G, N = res.entries.threshold.shape
    n = cfg.n_steps
    entry = res.entries.entry_step
    entry_t = np.where(entry <= n, cfg.time_grid[np.minimum(entry, n)], cfg.horizon_T + 1.0)
    players = {"game": np.repeat(np.arange(G), N), "player": np.tile(np.arange(N), G),
               "threshold": res.entries.threshold.ravel(), "entry_step": entry.ravel(),
               "entry_time": entry_t.ravel(), "terminal_inventory": res.X[:, :, -1].ravel(),
               "cost": cost.total.ravel(), "cost_terminal": cost.terminal.ravel(),
               "cost_burst": cost.burst.ravel(), "cost_running": cost.running.ravel()}
    report = {"games": G, "players": N, "strategy": label,
              "mean_cost": float(cost.total.mean()),
              "burst_step": {"endogenous": res.burst.endo_step, "exogenous": res.burst.exo_step,
                             "true": res.burst.true_step},
              "flows": {"mean_in_game": res.flow.mean_in_game, "impact": res.flow.impact,
                        "in_game_fraction": res.flow.in_game_fraction},
              "post_burst_above_frozen_max": res.price.above_frozen_max}
    paths = _paths_table(res.price, args.dump_paths) if args.dump_paths is not None else None
    out = _out_dir(args)
    emit_reports(out, manifest(cfg.to_dict(), cfg.master_seed, "simulate"), report=report,
                 players=players, paths=paths, report_name="population_report.json")
    print(f"simulated {G} games x {N} players, mean cost {cost.total.mean():.6g}; wrote {out}")
    return EXIT_OK


def _solve(cfg: ScenarioConfig, args):
    from .fixed_point import solve_equilibrium

    return solve_equilibrium(cfg, workers=args.workers,
                             callback=lambda it, r: print(f"iteration {it}: residual {r:.6g}"))


def _equilibrium_report(cfg, eq, ex=None, extra=None) -> dict:
    env = eq.env
    n = cfg.n_steps
    endo = env.endo_step
    exo = eq.ensemble.exo_step
    eta = env.burst_step
    kind = np.where(exo <= endo, "exogenous", np.where(endo < n, "endogenous", "horizon"))
    hist = {}
    for label in ("endogenous", "exogenous", "horizon"):
        sel = kind == label
        hist[label] = {"count": int(sel.sum()),
                       "steps": np.bincount(eta[sel], minlength=n + 1).tolist()}
    y0 = None if eq.solution is None else float(eq.solution.Y[:, 0].mean())
    rep = {"converged": eq.converged, "iterations": len(eq.residuals),
           "best_iteration": eq.best_iteration, "residual_history": eq.residuals,
           "tolerance": cfg.fp_tolerance, "damping": cfg.damping_delta,
           "value_mean_Y0": y0, "burst_histogram": hist,
           "cells": [{"cell": c, "probability": float(eq.flows.probs[c]),
                      "mean_inventory": eq.flows.mean_x[c], "impact": eq.flows.impact[c]}
                     for c in range(eq.flows.n_cells)]}
    if ex is not None:
        rep["exploitability"] = ex.to_dict()
    if extra:
        rep.update(extra)
    return rep


def _write_solution(cfg, eq, args, report, command) -> Path:
    from .io import emit_reports, manifest

    from .ensemble import cut_at_burst

    ens = cut_at_burst(eq.ensemble, eq.env)
    players = None
    diagnostics = None
    if eq.solution is not None:
        players = {"path": np.arange(ens.n_paths), "common": ens.common_index,
                   "cell": ens.cell_of_path, "threshold": ens.noise.init_threshold,
                   "wealth": ens.noise.init_wealth, "entry_step": ens.entry_step,
                   "Y0": eq.solution.Y[:, 0]}
        diagnostics = eq.solution.diagnostics_report()
    paths = _paths_table(eq.env.price, args.dump_paths) if args.dump_paths is not None else None
    out = _out_dir(args)
    emit_reports(out, manifest(cfg.to_dict(), cfg.master_seed, command), report=report,
                 flows=eq.flows, time_grid=cfg.time_grid, players=players, paths=paths,
                 cells=ens.partition.report(), diagnostics=diagnostics,
                 control_field=eq.field.to_arrays())
    return out


def _cmd_solve(cfg: ScenarioConfig, args) -> int:
    from .fixed_point import exploitability

    eq = _solve(cfg, args)
    ex = exploitability(eq, workers=args.workers) if eq.solution is not None else None
    extra = {}
    if args.per_threshold:
        from .bsde import solve_bsde_per_threshold

        extra["per_threshold"] = solve_bsde_per_threshold(cfg, eq.ensemble, eq.input_flows,
                                                          args.per_threshold)
    out = _write_solution(cfg, eq, args, _equilibrium_report(cfg, eq, ex, extra), "solve")
    status = "converged" if eq.converged else "NOT converged"
    print(f"{status} after {len(eq.residuals)} iterations; wrote {out}")
    return EXIT_OK if eq.converged else EXIT_NOT_CONVERGED


def _cmd_verify(cfg: ScenarioConfig, args) -> int:
    from .checks import run_checks

    eq = _solve(cfg, args)
    if eq.solution is None:
        print("no iteration was run; nothing to verify")
        return EXIT_NOT_CONVERGED
    checks = run_checks(cfg, eq)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.6g} (bound {c.bound:.6g}) {c.detail}")
    report = _equilibrium_report(cfg, eq, extra={"checks": [c.to_dict() for c in checks]})
    _write_solution(cfg, eq, args, report, "verify")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_INVALID


COMMANDS = {"validate": _cmd_validate, "simulate": _cmd_simulate, "solve": _cmd_solve,
            "verify": _cmd_verify}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_scenario(args.scenario)
        if args.command != "validate":
            cfg = apply_overrides(cfg, args)
            rep = validate(cfg)
            if not rep.ok:
                print(rep, file=sys.stderr)
                return EXIT_INVALID
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](cfg, args)
    except Exception as exc:  # noqa: BLE001 - every failure maps to the runtime exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
