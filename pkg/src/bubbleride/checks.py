"""Self-checks run by ``bubbleride verify``: exploitability plus oracle comparisons.

Each check returns a ``Check`` with the measured value and the bound it was
held to.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .cells import project_dyadic
from .config import ScenarioConfig
from .costs import CostParams, hamiltonian_argmin
from .fixed_point import Equilibrium, exploitability, girsanov_weights
from .metrics import w1_sorted
from .noise import StreamRole, compensator, sample_noise
from .population import evaluate_player_cost, field_strategy, simulate_population


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    bound: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "value": float(self.value),
                "bound": float(self.bound), "detail": self.detail}


def check_argmin(cfg: ScenarioConfig, n: int = 1000, seed: int = 0) -> Check:
    cp = CostParams.from_config(cfg)
    rng = np.random.default_rng(seed)
    span = 2.0 * cp.lam * cp.sigma * cp.a_bound * 1.5
    z = rng.uniform(-span, span, n)
    grid = np.arange(cp.a_min, cp.a_max + 5e-5, 1e-4)
    err = 0.0
    for chunk in np.array_split(z, max(1, n // 50)):
        vals = cp.lam * grid[None, :] ** 2 + grid[None, :] * chunk[:, None] / cp.sigma
        best = grid[np.argmin(vals, axis=1)]
        err = max(err, float(np.max(np.abs(best - hamiltonian_argmin(chunk, cp)))))
    return Check("hamiltonian_argmin_grid", err <= 1e-4, err, 1e-4)


def check_w1_matching(n_instances: int = 200, seed: int = 0) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_instances):
        size = 3 + i % 4
        x = rng.integers(-64, 64, size) / 8.0
        y = rng.integers(-64, 64, size) / 8.0
        brute = min(np.mean(np.abs(x - y[list(p)])) for p in permutations(range(size)))
        worst = max(worst, abs(w1_sorted(x, y) - brute))
    return Check("w1_vs_matching", worst == 0.0, worst, 0.0)


def check_projection(level: int, base: int = 4, n: int = 100_000, seed: int = 0) -> Check:
    rng = np.random.default_rng(seed)
    cap = float(base) ** level
    x = rng.uniform(-cap, cap, n)
    dev = float(np.max(np.abs(project_dyadic(x, level, base) - x)))
    return Check("projection_bound", dev <= cap**-1, dev, cap**-1)


def check_girsanov(cfg: ScenarioConfig, a: float = 0.5, n: int = 100_000, seed: int = 0) -> Check:
    rng = np.random.default_rng(seed)
    dW = rng.standard_normal((n, cfg.n_steps)) * np.sqrt(cfg.dt)
    w = girsanov_weights(np.full(dW.shape, a), dW, cfg.sigma, cfg.dt).terminal
    se = w.std(ddof=1) / np.sqrt(n)
    z = abs(w.mean() - 1.0) / se
    return Check("girsanov_mean_one", z <= 3.0, float(z), 3.0, "standard errors from 1")


def check_exo_law(cfg: ScenarioConfig, n: int = 100_000) -> Check:
    """KS distance between sampled burst times and ``1 - exp(-Lambda(t))``."""
    noise = sample_noise(cfg.replace(n_paths=n, idio_per_common=1), StreamRole.EVALUATION,
                         n_common=n, n_idio=1)
    tau = np.sort(noise.tau)
    t, lam = cfg.time_grid, compensator(cfg)
    fin = tau[np.isfinite(tau)]
    cdf = 1.0 - np.exp(-np.interp(fin, t, lam))
    i = np.arange(1, len(fin) + 1)
    d = 0.0
    if len(fin):
        d = max(np.max(np.abs(i / n - cdf)), np.max(np.abs((i - 1) / n - cdf)))
    d = max(d, abs(len(fin) / n - (1.0 - np.exp(-lam[-1]))))
    return Check("exogenous_burst_ks", d < 0.01, float(d), 0.01)


def check_never_enter(cfg: ScenarioConfig, eq: Equilibrium | None = None, n_games: int = 4) -> Check:
    noise = sample_noise(cfg, StreamRole.POPULATION, n_common=n_games, n_idio=cfg.n_players)
    strat = None if eq is None else field_strategy(eq.field, cfg.regression_scope)
    res = simulate_population(cfg, noise, strat)
    cost = evaluate_player_cost(cfg, res).total
    never = res.entries.entry_step > cfg.n_steps
    bad = int(np.count_nonzero(cost[never] != 0.0))
    return Check("never_enter_zero_cost", bad == 0, bad, 0, f"{int(never.sum())} players never entered")


def run_checks(cfg: ScenarioConfig, eq: Equilibrium, fresh_seed: int | None = None) -> list[Check]:
    ex = exploitability(eq, fresh_seed=fresh_seed)
    checks = [
        Check("exploitability", ex.gap <= 3 * ex.std_error, ex.gap, 3 * ex.std_error,
              "J(eq) - J(best response)"),
        Check("perturbation_detected", ex.perturbed_gap > 3 * ex.perturbed_std_error,
              ex.perturbed_gap, 3 * ex.perturbed_std_error, "gap of the +0.1 perturbed control"),
        check_argmin(cfg),
        check_w1_matching(),
        check_projection(cfg.dyadic_level, cfg.space_grid_exponent),
        check_girsanov(cfg),
        check_exo_law(cfg),
        check_never_enter(cfg, eq),
    ]
    return checks
