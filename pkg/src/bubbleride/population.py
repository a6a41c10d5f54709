"""The finite N-player game: entries, controlled inventories, empirical flows, bursts and costs.

Games are simulated in a batch: one row per common scenario, ``N`` players
per row. Within a step the drift uses start-of-step values; entry and burst
triggers are evaluated on the values at the grid point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsde import ControlField
from .cells import build_D_N, build_V_N, knot_stride, prefix_keys
from .config import ScenarioConfig
from .costs import CostParams
from .ensemble import compute_entries, exo_steps
from .noise import NoiseBundle
from .price import PricePath, simulate_pre_burst


class PopulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class EntryRecord:
    threshold: np.ndarray        # (G, N)
    entry_step: np.ndarray       # (G, N), n_steps + 1 if never
    entry_inventory: np.ndarray  # (G, N) K0 / p*

    @property
    def player_id(self) -> np.ndarray:
        return np.broadcast_to(np.arange(self.threshold.shape[1]), self.threshold.shape)


@dataclass(frozen=True)
class EmpiricalFlow:
    mean_in_game: np.ndarray      # (G, n_steps + 1)
    impact: np.ndarray            # (G, n_steps), as felt in price and costs
    in_game_fraction: np.ndarray  # (G, n_steps + 1)


@dataclass(frozen=True)
class BurstOutcome:
    endo_step: np.ndarray
    exo_step: np.ndarray
    true_step: np.ndarray


@dataclass(frozen=True)
class PlayerView:
    """What a strategy sees at step ``k``; arrays are ``(G, N)`` or ``(G,)``."""

    k: int
    t: float
    X: np.ndarray
    P: np.ndarray
    m: np.ndarray
    gamma: np.ndarray
    burst: np.ndarray
    charge: np.ndarray
    entered: np.ndarray
    prefix: list | None = None


@dataclass(frozen=True)
class PopulationResult:
    X: np.ndarray       # (G, N, n_steps + 1)
    alpha: np.ndarray   # (G, N, n_steps)
    entries: EntryRecord
    flow: EmpiricalFlow
    burst: BurstOutcome
    price: PricePath
    trend: np.ndarray   # (G, n_steps) pre-burst trend values b(t_k, m_k, p_k)


def zero_strategy(view: PlayerView) -> np.ndarray:
    return np.zeros_like(view.X)


def constant_strategy(a: float):
    def strategy(view: PlayerView) -> np.ndarray:
        return np.full_like(view.X, a)

    return strategy


def field_strategy(field: ControlField, scope: str = "pooled"):
    """Use a fitted control field as a feedback strategy for every player."""

    def strategy(view: PlayerView) -> np.ndarray:
        G, N = view.X.shape
        prefix = None
        if scope == "cell" and view.prefix is not None:
            prefix = [pk for pk in view.prefix for _ in range(N)]
        rep = lambda v: np.repeat(v, N)  # noqa: E731
        a = field.act(view.k, view.X.ravel(), rep(view.P), rep(view.m), rep(view.gamma),
                      rep(view.burst), view.charge.ravel(), view.entered.ravel(), prefix)
        return a.reshape(G, N)

    return strategy


def empirical_cdf(thresholds):
    """In-game fraction ``#{p*_i <= m} / N`` per game for a row vector ``m``."""
    thr = np.asarray(thresholds, dtype=float)

    def cdf(m):
        m = np.asarray(m, dtype=float)
        if m.ndim == 2:
            return (thr[:, None, :] <= m[:, :, None]).mean(axis=-1)
        return (thr <= m[:, None]).mean(axis=-1)

    return cdf


def simulate_population(cfg: ScenarioConfig, noise: NoiseBundle, strategy=None) -> PopulationResult:
    """Forward simulation of ``n_common`` games of ``n_idio`` players each."""
    strategy = zero_strategy if strategy is None else strategy
    G, N, n = noise.n_common, noise.n_idio, noise.n_steps
    t, dt = cfg.time_grid, cfg.dt
    cp = CostParams.from_config(cfg)
    thr = noise.init_threshold.reshape(G, N)
    x0 = (noise.init_wealth / noise.init_threshold).reshape(G, N)
    dW = noise.dW.reshape(G, N, n)
    cdf = empirical_cdf(thr)
    pre = simulate_pre_burst(cfg, noise.dB, cdf=cdf)
    entry_plus = compute_entries(pre.m, thr)
    F_pre = cdf(pre.m)
    zeta = cfg.inventory_threshold_zeta(t)
    exo = exo_steps(noise.tau, t)
    use_cell = cfg.regression_scope == "cell"
    if use_cell:
        level, base = cfg.dyadic_level, cfg.space_grid_exponent
        V, D = build_V_N(noise.B, level, base), build_D_N(noise.tau, cfg.horizon_T, level)
        stride = knot_stride(n, level)

    p, m, g = pre.p.copy(), pre.m.copy(), pre.gamma.copy()
    drift = pre.drift.copy()
    X = np.zeros((G, N, n + 1))
    alpha = np.zeros((G, N, n))
    mu = np.zeros((G, n + 1))
    F = np.zeros((G, n + 1))
    impact = np.zeros((G, n))
    eta = np.full(G, n + 1)
    endo = np.full(G, n)
    run_min = np.full(G, np.inf)
    charge = np.zeros((G, N))
    jump = np.zeros(G)
    rows = np.arange(G)
    for k in range(n + 1):
        burst_before = eta < k
        allowed = np.where(burst_before, eta, k)[:, None]
        entered = (entry_plus <= k) & (entry_plus <= allowed)
        new = entry_plus == k
        X[:, :, k] = np.where(new & entered, x0, X[:, :, k])
        F[:, k] = np.where(burst_before, F[rows, np.minimum(eta, n)], F_pre[:, k])
        if np.any(F[:, k] <= 0):
            raise PopulationError(f"no player in the game at step {k}")
        mu[:, k] = np.where(entered, X[:, :, k], 0.0).mean(axis=1) / F[:, k]
        run_min = np.minimum(run_min, mu[:, k])
        hit = (k >= 1) & (run_min <= zeta[k]) & (endo == n) & (k < n)
        endo = np.where(hit, k, endo)
        fire = (eta > n) & ((endo == k) | (exo == k) | (k == n))
        if np.any(fire):
            eta = np.where(fire, k, eta)
            jump = np.where(fire, -cfg.burst_size_beta(t[k]) * g[:, k], jump)
            p[fire, k] += jump[fire]
            m[fire, k:] = m[fire, k][:, None]
            g[fire, k:] = g[fire, k][:, None]
            charge = np.where(fire[:, None], cfg.burst_size_beta(t[k]) * g[:, k][:, None] * X[:, :, k],
                              charge)
        if k == n:
            break
        post = eta <= k
        prefix = prefix_keys(V, D, level, base, stride, k) if use_cell else None
        view = PlayerView(k, t[k], X[:, :, k], p[:, k], m[:, k], g[:, k], post, charge, entered, prefix)
        a = np.clip(np.asarray(strategy(view), dtype=float), cp.a_min, cp.a_max)
        a = np.where(entered, a, 0.0)
        alpha[:, :, k] = a
        imp = np.where(entered, cfg.rho(a), 0.0).mean(axis=1)
        impact[:, k] = imp / F[:, k] if cfg.impact_normalization == "in_game" else imp
        drift[post, k] = impact[post, k]
        p[:, k + 1] = np.where(post, p[:, k] + impact[:, k] * dt + cfg.sigma0 * noise.dB[:, k],
                               pre.p[:, k + 1])
        if not np.all(np.isfinite(p[:, k + 1])):
            raise PopulationError(f"non-finite price at step {k + 1}")
        X[:, :, k + 1] = np.where(entered, X[:, :, k] + a * dt + cfg.sigma * dW[:, :, k], 0.0)

    final_entry = np.where(entry_plus <= eta[:, None], entry_plus, n + 1)
    kk = np.arange(n + 1)
    after = kk[None, :] >= eta[:, None]
    price = PricePath(t=t, p=p, m=m, gamma=g, drift=drift, burst_step=eta, jump_size=jump,
                      above_frozen_max=np.any(after & (p > m), axis=1))
    entries = EntryRecord(thr, final_entry, x0)
    return PopulationResult(X=X, alpha=alpha, entries=entries,
                            flow=EmpiricalFlow(mu, impact, F),
                            burst=BurstOutcome(endo, exo, eta), price=price, trend=pre.drift)


@dataclass(frozen=True)
class CostBreakdown:
    terminal: np.ndarray
    burst: np.ndarray
    running: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.terminal + self.burst + self.running


def evaluate_player_cost(cfg: ScenarioConfig, res: PopulationResult) -> CostBreakdown:
    """Terminal, burst and running parts of every player's cost.

    Running cost ``lam a^2 + phi X^2 - X b`` before the burst and
    ``lam a^2 + phi X^2 - X impact`` afterwards, summed over steps in
    ``[entry, T)``. Players who never enter pay exactly 0.
    """
    cp = CostParams.from_config(cfg)
    n = res.alpha.shape[2]
    t = cfg.time_grid
    eta = res.burst.true_step
    G = len(eta)
    rows = np.arange(G)
    e = np.minimum(eta, n)
    k = np.arange(n)
    entered = k[None, None, :] >= res.entries.entry_step[:, :, None]
    pre = (k[None, :] < eta[:, None])[:, None, :]
    Xk = res.X[:, :, :n]
    mterm = np.where(pre, res.trend[:, None, :], res.flow.impact[:, None, :])
    f = cp.lam * res.alpha**2 + cp.phi * Xk**2 - Xk * mterm
    running = np.where(entered, f, 0.0).sum(axis=2) * cfg.dt
    ever = res.entries.entry_step <= n
    terminal = np.where(ever, cp.c * res.X[:, :, n] ** 2, 0.0)
    beta_eta = cfg.burst_size_beta(t[e])
    gamma_eta = res.price.gamma[rows, e]
    burst = np.where(ever, (beta_eta * gamma_eta)[:, None] * res.X[rows, :, e], 0.0)
    return CostBreakdown(terminal, burst, running)
