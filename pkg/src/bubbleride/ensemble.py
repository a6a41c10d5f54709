"""Monte Carlo ensemble for the representative agent and its common-noise environment.

The ensemble fixes everything that does not depend on the measure flow: the
pre-burst price of each common scenario, the cell partition, entry times and
the uncontrolled (reference) inventory of each path. ``resolve_environment``
adds the flow-dependent part: burst times and post-burst prices.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cells import CellPartition, partition_from_noise
from .config import ScenarioConfig
from .noise import NoiseBundle
from .price import PricePath, apply_burst_and_continue, simulate_pre_burst


def compute_entries(m, thresholds, common_index=None) -> np.ndarray:
    """First grid index with ``m_k >= p*``; ``n_steps + 1`` if never.

    ``m`` is a nondecreasing running maximum, shape ``(n_rows, n_steps + 1)``;
    ``thresholds`` has shape ``(n_paths,)`` (one row each, or mapped through
    ``common_index``) or ``(n_rows, n_thresholds)``.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    thr = np.asarray(thresholds, dtype=float)
    if thr.ndim == 2:
        return (m[:, None, :] < thr[:, :, None]).sum(axis=-1)
    rows = np.arange(len(thr)) if common_index is None else np.asarray(common_index)
    return (m[rows] < thr[:, None]).sum(axis=-1)


def exo_steps(tau, time_grid) -> np.ndarray:
    """First grid index with ``t_k >= tau``; ``n_steps + 1`` when ``tau > T``."""
    return np.searchsorted(np.asarray(time_grid), np.asarray(tau, dtype=float), side="left")


def reference_inventory(init_inventory, entry_step, dW, sigma: float) -> np.ndarray:
    """Uncontrolled state: ``K0/p* + sigma (W_k - W_entry)`` after entry, ``0`` before."""
    n_paths, n = dW.shape
    W = np.zeros((n_paths, n + 1))
    np.cumsum(dW, axis=1, out=W[:, 1:])
    e = np.minimum(entry_step, n)
    W_e = W[np.arange(n_paths), e]
    X = init_inventory[:, None] + sigma * (W - W_e[:, None])
    k = np.arange(n + 1)
    return np.where(k[None, :] >= entry_step[:, None], X, 0.0)


@dataclass(frozen=True)
class PathEnsemble:
    cfg: ScenarioConfig
    noise: NoiseBundle
    pre: PricePath            # pre-burst price per common scenario
    partition: CellPartition
    exo_step: np.ndarray      # (n_common,)
    entry_step: np.ndarray    # (n_paths,)
    X: np.ndarray             # (n_paths, n_steps + 1) reference inventory
    in_game: np.ndarray       # (n_common, n_steps + 1) F_p(m)

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    @property
    def n_steps(self) -> int:
        return self.X.shape[1] - 1

    @property
    def common_index(self) -> np.ndarray:
        return self.noise.common_index

    @property
    def cell_of_path(self) -> np.ndarray:
        return self.partition.cell_of[self.noise.common_index]

    @property
    def entered(self) -> np.ndarray:
        k = np.arange(self.n_steps + 1)
        return k[None, :] >= self.entry_step[:, None]


def build_ensemble(cfg: ScenarioConfig, noise: NoiseBundle) -> PathEnsemble:
    pre = simulate_pre_burst(cfg, noise.dB)
    part = partition_from_noise(noise.B, noise.tau, cfg.horizon_T, cfg.dyadic_level,
                                cfg.space_grid_exponent)
    entry = compute_entries(pre.m, noise.init_threshold, noise.common_index)
    x0 = noise.init_wealth / noise.init_threshold
    X = reference_inventory(x0, entry, noise.dW, cfg.sigma)
    return PathEnsemble(cfg=cfg, noise=noise, pre=pre, partition=part,
                        exo_step=exo_steps(noise.tau, cfg.time_grid), entry_step=entry,
                        X=X, in_game=cfg.threshold_cdf(pre.m))


@dataclass(frozen=True)
class Environment:
    """Flow-dependent quantities per common scenario."""

    price: PricePath
    endo_step: np.ndarray   # (n_common,) capped at n_steps
    burst_step: np.ndarray  # (n_common,)
    mu_bar: np.ndarray      # (n_common, n_steps + 1)
    rho_bar: np.ndarray     # (n_common, n_steps) impact felt by one agent
    in_game: np.ndarray     # (n_common, n_steps + 1)

    def burst_flags(self) -> np.ndarray:
        return self.price.burst_flags()


def endogenous_steps(mu_bar, zeta, start: int = 0) -> np.ndarray:
    """First ``k >= start`` with ``min_{s<=k} mu_bar_s <= zeta_k``, capped at ``n_steps``."""
    mu_bar = np.atleast_2d(mu_bar)
    n = mu_bar.shape[1] - 1
    run = np.minimum.accumulate(mu_bar, axis=1)
    hit = run <= np.asarray(zeta)[None, :]
    hit[:, :start] = False
    return np.where(hit.any(axis=1), hit.argmax(axis=1), n)


def impact_felt(impact, in_game, normalization: str):
    if normalization == "population":
        return impact
    return impact / in_game


def resolve_environment(ens: PathEnsemble, mean_x, impact) -> Environment:
    """Burst times and post-burst prices for given per-cell mean and impact flows.

    ``mean_x`` is ``(n_cells, n_steps + 1)``, ``impact`` is ``(n_cells, n_steps)``.
    """
    cfg = ens.cfg
    cells = ens.partition.cell_of
    F = ens.in_game
    mu_bar = np.asarray(mean_x)[cells] / F
    t = cfg.time_grid
    endo = endogenous_steps(mu_bar, cfg.inventory_threshold_zeta(t))
    eta = np.minimum(endo, ens.exo_step)
    F_frozen = np.minimum(F[:, :-1], F[np.arange(len(eta)), eta][:, None])
    rho = impact_felt(np.asarray(impact)[cells], F_frozen, cfg.impact_normalization)
    price = apply_burst_and_continue(ens.pre, eta, cfg.burst_size_beta, rho, ens.noise.dB,
                                     cfg.sigma0, cfg.dt)
    return Environment(price=price, endo_step=endo, burst_step=eta, mu_bar=mu_bar,
                       rho_bar=rho, in_game=cfg.threshold_cdf(price.m))


def cut_at_burst(ens: PathEnsemble, env: Environment) -> PathEnsemble:
    """Ensemble without entries after the burst step.

    The running maximum is frozen at the burst, so a threshold first crossed
    by the pre-burst path after ``eta`` is never reached. Those paths get the
    sentinel entry step and a zero inventory.
    """
    n = ens.n_steps
    late = (ens.entry_step > env.burst_step[ens.common_index]) & (ens.entry_step <= n)
    if not np.any(late):
        return ens
    return replace(ens, entry_step=np.where(late, n + 1, ens.entry_step),
                   X=np.where(late[:, None], 0.0, ens.X))

