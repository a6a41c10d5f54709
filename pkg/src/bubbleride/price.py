"""Bubble price paths: pre-burst Euler scheme, burst jump and post-burst impact dynamics.

Arrays are batched along the leading axis (one row per common scenario or game).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import ScenarioConfig

NO_BURST = -1


class SimulationError(RuntimeError):
    """Raised when a simulated quantity becomes non-finite."""


@dataclass(frozen=True)
class PricePath:
    """Price ``p``, running maximum ``m`` and bubble component ``gamma``.

    ``drift`` holds the drift used on each step (trend before the burst,
    impact afterwards). ``burst_step`` is ``NO_BURST`` when no jump was applied.
    After the burst ``m`` and ``gamma`` are frozen at their burst values.
    """

    t: np.ndarray
    p: np.ndarray           # (n_rows, n_steps + 1)
    m: np.ndarray
    gamma: np.ndarray
    drift: np.ndarray       # (n_rows, n_steps)
    burst_step: np.ndarray  # (n_rows,)
    jump_size: np.ndarray   # (n_rows,)
    above_frozen_max: np.ndarray  # (n_rows,) post-burst price exceeded the frozen max

    @property
    def n_steps(self) -> int:
        return self.p.shape[1] - 1

    def burst_flags(self) -> np.ndarray:
        """``1{t_k >= tau*}`` per row and grid point."""
        k = np.arange(self.n_steps + 1)
        b = self.burst_step[:, None]
        return (b >= 0) & (k[None, :] >= b)


def _rows(x, n_rows: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(x, dtype=float), (n_rows,)).copy()


def simulate_pre_burst(cfg: ScenarioConfig, dB, cdf=None, p0=None) -> PricePath:
    """Euler scheme for the pre-burst price with path-dependent trend.

    ``cdf`` maps a row vector of running maxima to the in-game fraction;
    defaults to the population threshold CDF. Returns a path with no burst.
    """
    dB = np.atleast_2d(np.asarray(dB, dtype=float))
    n_rows, n = dB.shape
    cdf = cfg.threshold_cdf if cdf is None else cdf
    t = cfg.time_grid
    dt = cfg.dt
    p = np.empty((n_rows, n + 1))
    m = np.empty_like(p)
    g = np.empty_like(p)
    drift = np.empty((n_rows, n))
    p[:, 0] = _rows(cfg.price_init_P0 if p0 is None else p0, n_rows)
    m[:, 0] = p[:, 0]
    g[:, 0] = 0.0
    for k in range(n):
        b = cfg.trend(t[k], m[:, k], p[:, k], cdf)
        drift[:, k] = b
        p[:, k + 1] = p[:, k] + b * dt + cfg.sigma0 * dB[:, k]
        m[:, k + 1] = np.maximum(m[:, k], p[:, k + 1])
        g[:, k + 1] = g[:, k] + b * dt
        if not np.all(np.isfinite(p[:, k + 1])):
            raise SimulationError(f"non-finite price at step {k + 1}")
    return PricePath(t=t, p=p, m=m, gamma=g, drift=drift,
                     burst_step=np.full(n_rows, NO_BURST), jump_size=np.zeros(n_rows),
                     above_frozen_max=np.zeros(n_rows, dtype=bool))


def apply_burst_and_continue(path: PricePath, burst_step, beta, impact_process, dB,
                             sigma0: float, dt: float) -> PricePath:
    """Apply the crash at ``burst_step`` and continue with impact-driven drift.

    ``beta`` is the burst-size function of time, ``impact_process`` the
    post-burst drift per row and step, shape ``(n_rows, n_steps)``. Rows with
    a burst step outside ``[0, n_steps]`` are returned unchanged.
    """
    dB = np.atleast_2d(np.asarray(dB, dtype=float))
    n_rows, n = dB.shape
    eta = np.broadcast_to(np.asarray(burst_step, dtype=np.int64), (n_rows,))
    live = (eta >= 0) & (eta <= n)
    if not np.any(live):
        return path
    impact = np.broadcast_to(np.asarray(impact_process, dtype=float), (n_rows, n))
    rows = np.arange(n_rows)
    e = np.where(live, eta, 0)
    gamma_eta = path.gamma[rows, e]
    jump = np.where(live, -beta(path.t[e]) * gamma_eta, 0.0)
    p = path.p.copy()
    m = path.m.copy()
    g = path.gamma.copy()
    drift = path.drift.copy()
    k_idx = np.arange(n + 1)
    after = live[:, None] & (k_idx[None, :] >= e[:, None])
    m = np.where(after, path.m[rows, e][:, None], m)
    g = np.where(after, gamma_eta[:, None], g)
    p[rows[live], e[live]] += jump[live]
    for k in range(n):
        post = live & (k >= e)
        if not np.any(post):
            continue
        drift[post, k] = impact[post, k]
        p[post, k + 1] = p[post, k] + impact[post, k] * dt + sigma0 * dB[post, k]
        if not np.all(np.isfinite(p[post, k + 1])):
            raise SimulationError(f"non-finite post-burst price at step {k + 1}")
    exceeded = np.any(after & (p > m), axis=1)
    return replace(path, p=p, m=m, gamma=g, drift=drift,
                   burst_step=np.where(live, eta, path.burst_step),
                   jump_size=np.where(live, jump, path.jump_size),
                   above_frozen_max=path.above_frozen_max | exceeded)
