"""Seed-reproducible randomness: Brownian increments, initial data and exogenous burst times.

Every draw comes from a counter-based Philox stream keyed by
``(master_seed, role, component, index)``. Common-noise components are keyed
per common scenario, idiosyncratic components per block of players sharing a
common scenario, so results do not depend on how work is split across threads.
"""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig


class StreamRole(enum.IntEnum):
    TRAINING = 1
    EVALUATION = 2
    POPULATION = 3


class _Component(enum.IntEnum):
    COMMON_B = 1
    EXO_E = 2
    IDIO_W = 3
    WEALTH = 4
    THRESHOLD = 5


def substream(seed: int, role: int, component: int, index: int) -> np.random.Generator:
    """Independent generator for one ``(seed, role, component, index)`` key."""
    ss = np.random.SeedSequence([int(seed), int(role), int(component), int(index)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class NoiseBundle:
    """All random inputs of one Monte Carlo ensemble.

    Paths are nested: path ``i`` uses common scenario ``common_index[i]``.
    ``tau`` is ``inf`` when the exogenous burst falls after the horizon.
    """

    time_grid: np.ndarray
    dB: np.ndarray            # (n_common, n_steps)
    exo_E: np.ndarray         # (n_common,) standard exponential draws
    tau: np.ndarray           # (n_common,)
    dW: np.ndarray            # (n_paths, n_steps)
    init_wealth: np.ndarray   # (n_paths,)
    init_threshold: np.ndarray  # (n_paths,)
    common_index: np.ndarray  # (n_paths,)

    @property
    def n_steps(self) -> int:
        return self.dB.shape[1]

    @property
    def n_common(self) -> int:
        return self.dB.shape[0]

    @property
    def n_paths(self) -> int:
        return self.dW.shape[0]

    @property
    def n_idio(self) -> int:
        return self.n_paths // self.n_common

    @property
    def B(self) -> np.ndarray:
        return _cumulative(self.dB)

    @property
    def W(self) -> np.ndarray:
        return _cumulative(self.dW)


def _cumulative(d: np.ndarray) -> np.ndarray:
    out = np.zeros((d.shape[0], d.shape[1] + 1))
    np.cumsum(d, axis=1, out=out[:, 1:])
    return out


def compensator(cfg: ScenarioConfig) -> np.ndarray:
    """Trapezoid cumulative intensity on the time grid, starting at 0."""
    t = cfg.time_grid
    k = np.broadcast_to(cfg.exo_intensity_k(t), t.shape)
    lam = np.zeros_like(t)
    lam[1:] = np.cumsum(0.5 * (k[1:] + k[:-1]) * np.diff(t))
    return lam


def sample_exogenous_burst(cfg: ScenarioConfig, E) -> np.ndarray:
    """Invert the compensator: ``tau = Lambda^{-1}(E)``, or ``inf`` if ``E > Lambda(T)``.

    ``E`` are standard exponential draws (a scalar or array), so this is a
    deterministic map of the substream output.
    """
    E = np.asarray(E, dtype=float)
    t = cfg.time_grid
    lam = compensator(cfg)
    # first grid index with Lambda >= E; linear inside that interval
    j = np.clip(np.searchsorted(lam, E, side="left"), 1, len(t) - 1)
    lo, hi = lam[j - 1], lam[j]
    width = hi - lo
    frac = np.divide(E - lo, width, out=np.ones_like(E), where=width > 0)
    tau = t[j - 1] + frac * (t[j] - t[j - 1])
    return np.where(E > lam[-1], np.inf, tau)


def _fill_common(cfg, role, seed, idx, dB, E):
    sq = np.sqrt(cfg.dt)
    for c in idx:
        dB[c] = substream(seed, role, _Component.COMMON_B, c).standard_normal(dB.shape[1]) * sq
        E[c] = substream(seed, role, _Component.EXO_E, c).standard_exponential()


def _fill_idio(cfg, role, seed, idx, n_idio, dW, z, u):
    sq = np.sqrt(cfg.dt)
    n = dW.shape[1]
    for c in idx:
        rows = slice(c * n_idio, (c + 1) * n_idio)
        dW[rows] = substream(seed, role, _Component.IDIO_W, c).standard_normal((n_idio, n)) * sq
        z[rows] = substream(seed, role, _Component.WEALTH, c).standard_normal(n_idio)
        u[rows] = substream(seed, role, _Component.THRESHOLD, c).random(n_idio)


def _parallel(fn, n: int, workers: int) -> None:
    chunks = np.array_split(np.arange(n), max(1, min(workers, n)))
    if workers <= 1:
        for ch in chunks:
            fn(ch)
        return
    with ThreadPoolExecutor(max_workers=workers) as ex:
        list(ex.map(fn, chunks))


def sample_noise(cfg: ScenarioConfig, stream_role: StreamRole = StreamRole.TRAINING,
                 n_common: int | None = None, n_idio: int | None = None,
                 workers: int = 1, seed: int | None = None) -> NoiseBundle:
    """Draw a nested ensemble of ``n_common * n_idio`` paths.

    Defaults come from the config: ``n_idio = idio_per_common`` and
    ``n_common = n_paths // idio_per_common``.
    """
    n_idio = cfg.idio_per_common if n_idio is None else int(n_idio)
    n_common = cfg.n_common if n_common is None else int(n_common)
    seed = cfg.master_seed if seed is None else int(seed)
    n = cfg.n_steps
    dB = np.empty((n_common, n))
    E = np.empty(n_common)
    _parallel(lambda ix: _fill_common(cfg, stream_role, seed, ix, dB, E), n_common, workers)
    common = dict(time_grid=cfg.time_grid, dB=dB, exo_E=E, tau=sample_exogenous_burst(cfg, E))
    return _with_idio(cfg, common, stream_role, seed, n_common, n_idio, workers)


def _with_idio(cfg, common, role, seed, n_common, n_idio, workers) -> NoiseBundle:
    n_paths = n_common * n_idio
    dW = np.empty((n_paths, cfg.n_steps))
    z = np.empty(n_paths)
    u = np.empty(n_paths)
    _parallel(lambda ix: _fill_idio(cfg, role, seed, ix, n_idio, dW, z, u), n_common, workers)
    return NoiseBundle(
        dW=dW,
        init_wealth=cfg.dist_wealth_nu_K.from_normal(z),
        init_threshold=cfg.dist_thresholds_nu_p.ppf(u, cfg.price_init_P0),
        common_index=np.repeat(np.arange(n_common), n_idio),
        **common,
    )


def resample_idiosyncratic(cfg: ScenarioConfig, noise: NoiseBundle, seed: int,
                           stream_role: StreamRole = StreamRole.EVALUATION,
                           workers: int = 1) -> NoiseBundle:
    """Fresh idiosyncratic draws on top of the same common scenarios."""
    common = dict(time_grid=noise.time_grid, dB=noise.dB, exo_E=noise.exo_E, tau=noise.tau)
    return _with_idio(cfg, common, stream_role, seed, noise.n_common, noise.n_idio, workers)
