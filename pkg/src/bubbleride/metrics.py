"""Distances on laws and paths, and quantile sketches of weighted samples."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import wasserstein_distance


def quantile_levels(m: int = 99) -> np.ndarray:
    """Fixed levels ``j / (m + 1)``, ``j = 1..m``."""
    return np.arange(1, m + 1) / (m + 1)


@dataclass(frozen=True)
class QuantileSketch:
    """Weighted empirical law: sorted support points with positive weights summing to 1."""

    values: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_samples(cls, values, weights=None) -> "QuantileSketch":
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("empty sketch")
        w = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float).ravel()
        keep = w > 0
        if not np.any(keep):
            raise ValueError("sketch has no positive weight")
        order = np.argsort(values[keep], kind="stable")
        w = w[keep][order]
        return cls(values[keep][order], w / w.sum())

    def quantile(self, u) -> np.ndarray:
        """Left-continuous quantile ``inf{x : F(x) >= u}``."""
        cw = np.cumsum(self.weights)
        idx = np.searchsorted(cw, np.asarray(u, dtype=float) - 1e-15, side="left")
        return self.values[np.minimum(idx, len(self.values) - 1)]

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))


def wasserstein1_1d(a: QuantileSketch, b: QuantileSketch) -> float:
    """``int_0^1 |Q_a(u) - Q_b(u)| du`` for step quantile functions."""
    if a.values.size == 0 or b.values.size == 0:
        raise ValueError("empty sketch")
    return float(wasserstein_distance(a.values, b.values, a.weights, b.weights))


def w1_sorted(x, y) -> float:
    """W1 between two equal-size, equal-weight samples: mean of sorted differences."""
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    if x.shape != y.shape or x.size == 0:
        raise ValueError("samples must be non-empty and of equal size")
    return float(np.mean(np.abs(x - y)))


def w1_levels(qa, qb, axis: int = -1):
    """W1 between laws summarised on the same fixed quantile levels."""
    return np.mean(np.abs(np.asarray(qa) - np.asarray(qb)), axis=axis)


def grouped_quantiles(values, weights, groups, n_groups: int, levels) -> np.ndarray:
    """Weighted quantiles of ``values`` within each group, shape ``(n_groups, len(levels))``.

    Groups without positive weight get ``nan``.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    groups = np.asarray(groups)
    order = np.lexsort((values, groups))
    v, w, g = values[order], weights[order], groups[order]
    tot = np.bincount(g, weights=w, minlength=n_groups)
    cw = np.cumsum(w)
    start = np.concatenate([[0.0], cw])[np.searchsorted(g, np.arange(n_groups), side="left")]
    with np.errstate(invalid="ignore", divide="ignore"):
        key = g + (cw - start[g]) / tot[g]
    levels = np.asarray(levels, dtype=float)
    target = np.arange(n_groups)[:, None] + levels[None, :] - 1e-12
    idx = np.searchsorted(key, target.ravel(), side="left").reshape(target.shape)
    out = v[np.minimum(idx, len(v) - 1)]
    out[tot <= 0] = np.nan
    return out


def freeze_before_entry(x, entry_step):
    """Path with the pre-entry segment replaced by the entry value."""
    x = np.asarray(x, dtype=float)
    out = x.copy()
    if 0 <= entry_step < len(x):
        out[:entry_step] = x[entry_step]
    else:
        out[:] = 0.0
    return out


def path_metric_dX(x1, e1, x2, e2, time_grid) -> float:
    """``sup |x1bar - x2bar| + |t1 - t2|`` on the grid.

    ``e1``/``e2`` are entry steps; any step outside the grid means "never
    entered", which maps to time ``T + 1`` and the zero path.
    """
    t = np.asarray(time_grid, dtype=float)
    n = len(t)
    T = t[-1]
    t1 = t[e1] if 0 <= e1 < n else T + 1.0
    t2 = t[e2] if 0 <= e2 < n else T + 1.0
    xb1 = freeze_before_entry(x1, e1)
    xb2 = freeze_before_entry(x2, e2)
    return float(np.max(np.abs(xb1 - xb2)) + abs(t1 - t2))
