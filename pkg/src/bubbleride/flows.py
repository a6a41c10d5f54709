"""Per-cell measure flows summarised by mean, impact and fixed-level quantiles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cells import cell_means
from .metrics import grouped_quantiles, quantile_levels, w1_levels


@dataclass(frozen=True)
class MeasureFlow:
    """Conditional inventory and control laws per cell and grid step.

    ``mean_x`` is the cell mean of the inventory with players out of the
    game counted as 0 (divide by ``F_p(m)`` for the in-game mean), ``impact``
    the cell mean of ``rho(alpha)`` over players in the game, ``quantiles``
    the inventory law on fixed levels.
    """

    probs: np.ndarray      # (n_cells,)
    mean_x: np.ndarray     # (n_cells, n_steps + 1)
    impact: np.ndarray     # (n_cells, n_steps)
    quantiles: np.ndarray  # (n_cells, n_steps + 1, n_levels)
    levels: np.ndarray
    in_game: np.ndarray    # (n_cells, n_steps + 1) fraction of paths entered

    @property
    def n_cells(self) -> int:
        return self.mean_x.shape[0]

    def damp(self, new: "MeasureFlow", delta: float) -> "MeasureFlow":
        """``(1 - delta) * self + delta * new`` on every summarised functional."""
        if not 0 < delta <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if delta == 1:
            return new

        def mix(a, b):
            return (1.0 - delta) * a + delta * b

        return MeasureFlow(self.probs, mix(self.mean_x, new.mean_x), mix(self.impact, new.impact),
                           mix(self.quantiles, new.quantiles), self.levels,
                           mix(self.in_game, new.in_game))


def summarize_flows(X, entered, alpha, rho, weights, cell_of_path, n_cells: int,
                    probs, n_levels: int = 99) -> MeasureFlow:
    """Self-normalised weighted cell laws of the inventory and of ``rho(alpha)``.

    ``weights`` are running Girsanov weights, shape ``(n_paths, n_steps + 1)``;
    the control at step ``k`` uses the weight at ``k``.
    """
    n = X.shape[1] - 1
    levels = quantile_levels(n_levels)
    mean_x = cell_means(X, weights, cell_of_path, n_cells)
    rho_a = np.where(entered[:, :n], rho(alpha), 0.0)
    impact = cell_means(rho_a, weights[:, :n], cell_of_path, n_cells)
    frac = cell_means(entered.astype(float), 1.0, cell_of_path, n_cells)
    q = np.empty((n_cells, n + 1, len(levels)))
    for k in range(n + 1):
        q[:, k, :] = grouped_quantiles(X[:, k], weights[:, k], cell_of_path, n_cells, levels)
    return MeasureFlow(np.asarray(probs, dtype=float), mean_x, impact, q, levels, frac)


def flow_distance(a: MeasureFlow, b: MeasureFlow) -> float:
    """Probability-weighted sum over cells of ``sup_t [W1 + |d mean| + |d impact|]``."""
    w1 = w1_levels(a.quantiles, b.quantiles)                # (n_cells, n+1)
    dm = np.abs(a.mean_x - b.mean_x)
    di = np.zeros_like(dm)
    di[:, :-1] = np.abs(a.impact - b.impact)
    per_cell = np.max(w1 + dm + di, axis=1)
    return float(np.dot(a.probs, per_cell))
