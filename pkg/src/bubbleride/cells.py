"""Discretised common noise ``(V^N, D^N)``, the cell partition and cell-conditional laws."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    """The simulation grid does not refine the dyadic mesh."""


class DegenerateCellError(ValueError):
    """All weights in a cell are zero."""


def project_dyadic(x, level: int, base: int = 4):
    """``base^-N floor(base^N x)`` inside ``[-base^N, base^N]``, else ``base^N sign(x)``."""
    x = np.asarray(x, dtype=float)
    s = float(base) ** level
    return np.where(np.abs(x) <= s, np.floor(x * s) / s, s * np.sign(x))


def knot_stride(n_steps: int, level: int) -> int:
    n_knots = 2**level
    if n_steps % n_knots:
        raise GridError(f"n_steps={n_steps} does not refine the dyadic mesh of level {level}")
    return n_steps // n_knots


def build_V_N(B, level: int, base: int = 4) -> np.ndarray:
    """Knots ``v_0 = 0, v_i = v_{i-1} + Pi(B_{t_i} - B_{t_{i-1}})`` on ``t_i = i T / 2^N``.

    ``B`` holds paths on the full grid, shape ``(n_rows, n_steps + 1)``.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    stride = knot_stride(B.shape[1] - 1, level)
    incr = np.diff(B[:, ::stride], axis=1)
    v = np.zeros((B.shape[0], 2**level + 1))
    np.cumsum(project_dyadic(incr, level, base), axis=1, out=v[:, 1:])
    return v


def build_D_N(tau, horizon: float, level: int) -> np.ndarray:
    """Jump knots ``1{tau <= t_{i-1}}`` for ``i = 1..2^N``."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    starts = np.arange(2**level) * (horizon / 2**level)
    return (tau[:, None] <= starts[None, :]).astype(np.int64)


def _int_keys(V, D, level: int, base: int) -> np.ndarray:
    scale = float(base) ** level
    vi = np.rint(np.asarray(V) * scale).astype(np.int64)
    return np.concatenate([vi, np.asarray(D, dtype=np.int64)], axis=1)


def _first_seen_ids(keys: np.ndarray) -> tuple[np.ndarray, int]:
    if keys.shape[1] == 0:
        return np.zeros(keys.shape[0], dtype=np.int64), 1 if keys.shape[0] else 0
    _, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return rank[inv], len(first)


@dataclass(frozen=True)
class CellPartition:
    """Realised atoms of the sigma-algebra generated by ``(V^N, D^N)``.

    ``cell_of`` maps each common scenario to its cell; cells are numbered in
    first-seen order.
    """

    level: int
    base: int
    knot_times: np.ndarray
    stride: int
    V: np.ndarray
    D: np.ndarray
    cell_of: np.ndarray
    n_cells: int

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.cell_of, minlength=self.n_cells)

    @property
    def probs(self) -> np.ndarray:
        return self.counts / len(self.cell_of)

    def members(self, cell: int) -> np.ndarray:
        return np.flatnonzero(self.cell_of == cell)

    def prefix_ids(self, k: int) -> tuple[np.ndarray, list[bytes]]:
        """Cells of the knot prefix observed by grid step ``k`` (adapted grouping).

        Returns per-row group ids and the byte key of each group.
        """
        j = k // self.stride
        keys = _int_keys(self.V[:, : j + 1], self.D[:, : j + 1], self.level, self.base)
        ids, n = _first_seen_ids(keys)
        first = np.zeros(n, dtype=np.int64)
        first[ids[::-1]] = np.arange(len(ids))[::-1]
        return ids, [keys[i].tobytes() for i in first]

    def report(self) -> dict:
        return {"level": self.level, "cell_count": self.n_cells,
                "cells": [{"cell": int(c), "paths": int(n), "probability": float(p)}
                          for c, (n, p) in enumerate(zip(self.counts, self.probs))]}


def prefix_keys(V, D, level: int, base: int, stride: int, k: int) -> list[bytes]:
    """Byte keys of the knot prefixes observed by step ``k``, one per row."""
    j = k // stride
    keys = _int_keys(np.atleast_2d(V)[:, : j + 1], np.atleast_2d(D)[:, : j + 1], level, base)
    return [row.tobytes() for row in keys]


def partition_paths(V, D, level: int, base: int = 4, knot_times=None, stride: int = 1) -> CellPartition:
    V = np.atleast_2d(V)
    D = np.atleast_2d(D)
    ids, n = _first_seen_ids(_int_keys(V, D, level, base))
    if knot_times is None:
        knot_times = np.arange(V.shape[1], dtype=float)
    return CellPartition(level=level, base=base, knot_times=np.asarray(knot_times), stride=stride,
                         V=V, D=D, cell_of=ids, n_cells=n)


def partition_from_noise(B, tau, horizon: float, level: int, base: int = 4) -> CellPartition:
    B = np.atleast_2d(B)
    stride = knot_stride(B.shape[1] - 1, level)
    V = build_V_N(B, level, base)
    D = build_D_N(tau, horizon, level)
    times = np.linspace(0.0, horizon, 2**level + 1)
    return partition_paths(V, D, level, base, knot_times=times, stride=stride)


@dataclass(frozen=True)
class WeightedEmpirical:
    values: np.ndarray
    weights: np.ndarray  # normalised

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))


def conditional_law(cell_of_path, cell: int, samples, weights=None) -> WeightedEmpirical:
    """Self-normalised weighted empirical law of ``samples`` on the paths of ``cell``."""
    samples = np.asarray(samples, dtype=float)
    mask = np.asarray(cell_of_path) == cell
    w = np.ones(mask.sum()) if weights is None else np.asarray(weights, dtype=float)[mask]
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    total = w.sum()
    if not total > 0:
        raise DegenerateCellError(f"cell {cell} has no positive weight")
    return WeightedEmpirical(samples[mask], w / total)


def cell_means(values, weights, cell_of_path, n_cells: int) -> np.ndarray:
    """Self-normalised weighted means per cell; ``values``/``weights`` are ``(n_paths, ...)``."""
    values = np.asarray(values, dtype=float)
    weights = np.broadcast_to(np.asarray(weights, dtype=float), values.shape)
    num = np.zeros((n_cells,) + values.shape[1:])
    den = np.zeros_like(num)
    np.add.at(num, cell_of_path, weights * values)
    np.add.at(den, cell_of_path, weights)
    if np.any(den <= 0):
        bad = int(np.argwhere(den <= 0)[0][0])
        raise DegenerateCellError(f"cell {bad} has no positive weight")
    return num / den
