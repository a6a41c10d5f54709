"""Bubble trend functions b(t, m, p).

Both families scale the current price by a growth rate that depends on the
fraction of players already in the game, ``F_p(m)``, where ``m`` is the
running maximum of the price.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class TrendError(ValueError):
    """Raised when a trend is evaluated outside its domain."""


@dataclass(frozen=True)
class ExponentialTrend:
    """Growth rate ``ell * F_p(m)``; ``ell`` is the peak growth rate."""

    ell: float
    kind = "exponential"

    def rate(self, t, in_game):
        return self.ell * np.asarray(in_game, dtype=float) + 0.0 * np.asarray(t, dtype=float)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "ell": self.ell}


@dataclass(frozen=True)
class LPPLTrend:
    """Log-periodic power law rate with critical time at the horizon.

    ``h_t = (t_c - t)^(ell_t - 1) * (A + C cos(omega ln(t_c - t) - phi))``
    with ``ell_t = ell * F_p(m)``. The rate is clamped below at zero so that
    the trend stays non-negative.
    """

    A: float
    C: float
    omega: float
    phi: float
    ell: float
    t_c: float | None = None
    kind = "lppl"

    def rate(self, t, in_game, t_c=None):
        t = np.asarray(t, dtype=float)
        tc = self.t_c if t_c is None else t_c
        if tc is None:
            raise TrendError("LPPL critical time is not set")
        gap = tc - t
        if np.any(gap <= 0):
            raise TrendError(f"LPPL trend is singular for t >= t_c = {tc}")
        expo = self.ell * np.asarray(in_game, dtype=float) - 1.0
        h = gap**expo * (self.A + self.C * np.cos(self.omega * np.log(gap) - self.phi))
        return np.maximum(h, 0.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "A": self.A, "C": self.C, "omega": self.omega,
                "phi": self.phi, "ell": self.ell}


BubbleTrend = ExponentialTrend | LPPLTrend


def trend_eval(trend: BubbleTrend, t, m, p, cdf, horizon: float | None = None):
    """Drift ``b(t, m, p)`` of the pre-burst price.

    ``cdf`` is the threshold CDF ``F_p`` (any vectorised callable). For the
    LPPL family the critical time defaults to ``horizon``.
    """
    in_game = cdf(np.asarray(m, dtype=float))
    if isinstance(trend, LPPLTrend):
        rate = trend.rate(t, in_game, t_c=trend.t_c if trend.t_c is not None else horizon)
    else:
        rate = trend.rate(t, in_game)
    return rate * np.asarray(p, dtype=float)


def trend_from_dict(d: dict) -> BubbleTrend:
    kind = d.get("kind")
    if kind == "exponential":
        return ExponentialTrend(ell=float(d["ell"]))
    if kind == "lppl":
        return LPPLTrend(A=float(d["A"]), C=float(d["C"]), omega=float(d["omega"]),
                         phi=float(d["phi"]), ell=float(d["ell"]))
    raise KeyError(f"unknown bubble_trend kind {kind!r}")
