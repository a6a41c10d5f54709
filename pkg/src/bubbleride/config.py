"""Scenario configuration: model parameters, numerical knobs, validation and file I/O.

A scenario file is TOML with a ``schema`` tag. Nested tables describe the
parametric distributions and deterministic functions of time. Unknown keys are
rejected.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .trend import BubbleTrend, ExponentialTrend, LPPLTrend, TrendError, trend_eval

SCHEMA = "bubbleride-scenario/1"


class ScenarioError(ValueError):
    """Scenario file could not be parsed or does not match the schema."""


# --------------------------------------------------------------------------
# parametric building blocks


@dataclass(frozen=True)
class AffineInTime:
    """Deterministic function ``intercept + slope * t``."""

    intercept: float
    slope: float = 0.0

    def __call__(self, t):
        return self.intercept + self.slope * np.asarray(t, dtype=float)

    def bounds(self, horizon: float) -> tuple[float, float]:
        ends = (self.intercept, self.intercept + self.slope * horizon)
        return min(ends), max(ends)

    def to_dict(self) -> dict:
        return {"intercept": self.intercept, "slope": self.slope}


@dataclass(frozen=True)
class ExoIntensity(AffineInTime):
    """Hazard rate of the exogenous burst, optionally with a declared bound ``C_k``."""

    bound: float | None = None

    def to_dict(self) -> dict:
        d = super().to_dict()
        if self.bound is not None:
            d["bound"] = self.bound
        return d


@dataclass(frozen=True)
class InventoryThreshold:
    """``zeta_t = zeta0 + slope * t``."""

    zeta0: float
    slope: float = 0.0

    def __call__(self, t):
        return self.zeta0 + self.slope * np.asarray(t, dtype=float)

    def to_dict(self) -> dict:
        return {"zeta0": self.zeta0, "slope": self.slope}


@dataclass(frozen=True)
class LinearImpact:
    rho0: float
    kind = "linear"

    def __call__(self, a):
        return self.rho0 * np.asarray(a, dtype=float)

    def sample_grid(self, a_min: float, a_max: float) -> np.ndarray:
        return np.linspace(a_min, a_max, 65)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rho0": self.rho0}


@dataclass(frozen=True)
class TabulatedImpact:
    """Piecewise-linear interpolation of ``rho`` through the nodes ``(a, rho)``."""

    a: tuple[float, ...]
    rho: tuple[float, ...]
    kind = "table"

    def __call__(self, a):
        return np.interp(np.asarray(a, dtype=float), self.a, self.rho)

    def sample_grid(self, a_min: float, a_max: float) -> np.ndarray:
        nodes = np.asarray(self.a)
        return np.unique(np.clip(np.concatenate([nodes, [a_min, a_max]]), a_min, a_max))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": list(self.a), "rho": list(self.rho)}


PermImpact = LinearImpact | TabulatedImpact


@dataclass(frozen=True)
class ThresholdDistribution:
    """Entry thresholds: an atom of weight ``w0`` at ``P0`` plus a continuous part.

    ``kind`` selects the continuous part: ``"uniform"`` on ``(low, high)``,
    ``"shifted_exponential"`` (``P0 + Exp(scale)``) or ``"none"`` when
    ``w0 == 1``.
    """

    w0: float
    kind: str = "none"
    low: float | None = None
    high: float | None = None
    scale: float | None = None

    def _continuous_cdf(self, x, p0):
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return np.clip((x - self.low) / (self.high - self.low), 0.0, 1.0)
        if self.kind == "shifted_exponential":
            return np.where(x > p0, -np.expm1(-(x - p0) / self.scale), 0.0)
        return np.zeros_like(x)

    def cdf(self, x, p0: float):
        x = np.asarray(x, dtype=float)
        atom = np.where(x >= p0, self.w0, 0.0)
        return atom + (1.0 - self.w0) * self._continuous_cdf(x, p0)

    def ppf(self, u, p0: float):
        """Quantile function; ``u <= w0`` maps to the atom at ``P0``."""
        u = np.asarray(u, dtype=float)
        if self.kind == "none" or self.w0 >= 1.0:
            return np.full_like(u, p0)
        v = np.clip((u - self.w0) / (1.0 - self.w0), 0.0, 1.0)
        if self.kind == "uniform":
            cont = self.low + v * (self.high - self.low)
        else:
            cont = p0 - self.scale * np.log1p(-np.minimum(v, 1.0 - 1e-16))
        return np.where(u <= self.w0, p0, cont)

    def upper_quantile(self, p0: float, q: float = 0.99) -> float:
        return float(self.ppf(np.array([q]), p0)[0])

    def to_dict(self) -> dict:
        d = {"w0": self.w0, "kind": self.kind}
        for k in ("low", "high", "scale"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        return d


@dataclass(frozen=True)
class WealthDistribution:
    """Initial endowment ``K0``: ``normal(mean, std)`` or ``shift + lognormal(mu, s)``."""

    kind: str = "normal"
    mean_: float | None = None
    std: float | None = None
    shift: float | None = None
    mu: float | None = None
    s: float | None = None

    @property
    def mean(self) -> float:
        if self.kind == "normal":
            return float(self.mean_)
        return float(self.shift + math.exp(self.mu + 0.5 * self.s**2))

    def from_normal(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "normal":
            return self.mean_ + self.std * z
        return self.shift + np.exp(self.mu + self.s * z)

    def to_dict(self) -> dict:
        if self.kind == "normal":
            return {"kind": "normal", "mean": self.mean_, "std": self.std}
        return {"kind": self.kind, "shift": self.shift, "mu": self.mu, "s": self.s}


# --------------------------------------------------------------------------
# the scenario


@dataclass(frozen=True)
class ScenarioConfig:
    horizon_T: float
    price_init_P0: float
    sigma0: float
    sigma: float
    action_interval_A: tuple[float, float]
    temp_impact_lambda: float
    perm_impact: PermImpact
    running_penalty_phi: float
    terminal_penalty_c: float
    burst_size_beta: AffineInTime
    inventory_threshold_zeta: InventoryThreshold
    exo_intensity_k: ExoIntensity
    dist_thresholds_nu_p: ThresholdDistribution
    dist_wealth_nu_K: WealthDistribution
    bubble_trend: BubbleTrend
    n_steps: int = 100
    n_paths: int = 2000
    n_players: int = 100
    idio_per_common: int = 1
    dyadic_level: int = 1
    space_grid_exponent: int = 4
    regression_degree: int = 2
    regression_scope: str = "pooled"
    z_estimator: str = "gradient"
    damping_delta: float = 0.5
    fp_tolerance: float = 1e-3
    fp_max_iter: int = 20
    master_seed: int = 0
    impact_normalization: str = "in_game"
    quantile_levels: int = 99
    trend_growth_bound: float = 1e3

    # -- derived quantities
    @property
    def dt(self) -> float:
        return self.horizon_T / self.n_steps

    @property
    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon_T, self.n_steps + 1)

    @property
    def n_common(self) -> int:
        return self.n_paths // self.idio_per_common

    @property
    def a_min(self) -> float:
        return self.action_interval_A[0]

    @property
    def a_max(self) -> float:
        return self.action_interval_A[1]

    def threshold_cdf(self, x):
        return self.dist_thresholds_nu_p.cdf(x, self.price_init_P0)

    def trend(self, t, m, p, cdf=None):
        return trend_eval(self.bubble_trend, t, m, p, cdf or self.threshold_cdf,
                          horizon=self.horizon_T)

    def rho(self, a):
        return self.perm_impact(a)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return config_to_dict(self)

    def digest(self) -> str:
        blob = json.dumps(config_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "\n".join(f"{v.code}: {v.message}" for v in self.violations)


def _finite(*xs) -> bool:
    return all(x is not None and math.isfinite(x) for x in xs)


def _trend_grid(cfg: ScenarioConfig):
    n_t = min(cfg.n_steps, 40)
    t = np.linspace(0.0, cfg.horizon_T - cfg.dt, n_t)
    p0 = cfg.price_init_P0
    m_hi = max(4.0 * p0, 1.5 * cfg.dist_thresholds_nu_p.upper_quantile(p0))
    m = np.linspace(p0, m_hi, 33)
    p = np.linspace(0.0, m_hi, 33)
    return np.meshgrid(t, m, p, indexing="ij")


def _check_trend(cfg: ScenarioConfig, out: list[Violation]) -> None:
    tr = cfg.bubble_trend
    if isinstance(tr, ExponentialTrend):
        if not (_finite(tr.ell) and tr.ell >= 0):
            out.append(Violation("trend_params", "exponential trend needs ell >= 0"))
            return
    else:
        if not (_finite(tr.A, tr.C, tr.omega, tr.phi, tr.ell) and 0 < tr.ell < 1):
            out.append(Violation("trend_params", "LPPL trend needs finite parameters and ell in (0, 1)"))
            return
    try:
        T, M, P = _trend_grid(cfg)
        b = cfg.trend(T, M, P)
    except (TrendError, FloatingPointError, ValueError) as exc:
        out.append(Violation("trend_params", f"trend evaluation failed: {exc}"))
        return
    scale = 1e-12 * (1.0 + np.abs(b))
    dm = np.diff(b, axis=1)
    dp = np.diff(b, axis=2)
    if np.any(b < 0) or np.any(dm < -scale[:, 1:, :]) or np.any(dp < -scale[:, :, 1:]):
        out.append(Violation("trend_monotone",
                             "bubble trend must be non-negative and nondecreasing in (m, p) on the sample grid"))
    if np.any(np.abs(b) > cfg.trend_growth_bound * (1.0 + np.maximum(M, np.abs(P)))):
        out.append(Violation("trend_growth", "|b(t, m, p)| exceeds trend_growth_bound * (1 + max(m, |p|))"))


def validate(cfg: ScenarioConfig) -> ValidationReport:
    """Return every violated constraint (empty report means valid). Pure."""
    out: list[Violation] = []
    T = cfg.horizon_T
    if not (_finite(T) and T > 0):
        out.append(Violation("horizon", "horizon_T must be positive"))
        return ValidationReport(tuple(out))
    if cfg.n_steps < 1:
        out.append(Violation("n_steps", "n_steps must be >= 1"))
    if cfg.n_paths < 1:
        out.append(Violation("n_paths", "n_paths must be >= 1"))
    if cfg.n_players < 1:
        out.append(Violation("n_players", "n_players must be >= 1"))
    if cfg.idio_per_common < 1 or (cfg.n_paths >= 1 and cfg.n_paths % cfg.idio_per_common):
        out.append(Violation("idio_per_common", "idio_per_common must be >= 1 and divide n_paths"))
    if cfg.dyadic_level < 0 or (cfg.n_steps >= 1 and cfg.n_steps % (2**cfg.dyadic_level)):
        out.append(Violation("dyadic_grid", "n_steps must be a multiple of 2**dyadic_level"))
    if cfg.space_grid_exponent < 2:
        out.append(Violation("space_grid", "space_grid_exponent must be an integer >= 2"))
    p0 = cfg.price_init_P0
    if not (_finite(p0) and p0 > 0):
        out.append(Violation("price_init", "price_init_P0 must be positive"))
        return ValidationReport(tuple(out))
    if not (_finite(cfg.sigma0) and cfg.sigma0 >= 0):
        out.append(Violation("sigma0", "sigma0 must be >= 0"))
    if not (_finite(cfg.sigma) and cfg.sigma > 0):
        out.append(Violation("sigma", "sigma must be positive"))
    a_min, a_max = cfg.action_interval_A
    if not (_finite(a_min, a_max) and a_min <= 0 <= a_max and a_min < a_max):
        out.append(Violation("action_interval", "A must be a compact interval [a_min, a_max] containing 0"))
    if not (_finite(cfg.temp_impact_lambda) and cfg.temp_impact_lambda > 0):
        out.append(Violation("temp_impact", "temp_impact_lambda must be positive"))
    if not (_finite(cfg.running_penalty_phi) and cfg.running_penalty_phi > 0):
        out.append(Violation("running_penalty", "running_penalty_phi must be positive"))
    if not (_finite(cfg.terminal_penalty_c) and cfg.terminal_penalty_c > 0):
        out.append(Violation("terminal_penalty", "terminal_penalty_c must be positive"))

    rho = cfg.perm_impact
    if isinstance(rho, TabulatedImpact):
        nodes = np.asarray(rho.a)
        if (len(rho.a) != len(rho.rho) or len(rho.a) < 2 or np.any(np.diff(nodes) <= 0)
                or (_finite(a_min, a_max) and (nodes[0] > a_min or nodes[-1] < a_max))):
            out.append(Violation("perm_impact_domain",
                                 "tabulated rho needs increasing nodes covering A"))
    if _finite(a_min, a_max) and a_min < a_max and "perm_impact_domain" not in [v.code for v in out]:
        grid = rho.sample_grid(a_min, a_max)
        vals = rho(grid)
        slopes = np.diff(vals) / np.diff(grid)
        if not np.all(np.isfinite(vals)) or np.any(np.diff(slopes) > 1e-12 * (1 + np.abs(slopes[1:]))):
            out.append(Violation("perm_impact_concave", "permanent impact rho must be concave on A"))

    lo, hi = cfg.burst_size_beta.bounds(T)
    if not (_finite(lo, hi) and lo > 0):
        out.append(Violation("beta_positive", "burst size beta must be strictly positive and bounded on [0, T]"))

    nu_k = cfg.dist_wealth_nu_K
    nu_k_ok = (nu_k.kind == "normal" and _finite(nu_k.mean_, nu_k.std) and nu_k.std >= 0) or (
        nu_k.kind == "lognormal_shifted" and _finite(nu_k.shift, nu_k.mu, nu_k.s) and nu_k.s >= 0)
    if not nu_k_ok:
        out.append(Violation("nu_k_params", "nu_K must be normal(mean, std>=0) or lognormal_shifted(shift, mu, s>=0)"))
    zeta = cfg.inventory_threshold_zeta
    if nu_k_ok:
        upper = nu_k.mean / p0
        if not (_finite(zeta.zeta0) and 0 < zeta.zeta0 < upper):
            out.append(Violation("zeta0_range", "zeta0 not in (0, E[K0]/P0)"))
    if not (_finite(zeta.slope) and zeta.slope >= 0):
        out.append(Violation("zeta_slope", "zeta slope must be >= 0"))

    k = cfg.exo_intensity_k
    k_lo, k_hi = k.bounds(T)
    bound_ok = k.bound is None or (_finite(k.bound) and k_hi <= k.bound)
    if not (_finite(k_lo, k_hi) and k_lo >= 0 and bound_ok):
        out.append(Violation("exo_intensity", "intensity k must be non-negative and bounded by C_k on [0, T]"))

    nu_p = cfg.dist_thresholds_nu_p
    if not (_finite(nu_p.w0) and nu_p.w0 > 0):
        out.append(Violation("nu_p_atom", "nu_p atom at P0 must be positive"))
    support_ok = _finite(nu_p.w0) and nu_p.w0 <= 1
    if nu_p.kind == "uniform":
        support_ok &= _finite(nu_p.low, nu_p.high) and p0 <= nu_p.low < nu_p.high
    elif nu_p.kind == "shifted_exponential":
        support_ok &= _finite(nu_p.scale) and nu_p.scale > 0
    elif nu_p.kind == "none":
        support_ok &= nu_p.w0 == 1
    else:
        support_ok = False
    if not support_ok:
        out.append(Violation("nu_p_support", "continuous part of nu_p must live on (P0, inf) with w0 <= 1"))

    if support_ok and "nu_p_atom" not in [v.code for v in out]:
        _check_trend(cfg, out)

    if cfg.regression_degree < 1:
        out.append(Violation("regression_degree", "regression_degree must be >= 1"))
    if cfg.regression_scope not in ("pooled", "cell"):
        out.append(Violation("regression_scope", "regression_scope must be 'pooled' or 'cell'"))
    if cfg.z_estimator not in ("gradient", "increment"):
        out.append(Violation("z_estimator", "z_estimator must be 'gradient' or 'increment'"))
    if not (_finite(cfg.damping_delta) and 0 < cfg.damping_delta <= 1):
        out.append(Violation("damping", "damping_delta must lie in (0, 1]"))
    if not (_finite(cfg.fp_tolerance) and cfg.fp_tolerance > 0):
        out.append(Violation("fp_tolerance", "fp_tolerance must be positive"))
    if cfg.fp_max_iter < 0:
        out.append(Violation("fp_max_iter", "fp_max_iter must be >= 0"))
    if cfg.impact_normalization not in ("in_game", "population"):
        out.append(Violation("impact_normalization", "impact_normalization must be 'in_game' or 'population'"))
    if cfg.quantile_levels < 1:
        out.append(Violation("quantile_levels", "quantile_levels must be >= 1"))
    return ValidationReport(tuple(out))


# --------------------------------------------------------------------------
# serialisation

_REQUIRED = (
    "horizon_T", "price_init_P0", "sigma0", "sigma", "action_interval_A",
    "temp_impact_lambda", "perm_impact", "running_penalty_phi", "terminal_penalty_c",
    "burst_size_beta", "inventory_threshold_zeta", "exo_intensity_k",
    "dist_thresholds_nu_p", "dist_wealth_nu_K", "bubble_trend",
)
_DEFAULTS = {f.name: f.default for f in dataclasses.fields(ScenarioConfig)
             if f.default is not dataclasses.MISSING}
_INT_FIELDS = {"n_steps", "n_paths", "n_players", "idio_per_common", "dyadic_level",
               "space_grid_exponent", "regression_degree", "fp_max_iter", "master_seed",
               "quantile_levels"}
_STR_FIELDS = {"regression_scope", "z_estimator", "impact_normalization"}


def config_to_dict(cfg: ScenarioConfig) -> dict:
    d: dict = {"schema": SCHEMA}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if hasattr(v, "to_dict"):
            v = v.to_dict()
        elif isinstance(v, tuple):
            v = list(v)
        d[f.name] = v
    return d


def _num(name: str, v, integer: bool = False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"field {name!r}: expected a number, got {v!r}")
    if integer:
        if isinstance(v, float) and not v.is_integer():
            raise ScenarioError(f"field {name!r}: expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _table(name: str, v, allowed: set[str], required: set[str]) -> dict:
    if not isinstance(v, dict):
        raise ScenarioError(f"field {name!r}: expected a table, got {v!r}")
    unknown = set(v) - allowed
    if unknown:
        raise ScenarioError(f"field {name!r}: unknown keys {sorted(unknown)}")
    missing = required - set(v)
    if missing:
        raise ScenarioError(f"field {name!r}: missing keys {sorted(missing)}")
    return v


def _affine(name: str, v, cls=AffineInTime):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return cls(float(v))
    extra = {"bound"} if cls is ExoIntensity else set()
    t = _table(name, v, {"intercept", "slope"} | extra, {"intercept"})
    kw = {"intercept": _num(f"{name}.intercept", t["intercept"]),
          "slope": _num(f"{name}.slope", t.get("slope", 0.0))}
    if "bound" in t:
        kw["bound"] = _num(f"{name}.bound", t["bound"])
    return cls(**kw)


def _parse_field(name: str, v):
    if name == "action_interval_A":
        if not isinstance(v, list) or len(v) != 2:
            raise ScenarioError("field 'action_interval_A': expected [a_min, a_max]")
        return (_num("action_interval_A[0]", v[0]), _num("action_interval_A[1]", v[1]))
    if name == "perm_impact":
        if not isinstance(v, dict):
            raise ScenarioError("field 'perm_impact': expected a table")
        if v.get("kind") == "linear":
            t = _table(name, v, {"kind", "rho0"}, {"rho0"})
            return LinearImpact(_num("perm_impact.rho0", t["rho0"]))
        if v.get("kind") == "table":
            t = _table(name, v, {"kind", "a", "rho"}, {"a", "rho"})
            return TabulatedImpact(tuple(_num("perm_impact.a", x) for x in t["a"]),
                                   tuple(_num("perm_impact.rho", x) for x in t["rho"]))
        raise ScenarioError(f"field 'perm_impact.kind': unknown kind {v.get('kind')!r}")
    if name == "burst_size_beta":
        return _affine(name, v)
    if name == "exo_intensity_k":
        return _affine(name, v, ExoIntensity)
    if name == "inventory_threshold_zeta":
        t = _table(name, v, {"zeta0", "slope"}, {"zeta0"})
        return InventoryThreshold(_num("inventory_threshold_zeta.zeta0", t["zeta0"]),
                                  _num("inventory_threshold_zeta.slope", t.get("slope", 0.0)))
    if name == "dist_thresholds_nu_p":
        t = _table(name, v, {"w0", "kind", "low", "high", "scale"}, {"w0"})
        kind = t.get("kind", "none")
        if kind not in ("none", "uniform", "shifted_exponential"):
            raise ScenarioError(f"field 'dist_thresholds_nu_p.kind': unknown kind {kind!r}")
        kw = {k: _num(f"{name}.{k}", t[k]) for k in ("w0", "low", "high", "scale") if k in t}
        return ThresholdDistribution(kind=kind, **kw)
    if name == "dist_wealth_nu_K":
        if not isinstance(v, dict):
            raise ScenarioError("field 'dist_wealth_nu_K': expected a table")
        kind = v.get("kind", "normal")
        if kind == "normal":
            t = _table(name, v, {"kind", "mean", "std"}, {"mean", "std"})
            return WealthDistribution("normal", mean_=_num(f"{name}.mean", t["mean"]),
                                      std=_num(f"{name}.std", t["std"]))
        if kind == "lognormal_shifted":
            t = _table(name, v, {"kind", "shift", "mu", "s"}, {"shift", "mu", "s"})
            return WealthDistribution(kind, shift=_num(f"{name}.shift", t["shift"]),
                                      mu=_num(f"{name}.mu", t["mu"]), s=_num(f"{name}.s", t["s"]))
        raise ScenarioError(f"field 'dist_wealth_nu_K.kind': unknown kind {kind!r}")
    if name == "bubble_trend":
        if not isinstance(v, dict):
            raise ScenarioError("field 'bubble_trend': expected a table")
        kind = v.get("kind")
        if kind == "exponential":
            t = _table(name, v, {"kind", "ell"}, {"ell"})
            return ExponentialTrend(_num("bubble_trend.ell", t["ell"]))
        if kind == "lppl":
            keys = {"A", "C", "omega", "phi", "ell"}
            t = _table(name, v, keys | {"kind"}, keys)
            return LPPLTrend(**{k: _num(f"bubble_trend.{k}", t[k]) for k in sorted(keys)})
        raise ScenarioError(f"field 'bubble_trend.kind': unknown kind {kind!r}")
    if name in _INT_FIELDS:
        return _num(name, v, integer=True)
    if name in _STR_FIELDS:
        if not isinstance(v, str):
            raise ScenarioError(f"field {name!r}: expected a string, got {v!r}")
        return v
    return _num(name, v)


def config_from_dict(d: dict) -> ScenarioConfig:
    d = dict(d)
    schema = d.pop("schema", None)
    if schema is None:
        raise ScenarioError("missing required field 'schema'")
    if schema != SCHEMA:
        raise ScenarioError(f"schema version mismatch: expected {SCHEMA!r}, got {schema!r}")
    known = set(_REQUIRED) | set(_DEFAULTS)
    unknown = sorted(set(d) - known)
    if unknown:
        raise ScenarioError(f"unknown keys {unknown}")
    for name in _REQUIRED:
        if name not in d:
            raise ScenarioError(f"missing required field {name!r}")
    kwargs = {name: _parse_field(name, v) for name, v in d.items()}
    return ScenarioConfig(**kwargs)


def loads_scenario(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"parse error: {exc}") from exc
    return config_from_dict(data)


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    try:
        return loads_scenario(text)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def dumps_scenario(cfg: ScenarioConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def save_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dumps_scenario(cfg))


def shipped_scenario(name: str) -> Path:
    """Path of a scenario file bundled with the package (``lq``, ``interactions_off``, ...)."""
    from importlib import resources

    return Path(str(resources.files("bubbleride") / "scenarios" / f"{name}.toml"))
