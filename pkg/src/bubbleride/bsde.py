"""Backward regression Monte Carlo for the representative agent's BSDE.

The BSDE is solved under the reference measure, where the inventory is the
uncontrolled ``K0/p* + sigma (W - W_entry)``. At each step the next value is
regressed on an augmented basis ``[phi, dW phi, (dW^2 - dt) phi, dB phi]`` of
state features ``phi``: the ``phi`` block gives the conditional expectation
and the ``dW phi`` block the increment estimate of ``Z``. The default
gradient estimate is ``sigma`` times the inventory derivative of the fitted
conditional expectation, which has far lower variance in small groups. Paths are grouped by the burst
indicator, so the jump of the exogenous burst is captured by conditioning
rather than by an explicit jump integrand.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import combinations_with_replacement

import numpy as np

from .config import ScenarioConfig
from .costs import CostParams, hamiltonian_argmin, minimized_hamiltonian_pre, terminal_cost_g
from .ensemble import (Environment, PathEnsemble, compute_entries, cut_at_burst,
                       reference_inventory, resolve_environment)
from .flows import MeasureFlow

RIDGE_PENALTY = 1e-8
COND_LIMIT = 1e10
_VAR_TOL = 1e-12


@dataclass(frozen=True)
class FeatureMap:
    """Polynomial basis of total degree ``degree`` in standardised ``(X, P, m, gamma)``.

    Columns with (near) zero variance in the training group are dropped. The
    burst charge ``beta gamma X`` at the burst enters linearly when it varies.
    """

    center: np.ndarray
    scale: np.ndarray
    keep: np.ndarray
    degree: int
    charge_center: float | None = None
    charge_scale: float | None = None

    @classmethod
    def fit(cls, raw: np.ndarray, charge: np.ndarray | None, degree: int) -> "FeatureMap":
        center = raw.mean(axis=0)
        scale = raw.std(axis=0)
        keep = scale > _VAR_TOL * (1.0 + np.abs(center))
        cc = cs = None
        if charge is not None:
            s = charge.std()
            if s > _VAR_TOL * (1.0 + abs(charge.mean())):
                cc, cs = float(charge.mean()), float(s)
        return cls(center, np.where(keep, scale, 1.0), keep, degree, cc, cs)

    @property
    def terms(self) -> list[tuple[int, ...]]:
        idx = list(np.flatnonzero(self.keep))
        out: list[tuple[int, ...]] = [()]
        for d in range(1, self.degree + 1):
            out.extend(combinations_with_replacement(idx, d))
        return out

    @property
    def n_columns(self) -> int:
        return len(self.terms) + (self.charge_center is not None)

    def __call__(self, raw: np.ndarray, charge: np.ndarray | None = None) -> np.ndarray:
        z = (raw - self.center) / self.scale
        cols = [np.prod(z[:, list(t)], axis=1) if t else np.ones(len(z)) for t in self.terms]
        if self.charge_center is not None:
            ch = np.zeros(len(z)) if charge is None else charge
            cols.append((ch - self.charge_center) / self.charge_scale)
        return np.column_stack(cols)


def n_terms(n_vars: int, degree: int) -> int:
    from math import comb

    return comb(n_vars + degree, degree)


@dataclass(frozen=True)
class StepFit:
    fmap: FeatureMap
    z_coef: np.ndarray
    cont_coef: np.ndarray
    n: int
    r2: float
    cond: float
    ridge: bool

    def predict_z(self, raw, charge) -> np.ndarray:
        return self.fmap(raw, charge) @ self.z_coef


def _augmented(phi, dw, db, dt):
    blocks = [phi, dw[:, None] * phi, (dw**2 - dt)[:, None] * phi]
    if db is not None:
        blocks.append(db[:, None] * phi)
    return np.hstack(blocks)


def least_squares(M: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float, bool]:
    """Least squares with a ridge fallback when the design is ill conditioned.

    Returns ``(coef, condition_number, ridge_used)``.
    """
    s = np.linalg.svd(M, compute_uv=False)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else np.inf
    if M.shape[0] >= M.shape[1] and cond < COND_LIMIT:
        coef = np.linalg.lstsq(M, y, rcond=None)[0]
        return coef, cond, False
    G = M.T @ M
    pen = RIDGE_PENALTY * max(np.trace(G), 1e-300) / G.shape[0]
    coef = np.linalg.solve(G + pen * np.eye(G.shape[0]), M.T @ y)
    return coef, cond, True


def _gradient_coef(fmap: FeatureMap, cont_coef: np.ndarray, sigma: float) -> np.ndarray:
    """Coefficients of ``sigma d/dX`` of ``phi @ cont_coef`` in the same basis."""
    z = np.zeros_like(cont_coef)
    if not fmap.keep[0]:
        return z
    terms = fmap.terms
    pos = {t: i for i, t in enumerate(terms)}
    for i, t in enumerate(terms):
        c = t.count(0)
        if c:
            low = list(t)
            low.remove(0)
            z[pos[tuple(low)]] += sigma * cont_coef[i] * c / fmap.scale[0]
    return z


def _fit_group(raw, charge, dw, db, dt, y, degree, sigma=1.0, estimator="gradient") -> StepFit:
    n = len(y)
    fmap = FeatureMap.fit(raw, charge, degree)
    # the common-noise block is a control variate with zero conditional mean
    # only across many scenarios; within a few it is collinear with the basis
    if db is not None and np.unique(db).size < 2 * fmap.n_columns:
        db = None
    n_blocks = 3 + (db is not None)
    # lower the degree until the group has at least two rows per column
    while fmap.degree > 0 and n < 2 * n_blocks * fmap.n_columns:
        fmap = replace(fmap, degree=fmap.degree - 1)
    phi = fmap(raw, charge)
    p = phi.shape[1]
    M = _augmented(phi, dw, db, dt)
    coef, cond, ridge = least_squares(M, y)
    resid = y - M @ coef
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else 1.0
    cont = coef[:p]
    z = _gradient_coef(fmap, cont, sigma) if estimator == "gradient" else coef[p:2 * p]
    return StepFit(fmap, z, cont, n, r2, cond, ridge)


@dataclass(frozen=True)
class ControlField:
    """Feedback strategy: per step, regression maps from features to ``a(Z)``.

    ``fits[k]`` is keyed by ``(burst_flag, prefix)``; ``prefix`` is ``None``
    for groups pooled over cells. Queries fall back from the cell group to
    the pooled group of the same burst flag, then to the other flag, then to
    ``Z = 0``.
    """

    cp: CostParams
    fits: tuple[dict, ...]

    @property
    def n_steps(self) -> int:
        return len(self.fits)

    @classmethod
    def zero(cls, cp: CostParams, n_steps: int) -> "ControlField":
        return cls(cp, tuple({} for _ in range(n_steps)))

    def z(self, k, X, P, m, gamma, flag, charge, prefix=None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        raw = np.column_stack([X, np.broadcast_to(P, X.shape), np.broadcast_to(m, X.shape),
                               np.broadcast_to(gamma, X.shape)])
        flag = np.broadcast_to(np.asarray(flag, dtype=bool), X.shape)
        charge = np.broadcast_to(np.asarray(charge, dtype=float), X.shape)
        fits = self.fits[k]
        out = np.zeros(X.shape)
        todo = np.ones(X.shape, dtype=bool)
        if prefix is not None and fits:
            keys = [(bool(f), pk) for f, pk in zip(flag, prefix)]
            for key in set(keys):
                if key in fits:
                    sel = np.array([kk == key for kk in keys])
                    out[sel] = fits[key].predict_z(raw[sel], charge[sel])
                    todo &= ~sel
        for f in (False, True):
            for key in ((f, None), (not f, None)):
                sel = todo & (flag == f)
                if np.any(sel) and key in fits:
                    out[sel] = fits[key].predict_z(raw[sel], charge[sel])
                    todo &= ~sel
        return out

    def act(self, k, X, P, m, gamma, flag, charge, entered, prefix=None) -> np.ndarray:
        a = hamiltonian_argmin(self.z(k, X, P, m, gamma, flag, charge, prefix), self.cp)
        return np.where(entered, a, 0.0)

    def to_arrays(self) -> dict[str, np.ndarray]:
        """Flat name -> array mapping (for ``.npz`` files)."""
        out = {"cost_params": np.array([self.cp.lam, self.cp.phi, self.cp.c, self.cp.a_min,
                                        self.cp.a_max, self.cp.sigma]),
               "n_steps": np.array(self.n_steps)}
        for k, fits in enumerate(self.fits):
            for j, ((flag, prefix), fit) in enumerate(fits.items()):
                fm = fit.fmap
                name = f"k{k:04d}_g{j:03d}"
                out[f"{name}_flag"] = np.array(int(flag))
                out[f"{name}_prefix"] = np.frombuffer(prefix or b"", dtype=np.uint8)
                out[f"{name}_pooled"] = np.array(int(prefix is None))
                out[f"{name}_center"] = fm.center
                out[f"{name}_scale"] = fm.scale
                out[f"{name}_keep"] = fm.keep.astype(np.int8)
                out[f"{name}_degree"] = np.array(fm.degree)
                out[f"{name}_charge"] = np.array([np.nan if fm.charge_center is None else fm.charge_center,
                                                  np.nan if fm.charge_scale is None else fm.charge_scale])
                out[f"{name}_z"] = fit.z_coef
                out[f"{name}_cont"] = fit.cont_coef
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "ControlField":
        cp = CostParams(*[float(v) for v in arrays["cost_params"]])
        fits: list[dict] = [dict() for _ in range(int(arrays["n_steps"]))]
        for key in sorted(k[:-5] for k in arrays if k.endswith("_flag")):
            k = int(key[1:5])
            ch = arrays[f"{key}_charge"]
            fm = FeatureMap(arrays[f"{key}_center"], arrays[f"{key}_scale"],
                            arrays[f"{key}_keep"].astype(bool), int(arrays[f"{key}_degree"]),
                            None if np.isnan(ch[0]) else float(ch[0]),
                            None if np.isnan(ch[1]) else float(ch[1]))
            prefix = None if int(arrays[f"{key}_pooled"]) else arrays[f"{key}_prefix"].tobytes()
            fits[k][(bool(arrays[f"{key}_flag"]), prefix)] = StepFit(
                fm, arrays[f"{key}_z"], arrays[f"{key}_cont"], 0, np.nan, np.nan, False)
        return cls(cp, tuple(fits))


@dataclass(frozen=True)
class BsdeSolution:
    Y: np.ndarray       # (n_paths, n_steps + 1)
    Z: np.ndarray       # (n_paths, n_steps)
    alpha: np.ndarray   # (n_paths, n_steps)
    env: Environment
    fits: tuple[dict, ...]
    diagnostics: list[dict] = field(default_factory=list)
    cp: CostParams | None = None

    @property
    def ridge_steps(self) -> list[int]:
        return sorted({d["step"] for d in self.diagnostics if d["ridge"]})

    def diagnostics_report(self) -> dict:
        return {"steps": self.diagnostics, "ridge_steps": self.ridge_steps}


@dataclass(frozen=True)
class PathState:
    """Per-path environment view at every grid step (rows = paths)."""

    P: np.ndarray
    m: np.ndarray
    gamma: np.ndarray
    flag: np.ndarray
    charge: np.ndarray   # burst charge known once the burst happened
    m_b: np.ndarray      # trend drift value per step (pre-burst cost term)
    rho_bar: np.ndarray  # impact per step (post-burst cost term)
    eta: np.ndarray      # burst step per path
    g: np.ndarray        # terminal cost per path


def path_state(cfg: ScenarioConfig, ens: PathEnsemble, env: Environment, X=None) -> PathState:
    ci = ens.common_index
    X = ens.X if X is None else X
    price = env.price
    n = ens.n_steps
    rows = np.arange(len(ci))
    eta = env.burst_step[ci]
    e = np.minimum(eta, n)
    beta_eta = cfg.burst_size_beta(cfg.time_grid[e])
    gamma_eta = price.gamma[ci, e]
    x_eta = X[rows, e]
    flag = price.burst_flags()[ci]
    charge_full = beta_eta * gamma_eta * x_eta
    cp = CostParams.from_config(cfg)
    g = terminal_cost_g(X[:, n], x_eta, beta_eta, gamma_eta, cp)
    return PathState(P=price.p[ci], m=price.m[ci], gamma=price.gamma[ci], flag=flag,
                     charge=np.where(flag, charge_full[:, None], 0.0),
                     m_b=ens.pre.drift[ci], rho_bar=env.rho_bar[ci], eta=eta, g=g)


def _raw(X, st: PathState, k, idx):
    return np.column_stack([X[idx, k], st.P[idx, k], st.m[idx, k], st.gamma[idx, k]])


def solve_bsde(cfg: ScenarioConfig, ens: PathEnsemble, flows: MeasureFlow | None = None,
               env: Environment | None = None, scope: str | None = None) -> BsdeSolution:
    """Backward induction from ``Y_T = g`` on the paths' reference states.

    Pass either the input measure flows or an already resolved environment.
    """
    if env is None:
        if flows is None:
            raise ValueError("solve_bsde needs flows or an environment")
        env = resolve_environment(ens, flows.mean_x, flows.impact)
    ens = cut_at_burst(ens, env)
    scope = cfg.regression_scope if scope is None else scope
    cp = CostParams.from_config(cfg)
    st = path_state(cfg, ens, env)
    n, dt = ens.n_steps, cfg.dt
    X = ens.X
    dW = ens.noise.dW
    dB = ens.noise.dB[ens.common_index] if cfg.sigma0 > 0 else None
    entered = ens.entered
    Y = np.empty((ens.n_paths, n + 1))
    Z = np.zeros((ens.n_paths, n))
    Y[:, n] = st.g
    fits: list[dict] = [dict() for _ in range(n)]
    diags: list[dict] = []
    for k in range(n - 1, -1, -1):
        Y[:, k] = Y[:, k + 1]
        act = np.flatnonzero(entered[:, k])
        if act.size == 0:
            continue
        groups = _groups(ens, st, k, act, scope)
        for key, idx in groups:
            raw = _raw(X, st, k, idx)
            ch = st.charge[idx, k]
            fit = _fit_group(raw, ch if key[0] else None, dW[idx, k],
                             None if dB is None else dB[idx, k], dt, Y[idx, k + 1],
                             cfg.regression_degree, cfg.sigma, cfg.z_estimator)
            fits[k][key] = fit
            diags.append({"step": k, "group": [bool(key[0]), key[1] is not None], "n": fit.n,
                          "r2": fit.r2, "cond": fit.cond, "ridge": fit.ridge,
                          "degree": fit.fmap.degree})
            phi = fit.fmap(raw, ch)
            z = phi @ fit.z_coef
            cont = phi @ fit.cont_coef
            pre = ~st.flag[idx, k]
            h = minimized_hamiltonian_pre(X[idx, k], st.m_b[idx, k], st.rho_bar[idx, k], pre, z, cp)
            Z[idx, k] = z
            Y[idx, k] = cont + h * dt
    alpha = np.where(entered[:, :n], hamiltonian_argmin(Z, cp), 0.0)
    diags.sort(key=lambda d: (d["step"], d["group"]))
    return BsdeSolution(Y=Y, Z=Z, alpha=alpha, env=env, fits=tuple(fits), diagnostics=diags, cp=cp)


def _min_group(cfg: ScenarioConfig) -> int:
    blocks = 3 + (cfg.sigma0 > 0)
    return 2 * blocks * n_terms(4, cfg.regression_degree)


def _groups(ens: PathEnsemble, st: PathState, k: int, act: np.ndarray, scope: str):
    flag = st.flag[act, k]
    out = []
    for f in (False, True):
        sel = act[flag == f]
        if sel.size:
            out.append(((f, None), sel))
    if scope != "cell":
        return out
    ids, keys = ens.partition.prefix_ids(k)
    path_ids = ids[ens.common_index[act]]
    min_n = _min_group(ens.cfg)
    cell_groups = []
    for f in (False, True):
        for gid in np.unique(path_ids[flag == f]):
            sel = act[(flag == f) & (path_ids == gid)]
            if sel.size >= min_n:
                cell_groups.append(((f, keys[gid]), sel))
    return out + cell_groups if len(cell_groups) > 0 else out


def extract_control_field(solution: BsdeSolution, ensemble: PathEnsemble | None = None) -> ControlField:
    """Feedback control ``a(Z)`` as a function of features, per step and group.

    When the grouping is by cell, the pooled fits stay as fallbacks.
    """
    return ControlField(solution.cp, solution.fits)


def field_actions(field: ControlField, cfg: ScenarioConfig, ens: PathEnsemble, env: Environment,
                  X=None, scope: str | None = None) -> np.ndarray:
    """Actions of a control field on every path and step of an ensemble."""
    ens = cut_at_burst(ens, env)
    st = path_state(cfg, ens, env, X)
    X = ens.X if X is None else X
    scope = cfg.regression_scope if scope is None else scope
    n = ens.n_steps
    entered = ens.entered
    out = np.zeros((ens.n_paths, n))
    for k in range(n):
        out[:, k] = field.act(k, X[:, k], st.P[:, k], st.m[:, k], st.gamma[:, k],
                              st.flag[:, k], st.charge[:, k], entered[:, k],
                              step_prefix(ens, k, scope))
    return out


def step_prefix(ens: PathEnsemble, k: int, scope: str) -> list[bytes] | None:
    """Per-path cell-prefix keys at step ``k`` when grouping by cell."""
    if scope != "cell":
        return None
    ids, keys = ens.partition.prefix_ids(k)
    return [keys[i] for i in ids[ens.common_index]]


def _with_thresholds(cfg: ScenarioConfig, ens: PathEnsemble, thresholds) -> PathEnsemble:
    noise = replace(ens.noise, init_threshold=np.asarray(thresholds, dtype=float))
    entry = compute_entries(ens.pre.m, noise.init_threshold, noise.common_index)
    X = reference_inventory(noise.init_wealth / noise.init_threshold, entry, noise.dW, cfg.sigma)
    return replace(ens, noise=noise, entry_step=entry, X=X)


def solve_bsde_per_threshold(cfg: ScenarioConfig, ens: PathEnsemble, flows: MeasureFlow,
                             n_atoms: int = 4) -> dict:
    """Solve separately for each atom of a discretised threshold law.

    The law of ``p*`` is replaced by ``n_atoms`` atoms at the conditional
    medians of equal-probability bins (the atom at ``P0`` keeps its own
    mass). Every atom is solved on all paths with that threshold. Returns the
    atoms, their probabilities, per-atom mean ``Y_0`` and their mixture.
    """
    p0 = cfg.price_init_P0
    nu = cfg.dist_thresholds_nu_p
    w0 = min(nu.w0, 1.0)
    atoms, probs = [p0], [w0]
    if w0 < 1.0 and n_atoms > 1:
        edges = np.linspace(w0, 1.0, n_atoms)
        mids = 0.5 * (edges[:-1] + edges[1:])
        atoms += list(nu.ppf(mids, p0))
        probs += list(np.diff(edges))
    env = resolve_environment(ens, flows.mean_x, flows.impact)
    y0 = []
    for a in atoms:
        sub = _with_thresholds(cfg, ens, np.full(ens.n_paths, a))
        sol = solve_bsde(cfg, sub, env=env)
        y0.append(float(sol.Y[:, 0].mean()))
    return {"atoms": [float(a) for a in atoms], "probs": [float(p) for p in probs],
            "y0": y0, "mixture_y0": float(np.dot(probs, y0))}
