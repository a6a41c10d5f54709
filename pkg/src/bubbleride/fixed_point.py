"""The discretised fixed-point map on measure flows, damped iteration and exploitability."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bsde import (BsdeSolution, ControlField, extract_control_field, field_actions,
                   path_state, solve_bsde, step_prefix)
from .config import ScenarioConfig
from .costs import CostParams, running_cost_pre, terminal_cost_g
from .ensemble import (Environment, PathEnsemble, build_ensemble, cut_at_burst,
                       resolve_environment)
from .flows import MeasureFlow, flow_distance, summarize_flows
from .noise import NoiseBundle, StreamRole, resample_idiosyncratic, sample_noise


class WeightError(FloatingPointError):
    """A Girsanov weight is not finite."""


@dataclass(frozen=True)
class GirsanovWeights:
    terminal: np.ndarray  # (n_paths,)
    running: np.ndarray   # (n_paths, n_steps + 1), running[:, 0] == 1


def girsanov_weights(alpha, dW, sigma: float, dt: float) -> GirsanovWeights:
    """Discrete stochastic exponential ``exp(sum a dW / sigma - sum a^2 dt / (2 sigma^2))``."""
    alpha = np.asarray(alpha, dtype=float)
    incr = alpha * np.asarray(dW) / sigma - 0.5 * alpha**2 * dt / sigma**2
    log_w = np.zeros((alpha.shape[0], alpha.shape[1] + 1))
    np.cumsum(incr, axis=1, out=log_w[:, 1:])
    w = np.exp(log_w)
    bad = ~np.all(np.isfinite(w), axis=1)
    if np.any(bad):
        raise WeightError(f"non-finite Girsanov weight on path {int(np.flatnonzero(bad)[0])}")
    return GirsanovWeights(terminal=w[:, -1], running=w)


def initial_flows(ens: PathEnsemble) -> MeasureFlow:
    """Flows of the uncontrolled population (zero control, unit weights)."""
    n = ens.n_steps
    return summarize_flows(ens.X, ens.entered, np.zeros((ens.n_paths, n)), ens.cfg.rho,
                           np.ones((ens.n_paths, n + 1)), ens.cell_of_path,
                           ens.partition.n_cells, ens.partition.probs, ens.cfg.quantile_levels)


@dataclass(frozen=True)
class PhiOutput:
    flows: MeasureFlow
    residual: float
    solution: BsdeSolution
    field: ControlField
    weights: GirsanovWeights


def apply_Phi(flows: MeasureFlow, ens: PathEnsemble, cfg: ScenarioConfig | None = None) -> PhiOutput:
    """Flows in, best response, reweighted conditional laws out."""
    cfg = ens.cfg if cfg is None else cfg
    env = resolve_environment(ens, flows.mean_x, flows.impact)
    ens = cut_at_burst(ens, env)
    sol = solve_bsde(cfg, ens, env=env)
    fld = extract_control_field(sol, ens)
    w = girsanov_weights(sol.alpha, ens.noise.dW, cfg.sigma, cfg.dt)
    new = summarize_flows(ens.X, ens.entered, sol.alpha, cfg.rho, w.running, ens.cell_of_path,
                          ens.partition.n_cells, ens.partition.probs, cfg.quantile_levels)
    return PhiOutput(new, flow_distance(flows, new), sol, fld, w)


@dataclass
class FixedPointState:
    iteration: int
    flows: MeasureFlow
    residuals: list[float] = field(default_factory=list)
    delta: float = 0.5


@dataclass(frozen=True)
class Equilibrium:
    """Result of the damped iteration.

    ``input_flows`` are the flows the returned control field best-responds
    to; ``flows`` is their image under the map.
    """

    cfg: ScenarioConfig
    ensemble: PathEnsemble
    field: ControlField
    input_flows: MeasureFlow
    flows: MeasureFlow
    solution: BsdeSolution | None
    converged: bool
    residuals: list[float]
    best_iteration: int

    @property
    def env(self) -> Environment:
        return resolve_environment(self.ensemble, self.input_flows.mean_x, self.input_flows.impact)


def solve_equilibrium(cfg: ScenarioConfig, noise: NoiseBundle | None = None,
                      workers: int = 1, callback=None) -> Equilibrium:
    """Damped fixed-point iteration with common random numbers.

    The first update is undamped, later ones mix with weight ``damping_delta``.
    Stops when the residual drops below ``fp_tolerance``; otherwise returns
    the iterate with the smallest residual and ``converged=False``.
    """
    if not 0 < cfg.damping_delta <= 1:
        raise ValueError("damping_delta must lie in (0, 1]")
    noise = sample_noise(cfg, StreamRole.TRAINING, workers=workers) if noise is None else noise
    ens = build_ensemble(cfg, noise)
    state = FixedPointState(0, initial_flows(ens), delta=cfg.damping_delta)
    best: tuple[float, int, MeasureFlow, PhiOutput] | None = None
    converged = False
    for it in range(1, cfg.fp_max_iter + 1):
        out = apply_Phi(state.flows, ens, cfg)
        state.residuals.append(out.residual)
        state.iteration = it
        if callback is not None:
            callback(it, out.residual)
        if best is None or out.residual < best[0]:
            best = (out.residual, it, state.flows, out)
        if out.residual < cfg.fp_tolerance:
            converged = True
            break
        state.flows = out.flows if it == 1 else state.flows.damp(out.flows, state.delta)
    if best is None:
        cp = CostParams.from_config(cfg)
        return Equilibrium(cfg, ens, ControlField.zero(cp, cfg.n_steps), state.flows, state.flows,
                           None, False, [], 0)
    _, it_best, fin, out = best
    return Equilibrium(cfg, ens, out.field, fin, out.flows, out.solution, converged,
                       list(state.residuals), it_best)


# --------------------------------------------------------------------------
# objective evaluation and exploitability


def weak_objective(cfg: ScenarioConfig, ens: PathEnsemble, env: Environment, alpha) -> np.ndarray:
    """Per-path weak-formulation costs under the control ``alpha``.

    The state is the reference inventory; the control acts through Girsanov
    weights. The running cost at step ``k`` carries the weight ``L_{k+1}``
    and the terminal cost ``L_T``, which by the tower property has the same
    mean as ``L_T (g + sum f dt)`` and lower variance.
    """
    cp = CostParams.from_config(cfg)
    ens = cut_at_burst(ens, env)
    st = path_state(cfg, ens, env)
    n = ens.n_steps
    w = girsanov_weights(alpha, ens.noise.dW, cfg.sigma, cfg.dt)
    f = running_cost_pre(ens.X[:, :n], alpha, st.m_b, st.rho_bar, ~st.flag[:, :n], cp)
    f = np.where(ens.entered[:, :n], f, 0.0)
    return w.terminal * st.g + (w.running[:, 1:] * f).sum(axis=1) * cfg.dt


def strong_objective(cfg: ScenarioConfig, ens: PathEnsemble, env: Environment, field: ControlField,
                     shift: float = 0.0, scope: str | None = None) -> np.ndarray:
    """Per-path costs of a feedback field run on the controlled inventory.

    ``X_{k+1} = X_k + a_k dt + sigma dW_k`` with ``a_k`` the field's action at
    the controlled state, plus ``shift`` (clipped to ``A``). Sharing ``dW``
    across controls gives paired estimates with common random numbers.
    """
    cp = CostParams.from_config(cfg)
    ens = cut_at_burst(ens, env)
    st = path_state(cfg, ens, env)
    scope = cfg.regression_scope if scope is None else scope
    n, dt = ens.n_steps, cfg.dt
    rows = np.arange(ens.n_paths)
    e = np.minimum(st.eta, n)
    beta_eta = cfg.burst_size_beta(cfg.time_grid[e])
    gamma_eta = st.gamma[rows, e]
    beta_gamma = beta_eta * gamma_eta
    x0 = ens.noise.init_wealth / ens.noise.init_threshold
    entered = ens.entered
    X = np.zeros((ens.n_paths, n + 1))
    running = np.zeros(ens.n_paths)
    for k in range(n + 1):
        X[:, k] = np.where(ens.entry_step == k, x0, X[:, k])
        if k == n:
            break
        flag = st.flag[:, k]
        charge = np.where(flag, beta_gamma * X[rows, e], 0.0)
        a = field.act(k, X[:, k], st.P[:, k], st.m[:, k], st.gamma[:, k], flag, charge,
                      entered[:, k], step_prefix(ens, k, scope))
        a = np.where(entered[:, k], np.clip(a + shift, cp.a_min, cp.a_max), 0.0)
        f = running_cost_pre(X[:, k], a, st.m_b[:, k], st.rho_bar[:, k], ~flag, cp)
        running += np.where(entered[:, k], f, 0.0) * dt
        X[:, k + 1] = np.where(entered[:, k], X[:, k] + a * dt + cfg.sigma * ens.noise.dW[:, k], 0.0)
    g = terminal_cost_g(X[:, n], X[rows, e], beta_eta, gamma_eta, cp)
    return running + g


@dataclass(frozen=True)
class ExploitabilityResult:
    """Paired cost gaps; ``gap`` and ``perturbed_gap`` use the controlled-state estimator."""

    gap: float
    std_error: float
    j_eq: float
    j_br: float
    perturbed_gap: float
    perturbed_std_error: float
    weak_gap: float
    weak_std_error: float
    weak_perturbed_gap: float
    weak_perturbed_std_error: float
    n_paths: int

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _paired(a, b):
    d = a - b
    se = float(d.std(ddof=1) / np.sqrt(len(d))) if len(d) > 1 else 0.0
    return float(d.mean()), se


def exploitability(eq: Equilibrium, cfg: ScenarioConfig | None = None, fresh_seed: int | None = None,
                   perturbation: float = 0.1, workers: int = 1) -> ExploitabilityResult:
    """``J(eq) - J(best response)`` on fresh idiosyncratic draws with flows frozen.

    The common scenarios are kept so that the frozen cell flows stay defined.
    The best response is solved on one fresh draw (seed ``fresh_seed + 1``)
    and both controls are scored on another (``fresh_seed``), so neither cost
    carries an in-sample fitting bias. Both the controlled-state and the weak
    (Girsanov-weighted) estimates are returned, together with the gap of the
    equilibrium control shifted by ``perturbation`` after entry.
    """
    cfg = eq.cfg if cfg is None else cfg
    seed = cfg.master_seed + 1 if fresh_seed is None else fresh_seed
    flows = eq.input_flows
    fit_noise = resample_idiosyncratic(cfg, eq.ensemble.noise, seed + 1, workers=workers)
    fit_ens = build_ensemble(cfg, fit_noise)
    fit_env = resolve_environment(fit_ens, flows.mean_x, flows.impact)
    br_field = extract_control_field(solve_bsde(cfg, fit_ens, env=fit_env), fit_ens)

    noise = resample_idiosyncratic(cfg, eq.ensemble.noise, seed, workers=workers)
    ens = build_ensemble(cfg, noise)
    env = resolve_environment(ens, flows.mean_x, flows.impact)
    s_eq = strong_objective(cfg, ens, env, eq.field)
    s_br = strong_objective(cfg, ens, env, br_field)
    s_pert = strong_objective(cfg, ens, env, eq.field, shift=perturbation)
    gap, se = _paired(s_eq, s_br)
    pgap, pse = _paired(s_pert, s_br)

    a_eq = field_actions(eq.field, cfg, ens, env)
    a_br = field_actions(br_field, cfg, ens, env)
    a_pert = np.where(cut_at_burst(ens, env).entered[:, :-1],
                      np.clip(a_eq + perturbation, cfg.a_min, cfg.a_max), 0.0)
    w_br = weak_objective(cfg, ens, env, a_br)
    wgap, wse = _paired(weak_objective(cfg, ens, env, a_eq), w_br)
    wpgap, wpse = _paired(weak_objective(cfg, ens, env, a_pert), w_br)
    return ExploitabilityResult(gap, se, float(s_eq.mean()), float(s_br.mean()), pgap, pse,
                                wgap, wse, wpgap, wpse, ens.n_paths)
