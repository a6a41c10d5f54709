"""Acceptance criteria 1 to 12 with their tolerances pinned.

Each test prints one PASS/FAIL line, collected again in the terminal summary.
"""
import time
from itertools import permutations

import numpy as np
import pytest
from scipy import stats

from bubbleride.cells import build_V_N, project_dyadic
from bubbleride.config import (AffineInTime, ExoIntensity, LinearImpact, ThresholdDistribution,
                               validate)
from bubbleride.costs import CostParams, hamiltonian_argmin
from bubbleride.ensemble import compute_entries
from bubbleride.fixed_point import exploitability, girsanov_weights, solve_equilibrium, strong_objective
from bubbleride.metrics import QuantileSketch, w1_sorted, wasserstein1_1d
from bubbleride.noise import StreamRole, sample_noise
from bubbleride.population import (constant_strategy, evaluate_player_cost, field_strategy,
                                   simulate_population)
from bubbleride.price import simulate_pre_burst
from bubbleride.trend import ExponentialTrend, LPPLTrend
from conftest import SCENARIOS, record, scenario
from oracles import constant_hazard_cdf, riccati_lq

_EQ = {}


def equilibrium(name, **changes):
    key = (name, tuple(sorted(changes.items())))
    if key not in _EQ:
        cfg = scenario(name, **changes)
        _EQ[key] = (cfg, solve_equilibrium(cfg))
    return _EQ[key]


# 1 -------------------------------------------------------------------------

def _random_scenario(rng, family):
    p0 = rng.uniform(0.5, 2.0)
    if family == "exponential":
        trend = ExponentialTrend(rng.uniform(0.05, 2.0))
        nu_p = ThresholdDistribution(rng.uniform(0.2, 1.0), "uniform",
                                     p0 * rng.uniform(1.0, 1.2), p0 * rng.uniform(1.3, 2.5))
    else:
        A = rng.uniform(0.1, 0.6)
        trend = LPPLTrend(A=A, C=rng.uniform(0.0, 0.5) * A, omega=rng.uniform(3.0, 12.0),
                          phi=rng.uniform(0.0, 2 * np.pi), ell=rng.uniform(0.1, 0.9))
        nu_p = ThresholdDistribution(1.0)
    return scenario("bubble", price_init_P0=p0, sigma0=rng.uniform(0.0, 0.6), bubble_trend=trend,
                    dist_thresholds_nu_p=nu_p, exo_intensity_k=ExoIntensity(0.0),
                    inventory_threshold_zeta=InventoryThresholdLow)


from bubbleride.config import InventoryThreshold  # noqa: E402

InventoryThresholdLow = InventoryThreshold(0.01)


def test_1_sde_monotonicity():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    violations, draws = 0, 0
    for family in ("exponential", "lppl"):
        for _ in range(50):
            cfg = _random_scenario(rng, family)
            assert validate(cfg).ok, validate(cfg)
            dB = rng.standard_normal((20, cfg.n_steps)) * np.sqrt(cfg.dt)
            p_lo = cfg.price_init_P0 * rng.uniform(1.0, 1.3, 20)
            p_hi = p_lo * rng.uniform(1.0, 1.3, 20)
            lo = simulate_pre_burst(cfg, dB, p0=p_lo)
            hi = simulate_pre_burst(cfg, dB, p0=p_hi)
            violations += int(np.count_nonzero(lo.p > hi.p) + np.count_nonzero(lo.m > hi.m))
            draws += 1
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 10.0
    record(1, ok, f"{draws} scenario draws, {violations} ordering violations, {elapsed:.2f} s (< 10 s)")
    assert ok


# 2 -------------------------------------------------------------------------

def _noiseless_error(n_steps, ell):
    cfg = scenario("bubble", sigma0=0.0, n_steps=n_steps, bubble_trend=ExponentialTrend(ell))
    path = simulate_pre_burst(cfg, np.zeros((1, n_steps)), cdf=lambda m: np.ones_like(m))
    exact = cfg.price_init_P0 * np.exp(ell * cfg.time_grid)
    return float(np.max(np.abs(path.p[0] - exact) / exact)), cfg.dt


def test_2_noiseless_exponential_bubble():
    ell = 1.0
    err400, dt = _noiseless_error(400, ell)
    errs = [_noiseless_error(n, ell)[0] for n in (50, 100, 200, 400, 800)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    ok = err400 <= 2 * ell * dt and orders.min() >= 0.9
    record(2, ok, f"max rel error {err400:.3e} at 400 steps (bound {2 * ell * dt:.3e}); "
                  f"orders {np.round(orders, 4).tolist()} (min >= 0.9)")
    assert ok


# 3 -------------------------------------------------------------------------

def test_3_entry_time_ordering():
    cfg = scenario("bubble")
    rng = np.random.default_rng(303)
    dB = rng.standard_normal((10_000, cfg.n_steps)) * np.sqrt(cfg.dt)
    m = simulate_pre_burst(cfg, dB).m
    hi = 1.2 * m[:, -1:]
    thr = np.sort(cfg.price_init_P0 + rng.uniform(0, 1, (10_000, 20)) * (hi - cfg.price_init_P0), axis=1)
    e = compute_entries(m, thr)
    n = cfg.n_steps
    # first crossing from the definition, as an independent check of the vectorised count
    brute = np.where((m[:, None, :] >= thr[:, :, None]).any(-1),
                     (m[:, None, :] >= thr[:, :, None]).argmax(-1), n + 1)
    mismatch = int(np.count_nonzero(brute != e))
    e1, e2 = e[:, :-1], e[:, 1:]
    nondecreasing = int(np.count_nonzero(e2 < e1))
    interior = (e1 <= n) & (e2 <= n)
    m_at_e1 = np.take_along_axis(m, np.minimum(e1, n), axis=1)
    strict_case = interior & (m_at_e1 < thr[:, 1:])
    strict = int(np.count_nonzero(strict_case & (e2 <= e1)))
    viol = mismatch + nondecreasing + strict
    record(3, viol == 0, f"10^4 paths x 20 thresholds: {nondecreasing} order, {strict} strictness, "
                         f"{mismatch} definition violations ({int(strict_case.sum())} strict pairs)")
    assert viol == 0


# 4 -------------------------------------------------------------------------

def test_4_hamiltonian_minimizer():
    cfg = scenario("bubble")
    cp = CostParams.from_config(cfg)
    rng = np.random.default_rng(404)
    span = 3.0 * cp.lam * cp.sigma * cp.a_bound
    z = rng.uniform(-span, span, 1000)
    grid = np.round(np.arange(cp.a_min, cp.a_max + 5e-5, 1e-4), 10)
    err = 0.0
    for chunk in np.array_split(z, 20):
        vals = cp.lam * grid[None, :] ** 2 + grid[None, :] * chunk[:, None] / cp.sigma
        err = max(err, float(np.max(np.abs(grid[vals.argmin(1)] - hamiltonian_argmin(chunk, cp)))))
    record(4, err <= 1e-4, f"max action error {err:.3e} over 10^3 z (bound 1e-4)")
    assert err <= 1e-4


# 5 -------------------------------------------------------------------------

def test_5_zero_cost_fixed_point():
    cfg = scenario("bubble", running_penalty_phi=0.0, terminal_penalty_c=0.0,
                   bubble_trend=ExponentialTrend(0.0), burst_size_beta=AffineInTime(0.0),
                   perm_impact=LinearImpact(0.0))
    eq = solve_equilibrium(cfg)
    ex = exploitability(eq)
    y_zero = bool(np.all(eq.solution.Y == 0.0))
    a_zero = bool(np.all(eq.solution.alpha == 0.0))
    res_zero = 0.0 in eq.residuals[:2]
    ok = y_zero and a_zero and ex.gap == 0.0 and ex.std_error == 0.0 and res_zero
    record(5, ok, f"Y==0 {y_zero}, alpha==0 {a_zero}, exploitability {ex.gap!r}, "
                  f"residuals {eq.residuals[:2]}")
    assert ok


# 6 -------------------------------------------------------------------------

def test_6_lq_riccati_oracle():
    cfg = scenario("lq", burst_size_beta=AffineInTime(0.0))
    assert (cfg.n_paths, cfg.n_steps, cfg.regression_degree) == (2000, 100, 2)
    start = time.perf_counter()
    eq = solve_equilibrium(cfg, workers=1)
    elapsed = time.perf_counter() - start
    control, _ = riccati_lq(cfg.temp_impact_lambda, cfg.running_penalty_phi, cfg.terminal_penalty_c,
                            cfg.bubble_trend.ell, cfg.price_init_P0, cfg.horizon_T)
    X = eq.ensemble.X[:, :-1]
    ref = control(cfg.time_grid[None, :-1], X)
    rel = float(np.sqrt(np.sum((eq.solution.alpha - ref) ** 2) / np.sum(ref**2)))
    ok = rel <= 0.05 and elapsed < 60.0
    record(6, ok, f"relative L2 control error {rel:.4f} (bound 0.05), {elapsed:.1f} s (< 60 s)")
    assert ok


# 7 -------------------------------------------------------------------------

def test_7_girsanov_martingale():
    cfg = scenario("bubble")
    n, a, sig = 100_000, 0.5, cfg.sigma
    rng = np.random.default_rng(707)
    dW = rng.standard_normal((n, cfg.n_steps)) * np.sqrt(cfg.dt)
    entry = rng.integers(0, cfg.n_steps // 2, n)
    k = np.arange(cfg.n_steps)
    alpha = np.where(k[None, :] >= entry[:, None], a, 0.0)
    w = girsanov_weights(alpha, dW, sig, cfg.dt).terminal
    se = w.std(ddof=1) / np.sqrt(n)
    z = abs(w.mean() - 1.0) / se
    W = np.concatenate([np.zeros((n, 1)), np.cumsum(dW, axis=1)], axis=1)
    span = cfg.horizon_T - cfg.time_grid[entry]
    closed = np.exp(a * (W[:, -1] - W[np.arange(n), entry]) / sig - a**2 * span / (2 * sig**2))
    rel = float(np.max(np.abs(w - closed) / closed))
    ok = z <= 3.0 and rel <= 1e-12
    record(7, ok, f"mean weight {w.mean():.5f}, {z:.2f} SE from 1 (bound 3); "
                  f"max rel deviation from closed form {rel:.2e}")
    assert ok


# 8 -------------------------------------------------------------------------

def test_8_projection_bounds():
    rng = np.random.default_rng(808)
    proj_viol, v_viol, worst = 0, 0, []
    for level in range(5):
        cap = 4.0**level
        x = rng.uniform(-cap, cap, 100_000)
        proj_viol += int(np.count_nonzero(np.abs(project_dyadic(x, level) - x) > 4.0**-level))
        dB = rng.standard_normal((20_000, 64)) * np.sqrt(1 / 64)
        B = np.concatenate([np.zeros((20_000, 1)), np.cumsum(dB, axis=1)], axis=1)
        V = build_V_N(B, level)
        knots = B[:, :: 64 // 2**level]
        in_cap = np.all(np.abs(np.diff(knots, axis=1)) <= cap, axis=1)
        dev = np.max(np.abs(V - knots), axis=1)[in_cap]
        v_viol += int(np.count_nonzero(dev > 2.0**-level))
        worst.append(round(float(dev.max() * 2**level), 4))
    ok = proj_viol == 0 and v_viol == 0
    record(8, ok, f"projection violations {proj_viol}, V^N violations {v_viol}; "
                  f"sup deviation / 2^-N by level {worst}")
    assert ok


# 9 -------------------------------------------------------------------------

def test_9_exogenous_burst_law():
    kappa = 2.0
    cfg = scenario("bubble", exo_intensity_k=ExoIntensity(kappa), horizon_T=10.0,
                   n_paths=100_000, idio_per_common=1, n_steps=20)
    tau = sample_noise(cfg, StreamRole.EVALUATION, n_idio=1).tau
    finite = np.isfinite(tau)
    d = stats.kstest(np.where(finite, tau, np.inf), constant_hazard_cdf(kappa)).statistic
    ok = d < 0.01
    record(9, ok, f"KS distance {d:.5f} vs Exp({kappa}) at 10^5 samples (bound 0.01)")
    assert ok


# 10 ------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["interactions_off", "bubble"])
def test_10_exploitability(name):
    cfg, eq = equilibrium(name)
    ex = exploitability(eq)
    ok = ex.gap <= 3 * ex.std_error and ex.perturbed_gap > 3 * ex.perturbed_std_error
    record(10, ok, f"{name} (level {cfg.dyadic_level}, {cfg.n_paths} paths): gap {ex.gap:.2e} "
                   f"<= 3 SE {3 * ex.std_error:.2e}; +0.1 gap {ex.perturbed_gap:.2e} "
                   f"> 3 SE {3 * ex.perturbed_std_error:.2e}; weak gap {ex.weak_gap:.2e} "
                   f"(SE {ex.weak_std_error:.2e}), weak +0.1 gap {ex.weak_perturbed_gap:.2e} "
                   f"(SE {ex.weak_perturbed_std_error:.2e})")
    assert ok


# 11 ------------------------------------------------------------------------

def test_11_never_enter_zero_cost():
    bad, never_total = 0, 0
    for name in SCENARIOS:
        cfg, eq = equilibrium(name)
        # N-player games with the equilibrium field, zero and constant strategies
        noise = sample_noise(cfg, StreamRole.POPULATION, n_common=5, n_idio=cfg.n_players)
        for strat in (field_strategy(eq.field, cfg.regression_scope), None, constant_strategy(0.7)):
            res = simulate_population(cfg, noise, strat)
            never = res.entries.threshold > res.price.m[:, -1:]
            cost = evaluate_player_cost(cfg, res).total
            bad += int(np.count_nonzero(cost[never] != 0.0))
            never_total += int(never.sum())
        # mean field paths that never enter
        ens = eq.ensemble
        never = ens.noise.init_threshold > eq.env.price.m[ens.common_index, -1]
        strong = strong_objective(cfg, ens, eq.env, eq.field)
        bad += int(np.count_nonzero(strong[never] != 0.0) + np.count_nonzero(eq.solution.Y[never] != 0.0))
        never_total += int(never.sum())
    record(11, bad == 0, f"{never_total} never-entered players across {len(SCENARIOS)} scenarios, "
                         f"{bad} with non-zero cost")
    assert bad == 0


# 12 ------------------------------------------------------------------------

def test_12_w1_matching_oracle():
    rng = np.random.default_rng(1212)
    mismatches, count, sketch_dev = 0, 0, 0.0
    for size in range(3, 7):
        for _ in range(60):
            # dyadic values keep every sum exact, so equality is meaningful
            x = rng.integers(-256, 256, size) / 16.0
            y = rng.integers(-256, 256, size) / 16.0
            brute = min(np.abs(np.sort(x) - y[list(p)]).mean() for p in permutations(range(size)))
            mismatches += int(w1_sorted(x, y) != brute)
            # second route through the weighted-CDF integral, which rounds differently
            sk = wasserstein1_1d(QuantileSketch.from_samples(x), QuantileSketch.from_samples(y))
            sketch_dev = max(sketch_dev, abs(sk - brute) / max(brute, 1e-300))
            count += 1
    ok = mismatches == 0 and count >= 200 and sketch_dev <= 8 * np.finfo(float).eps
    record(12, ok, f"{count} instances of 3 to 6 points, {mismatches} inexact sorted-sample matches; "
                   f"CDF-integral route max rel deviation {sketch_dev:.1e}")
    assert ok
