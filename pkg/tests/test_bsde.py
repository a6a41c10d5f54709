import numpy as np
import pytest

from bubbleride.bsde import (ControlField, FeatureMap, _gradient_coef, extract_control_field,
                             field_actions, least_squares, n_terms, solve_bsde,
                             solve_bsde_per_threshold)
from bubbleride.config import AffineInTime, ThresholdDistribution
from bubbleride.ensemble import build_ensemble, resolve_environment
from bubbleride.fixed_point import initial_flows, solve_equilibrium
from bubbleride.noise import sample_noise
from conftest import scenario
from oracles import riccati_lq


def test_term_counts():
    assert n_terms(4, 2) == 15
    raw = np.random.default_rng(0).normal(size=(200, 4))
    fm = FeatureMap.fit(raw, None, 2)
    assert fm(raw).shape == (200, fm.n_columns)


def test_constant_columns_are_dropped():
    raw = np.random.default_rng(0).normal(size=(100, 4))
    raw[:, 2] = 3.0
    fm = FeatureMap.fit(raw, None, 2)
    assert fm.n_columns == n_terms(3, 2)


def test_least_squares_ridge_fallback():
    M = np.ones((10, 3))
    coef, cond, ridge = least_squares(M, np.arange(10.0))
    assert ridge and np.all(np.isfinite(coef))
    M = np.random.default_rng(1).normal(size=(50, 3))
    y = M @ np.array([1.0, -2.0, 0.5])
    coef, _, ridge = least_squares(M, y)
    assert not ridge
    np.testing.assert_allclose(coef, [1.0, -2.0, 0.5], atol=1e-10)


def test_gradient_coefficients_differentiate_the_fit():
    rng = np.random.default_rng(3)
    raw = rng.normal(size=(300, 4)) * [2.0, 1.0, 0.5, 1.0] + [1.0, 0.0, 2.0, 0.0]
    fm = FeatureMap.fit(raw, None, 2)
    coef = rng.normal(size=fm.n_columns)
    z = fm(raw) @ _gradient_coef(fm, coef, 0.7)
    h = 1e-6
    up, dn = raw.copy(), raw.copy()
    up[:, 0] += h
    dn[:, 0] -= h
    fd = 0.7 * (fm(up) @ coef - fm(dn) @ coef) / (2 * h)
    np.testing.assert_allclose(z, fd, rtol=1e-6, atol=1e-6)


@pytest.fixture(scope="module", params=["gradient", "increment"])
def lq_eq(request):
    cfg = scenario("lq", burst_size_beta=AffineInTime(0.0), z_estimator=request.param)
    return cfg, solve_equilibrium(cfg)


def test_lq_value_matches_riccati(lq_eq):
    cfg, eq = lq_eq
    _, value = riccati_lq(cfg.temp_impact_lambda, cfg.running_penalty_phi, cfg.terminal_penalty_c,
                          cfg.bubble_trend.ell, cfg.price_init_P0, cfg.horizon_T, cfg.sigma)
    x0 = eq.ensemble.X[:, 0]
    ref = value(0.0, x0)
    y0 = eq.solution.Y[:, 0]
    assert y0.mean() == pytest.approx(ref.mean(), rel=0.02)


def test_pre_entry_y_is_copied_and_z_zero(small_bubble):
    ens = build_ensemble(small_bubble, sample_noise(small_bubble))
    sol = solve_bsde(small_bubble, ens, initial_flows(ens))
    n = small_bubble.n_steps
    k = np.arange(n)
    pre = k[None, :] < ens.entry_step[:, None]
    assert np.all(sol.Z[pre] == 0.0)
    assert np.all(sol.alpha[pre] == 0.0)
    for i in np.flatnonzero(ens.entry_step > 0)[:20]:
        e = min(ens.entry_step[i], n)
        assert np.all(sol.Y[i, :e] == sol.Y[i, e])
    assert np.all(sol.alpha >= small_bubble.a_min) and np.all(sol.alpha <= small_bubble.a_max)


def test_never_entered_paths_have_zero_value(small_bubble):
    cfg = small_bubble.replace(dist_thresholds_nu_p=ThresholdDistribution(0.5, "uniform", 1.05, 5.0))
    ens = build_ensemble(cfg, sample_noise(cfg))
    sol = solve_bsde(cfg, ens, initial_flows(ens))
    never = ens.entry_step > cfg.n_steps
    assert never.any()
    assert np.all(sol.Y[never] == 0.0)


def test_control_field_reproduces_solution_and_round_trips(small_bubble):
    ens = build_ensemble(small_bubble, sample_noise(small_bubble))
    fl = initial_flows(ens)
    env = resolve_environment(ens, fl.mean_x, fl.impact)
    sol = solve_bsde(small_bubble, ens, env=env)
    fld = extract_control_field(sol, ens)
    a = field_actions(fld, small_bubble, ens, env)
    np.testing.assert_allclose(a, sol.alpha, atol=1e-10)
    back = ControlField.from_arrays(fld.to_arrays())
    np.testing.assert_array_equal(field_actions(back, small_bubble, ens, env), a)


def test_cell_scope_runs(small_bubble):
    cfg = small_bubble.replace(regression_scope="cell")
    ens = build_ensemble(cfg, sample_noise(cfg))
    sol = solve_bsde(cfg, ens, initial_flows(ens))
    assert np.all(np.isfinite(sol.Y))


def test_per_threshold_mixture(small_bubble):
    ens = build_ensemble(small_bubble, sample_noise(small_bubble))
    out = solve_bsde_per_threshold(small_bubble, ens, initial_flows(ens), n_atoms=4)
    assert len(out["atoms"]) == 4
    assert sum(out["probs"]) == pytest.approx(1.0)
    assert out["mixture_y0"] == pytest.approx(np.dot(out["probs"], out["y0"]))
