import numpy as np
import pytest

from bubbleride.config import ThresholdDistribution
from bubbleride.noise import StreamRole, sample_noise
from bubbleride.population import (constant_strategy, empirical_cdf, evaluate_player_cost,
                                   simulate_population)
from bubbleride.price import simulate_pre_burst


def _noise(cfg, games=3):
    return sample_noise(cfg, StreamRole.POPULATION, n_common=games, n_idio=cfg.n_players)


def test_zero_strategy_inventory_and_entries(small_bubble):
    cfg = small_bubble.replace(n_players=30)
    nz = _noise(cfg)
    res = simulate_population(cfg, nz)
    n = cfg.n_steps
    thr = nz.init_threshold.reshape(3, 30)
    np.testing.assert_array_equal(res.entries.threshold, thr)
    assert np.all(res.alpha == 0.0)
    # entry is the first step whose running max reaches the threshold
    for g in range(3):
        for i in range(30):
            e = res.entries.entry_step[g, i]
            m = res.price.m[g]
            if e <= n:
                assert m[e] >= thr[g, i] and (e == 0 or m[e - 1] < thr[g, i])
            else:
                assert m[-1] < thr[g, i]


def test_interactions_off_matches_exogenous_price(small_bubble):
    cfg = small_bubble.replace(n_players=20)
    cfg = cfg.replace(perm_impact=type(cfg.perm_impact)(0.0))
    nz = _noise(cfg, 2)
    res = simulate_population(cfg, nz, constant_strategy(0.5))
    for g in range(2):
        # with no impact the pre-burst price only feels the empirical entry fraction
        pre = simulate_pre_burst(cfg, nz.dB[g:g + 1], cdf=empirical_cdf(res.entries.threshold[g]))
        e = res.burst.true_step[g]
        if e <= cfg.n_steps:
            np.testing.assert_allclose(res.price.p[g, :e], pre.p[0, :e], rtol=0, atol=0)
    assert np.all(res.flow.impact == 0.0)


def test_cost_decomposition_by_hand(small_bubble):
    cfg = small_bubble.replace(n_players=10)
    res = simulate_population(cfg, _noise(cfg, 1), constant_strategy(-0.3))
    cost = evaluate_player_cost(cfg, res)
    i = int(np.argmin(res.entries.entry_step[0]))
    e, eta, n, dt = res.entries.entry_step[0, i], res.burst.true_step[0], cfg.n_steps, cfg.dt
    total = 0.0
    for k in range(e, n):
        x, a = res.X[0, i, k], res.alpha[0, i, k]
        drift = res.trend[0, k] if k < eta else res.flow.impact[0, k]
        total += (cfg.temp_impact_lambda * a * a + cfg.running_penalty_phi * x * x - x * drift) * dt
    ee = min(eta, n)
    total += cfg.terminal_penalty_c * res.X[0, i, n] ** 2
    total += cfg.burst_size_beta(cfg.time_grid[ee]) * res.price.gamma[0, ee] * res.X[0, i, ee]
    assert cost.total[0, i] == pytest.approx(total, rel=1e-12)


def test_never_entered_pay_nothing(small_bubble):
    cfg = small_bubble.replace(n_players=50,
                               dist_thresholds_nu_p=ThresholdDistribution(0.3, "uniform", 1.05, 6.0))
    res = simulate_population(cfg, _noise(cfg, 4), constant_strategy(1.0))
    never = res.entries.entry_step > cfg.n_steps
    assert never.any()
    assert np.all(evaluate_player_cost(cfg, res).total[never] == 0.0)
    assert np.all(res.X[never] == 0.0)
