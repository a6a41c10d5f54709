import numpy as np
import pytest
from scipy import stats

from bubbleride.config import ExoIntensity
from bubbleride.noise import (StreamRole, compensator, resample_idiosyncratic,
                              sample_exogenous_burst, sample_noise)
from conftest import scenario


def test_worker_count_does_not_change_draws(small_bubble):
    a = sample_noise(small_bubble, workers=1)
    b = sample_noise(small_bubble, workers=4)
    for name in ("dB", "dW", "tau", "init_wealth", "init_threshold"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_roles_and_seeds_give_distinct_streams(small_bubble):
    a = sample_noise(small_bubble, StreamRole.TRAINING)
    b = sample_noise(small_bubble, StreamRole.EVALUATION)
    c = sample_noise(small_bubble, seed=small_bubble.master_seed + 1)
    assert not np.array_equal(a.dB, b.dB)
    assert not np.array_equal(a.dW, c.dW)


def test_common_draws_do_not_depend_on_block_size(small_bubble):
    a = sample_noise(small_bubble, n_common=10, n_idio=5)
    b = sample_noise(small_bubble, n_common=20, n_idio=7)
    np.testing.assert_array_equal(a.dB, b.dB[:10])
    np.testing.assert_array_equal(a.tau, b.tau[:10])


def test_resample_keeps_common_noise(small_bubble):
    a = sample_noise(small_bubble)
    b = resample_idiosyncratic(small_bubble, a, seed=99)
    np.testing.assert_array_equal(a.dB, b.dB)
    np.testing.assert_array_equal(a.tau, b.tau)
    assert not np.array_equal(a.dW, b.dW)


def test_increment_moments():
    cfg = scenario("bubble", n_paths=20000, idio_per_common=10)
    nz = sample_noise(cfg)
    assert abs(nz.dW.mean()) < 4 * np.sqrt(cfg.dt / nz.dW.size)
    assert nz.dW.var() == pytest.approx(cfg.dt, rel=0.01)
    assert nz.W.shape == (cfg.n_paths, cfg.n_steps + 1)


def test_compensator_of_affine_intensity_is_exact():
    cfg = scenario("bubble", exo_intensity_k=ExoIntensity(0.3, 0.4))
    t = cfg.time_grid
    np.testing.assert_allclose(compensator(cfg), 0.3 * t + 0.2 * t**2, rtol=0, atol=1e-14)


def test_inverse_hazard_map():
    cfg = scenario("bubble", exo_intensity_k=ExoIntensity(0.5))
    E = np.array([0.0, 0.25, 0.5, 0.51])
    tau = sample_exogenous_burst(cfg, E)
    np.testing.assert_allclose(tau[:3], [0.0, 0.5, 1.0], atol=1e-14)
    assert np.isinf(tau[3])


def test_affine_intensity_law():
    cfg = scenario("bubble", exo_intensity_k=ExoIntensity(1.0, 2.0), horizon_T=4.0, n_steps=64)
    tau = sample_noise(cfg.replace(n_paths=50000, idio_per_common=1), n_idio=1).tau
    cdf = lambda t: 1.0 - np.exp(-(t + t**2))  # noqa: E731
    assert np.isfinite(tau).mean() > 0.999999
    assert stats.kstest(tau[np.isfinite(tau)], cdf).statistic < 0.01
