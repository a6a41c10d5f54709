import numpy as np
import pytest

from bubbleride.bsde import ControlField
from bubbleride.costs import CostParams
from bubbleride.fixed_point import (WeightError, exploitability, girsanov_weights,
                                    solve_equilibrium, strong_objective, weak_objective)
from bubbleride.noise import sample_noise


def test_weights_closed_form():
    rng = np.random.default_rng(0)
    dW = rng.standard_normal((50, 20)) * 0.1
    a = rng.uniform(-1, 1, (50, 20))
    w = girsanov_weights(a, dW, 0.5, 0.01)
    manual = np.exp(np.sum(a * dW / 0.5 - a**2 * 0.01 / (2 * 0.25), axis=1))
    np.testing.assert_allclose(w.terminal, manual, rtol=1e-13)
    assert np.all(w.running[:, 0] == 1.0)


def test_non_finite_weight_raises():
    dW = np.array([[1e300, 0.0]])
    with np.errstate(over="ignore"), pytest.raises(WeightError):
        girsanov_weights(np.ones((1, 2)), dW, 1e-10, 0.1)


def test_deterministic_given_seed(small_bubble):
    a = solve_equilibrium(small_bubble)
    b = solve_equilibrium(small_bubble, workers=3)
    assert a.residuals == b.residuals
    np.testing.assert_array_equal(a.solution.alpha, b.solution.alpha)


def test_best_iterate_is_returned(small_bubble):
    eq = solve_equilibrium(small_bubble.replace(fp_tolerance=1e-12, fp_max_iter=3))
    assert not eq.converged
    assert len(eq.residuals) == 3
    assert eq.residuals[eq.best_iteration - 1] == min(eq.residuals)


def test_zero_iterations(small_bubble):
    eq = solve_equilibrium(small_bubble.replace(fp_max_iter=0))
    assert not eq.converged and eq.solution is None and eq.residuals == []


def test_strong_and_weak_agree_for_zero_control(small_bubble):
    eq = solve_equilibrium(small_bubble)
    ens = eq.ensemble
    zero = ControlField.zero(CostParams.from_config(small_bubble), small_bubble.n_steps)
    s = strong_objective(small_bubble, ens, eq.env, zero)
    w = weak_objective(small_bubble, ens, eq.env, np.zeros((ens.n_paths, small_bubble.n_steps)))
    np.testing.assert_allclose(s, w, rtol=1e-12, atol=1e-12)


def test_exploitability_fields(small_bubble):
    eq = solve_equilibrium(small_bubble)
    ex = exploitability(eq)
    assert ex.n_paths == small_bubble.n_paths
    assert ex.std_error >= 0 and ex.perturbed_std_error > 0
    assert ex.j_eq - ex.j_br == pytest.approx(ex.gap)
    assert set(ex.to_dict()) >= {"gap", "weak_gap", "perturbed_gap"}
