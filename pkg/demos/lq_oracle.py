"""Compare the regression solver with the closed-form LQ feedback.

Every player enters at time zero, there is no burst and no price impact, so
the optimal control is ``-(2 A(t) x + B(t)) / (2 lam)`` with ``A, B`` from a
pair of Riccati equations integrated here with scipy.
"""
import numpy as np
from scipy.integrate import solve_ivp

from bubbleride import load_scenario, shipped_scenario, solve_equilibrium
from bubbleride.bsde import field_actions
from bubbleride.config import AffineInTime


def riccati(cfg):
    lam, phi, ell, p0 = (cfg.temp_impact_lambda, cfg.running_penalty_phi,
                         cfg.bubble_trend.ell, cfg.price_init_P0)

    def rhs(t, y):
        a, b = y
        return [a * a / lam - phi, a * b / lam + ell * p0 * np.exp(ell * t)]

    sol = solve_ivp(rhs, (cfg.horizon_T, 0.0), [cfg.terminal_penalty_c, 0.0],
                    rtol=1e-11, atol=1e-13, dense_output=True)
    def control(t, x):
        a, b = sol.sol(t)
        return -(2.0 * a * x + b) / (2.0 * lam)

    return control


def main() -> None:
    cfg = load_scenario(shipped_scenario("lq")).replace(burst_size_beta=AffineInTime(0.0))
    eq = solve_equilibrium(cfg)
    ens, env = eq.ensemble, eq.env
    a_mc = field_actions(eq.field, cfg, ens, env)
    t = cfg.time_grid[:-1]
    a_ref = riccati(cfg)(t, ens.X[:, :-1])
    err = np.sqrt(np.mean((a_mc - a_ref) ** 2) / np.mean(a_ref**2))
    print(f"relative L2 error of the fitted control: {err:.4f}")
    for k in (0, len(t) // 2, len(t) - 1):
        print(f"t = {t[k]:.2f}: mean action {a_mc[:, k].mean():+.4f} (closed form {a_ref[:, k].mean():+.4f})")


if __name__ == "__main__":
    main()
