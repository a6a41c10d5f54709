"""Running and terminal costs, the Hamiltonian minimiser and the minimised Hamiltonian.

Temporary impact is quadratic, ``kappa(a) = lam * a**2``, so the minimiser of
``lam * a**2 + a * z / sigma`` over ``A`` has a closed form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig


class ActionDomainError(ValueError):
    """An action outside the admissible interval was passed to a cost."""


@dataclass(frozen=True)
class CostParams:
    lam: float
    phi: float
    c: float
    a_min: float
    a_max: float
    sigma: float

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "CostParams":
        return cls(cfg.temp_impact_lambda, cfg.running_penalty_phi, cfg.terminal_penalty_c,
                   cfg.a_min, cfg.a_max, cfg.sigma)

    @property
    def a_bound(self) -> float:
        return max(abs(self.a_min), abs(self.a_max))


def _check_action(a, cp: CostParams, tol: float = 1e-12) -> None:
    a = np.asarray(a)
    if np.any(a < cp.a_min - tol) or np.any(a > cp.a_max + tol):
        raise ActionDomainError(f"action outside A = [{cp.a_min}, {cp.a_max}]")


def f_parts(x, a, m_b, rho_bar, cp: CostParams):
    """Components ``(f_a, f_b, f_c)`` with ``f = f_a + f_b 1{t<eta} + f_c 1{t>=eta}``."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    f_a = cp.lam * a**2 + cp.phi * x**2
    return f_a, -x * np.asarray(m_b, dtype=float), -x * np.asarray(rho_bar, dtype=float)


def running_cost_pre(x, a, m_b, rho_bar, pre_burst, cp: CostParams):
    """Running cost with the burst regime given as a boolean ``pre_burst``."""
    f_a, f_b, f_c = f_parts(x, a, m_b, rho_bar, cp)
    return f_a + np.where(pre_burst, f_b, f_c)


def running_cost_f(t, x, m_b, eta, rho_bar, a, cp: CostParams, check: bool = True):
    """``lam a^2 + phi x^2 - x (m_b 1{t<eta} + rho_bar 1{t>=eta})``."""
    if check:
        _check_action(a, cp)
    return running_cost_pre(x, a, m_b, rho_bar, np.asarray(t) < np.asarray(eta), cp)


def terminal_cost_g(x_T, x_eta, beta_eta, gamma_eta, cp: CostParams):
    """``c x_T^2 + beta_eta gamma_eta x_eta``."""
    x_T = np.asarray(x_T, dtype=float)
    return cp.c * x_T**2 + np.asarray(beta_eta) * np.asarray(gamma_eta) * np.asarray(x_eta)


def hamiltonian_argmin(z, cp: CostParams):
    """Minimiser of ``a -> lam a^2 + a z / sigma`` over ``[a_min, a_max]``."""
    return np.clip(-np.asarray(z, dtype=float) / (2.0 * cp.lam * cp.sigma), cp.a_min, cp.a_max)


def minimized_hamiltonian_pre(x, m_b, rho_bar, pre_burst, z, cp: CostParams):
    a = hamiltonian_argmin(z, cp)
    return running_cost_pre(x, a, m_b, rho_bar, pre_burst, cp) + a * np.asarray(z) / cp.sigma


def minimized_hamiltonian_h(t, x, m_b, eta, rho_bar, z, cp: CostParams):
    """``f(t, x, m_b, eta, rho_bar, a(z)) + a(z) z / sigma``."""
    return minimized_hamiltonian_pre(x, m_b, rho_bar, np.asarray(t) < np.asarray(eta), z, cp)
