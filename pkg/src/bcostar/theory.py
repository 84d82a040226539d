"""Sample-complexity bounds for BCO and their numerical verification.

All bounds keep the explicit constant 2 that comes out of the AM-GM step
``sqrt(a/n) + sqrt(b/n) <= sqrt(2 (a + b) / n)``, so forward and inverse
forms round-trip exactly.  Accessors named ``*_asymptotic`` drop constants
and return the big-O expressions instead.

The continuum-limit functions describe ``N(t)``, the effective number of
on-policy samples after ``t`` interaction time, driven by
``dN/dt = 1 - u * sqrt(K / N)``.  That ODE stalls at ``N = u**2 K`` and is
only meaningful above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .mdp import (
    REACHABLE_TOL,
    MdpSpec,
    disagreement_rate,
    exact_policy_cost,
    exact_q_values,
    greedy_actions,
    policy_tensor,
    reachable_mask,
)

ROSS_TOL = 1e-9
# advantage gaps this small (relative to the horizon) are summation roundoff
GAP_TOL = 1e-12


class NonRecurrentError(ValueError):
    """``u * epsilon >= 1``: on-policy data no longer pays for itself."""


class DomainError(ValueError):
    """Argument at or below the stall point ``N = u**2 K``."""


@dataclass(frozen=True)
class TheoryParams:
    u: float = 0.0
    epsilon: float = 0.0
    K: float = 1.0
    delta: float = 0.05
    horizon_T: int = 1
    alpha: float = 1.0

    def __post_init__(self):
        if self.u < 0 or self.K < 0:
            raise ValueError("u and K must be non-negative")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if self.horizon_T < 1 or self.alpha <= 0:
            raise ValueError("horizon_T and alpha must be positive")

    @property
    def recurrent(self) -> bool:
        return self.u * self.epsilon < 1.0


@dataclass(frozen=True)
class BoundReport:
    J_pi: float
    J_star: float
    epsilon: float
    u: float
    bound: float
    holds: bool

    @property
    def slack(self) -> float:
        return self.bound - self.J_pi


def _advantage_gap(mdp: MdpSpec, expert, mask: np.ndarray) -> float:
    """Largest ``Q(s, a) - Q(s, expert)`` over the masked ``(t, s)`` and all ``a``."""
    expert_pi = policy_tensor(mdp, expert)
    Q = exact_q_values(mdp, expert_pi)
    T = mdp.horizon
    expert_a = greedy_actions(expert_pi)
    worst = 0.0
    for t in range(T):
        q = Q[T - t]
        gap = q - q[np.arange(mdp.n_states), expert_a[t]][:, None]
        if mask[t].any():
            worst = max(worst, float(gap[mask[t]].max()))
    return worst if worst > GAP_TOL * T else 0.0


def estimate_u(mdp: MdpSpec, expert_policy) -> float:
    """Twice the expert's largest one-step advantage gap over reachable states.

    A state counts as reachable at step ``t`` if some policy gives it
    probability above 1e-12 there.
    """
    return 2.0 * _advantage_gap(mdp, expert_policy, reachable_mask(mdp, None))


def verify_ross_bound(mdp: MdpSpec, policy, expert) -> BoundReport:
    """Check ``J(pi) <= J(expert) + u T eps / 2`` exactly on a tabular MDP.

    ``u`` is measured on the states ``policy`` actually visits, ``eps`` is the
    exact disagreement rate under ``policy``'s state distribution, and ``Q``
    is the expert's own continuation value.
    """
    J_pi = exact_policy_cost(mdp, policy)
    J_star = exact_policy_cost(mdp, expert)
    eps = disagreement_rate(mdp, policy, expert)
    u = 2.0 * _advantage_gap(mdp, expert, reachable_mask(mdp, policy, REACHABLE_TOL))
    bound = J_star + 0.5 * u * mdp.horizon * eps
    return BoundReport(J_pi, J_star, eps, u, bound, bool(J_pi <= bound + ROSS_TOL))


# --- closed-form bounds ------------------------------------------------------


def sample_ratio_bound(params: TheoryParams) -> float:
    """Upper bound ``1 / (1 - u eps)`` on expert-to-learner on-policy sample ratio."""
    if not params.recurrent:
        raise NonRecurrentError(f"u * epsilon = {params.u * params.epsilon} >= 1")
    return 1.0 / (1.0 - params.u * params.epsilon)


def _log_inv(delta: float) -> float:
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    return math.log(1.0 / delta)


def generalization_bound(K: float, delta: float, n: float) -> float:
    """0-1 error bound ``sqrt(2 (K + log(1/delta)) / n)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return math.sqrt(2.0 * (K + _log_inv(delta)) / n)


def d0_bound(K: float, delta: float, epsilon_star: float) -> float:
    """Labeled samples needed for error ``epsilon_star``: ``2 (K + log(1/delta)) / eps*^2``."""
    if epsilon_star <= 0:
        raise ValueError("epsilon_star must be positive")
    return 2.0 * (K + _log_inv(delta)) / epsilon_star**2


def _check_recurrent(u: float, epsilon0: float):
    if u * epsilon0 >= 1.0:
        raise NonRecurrentError(f"epsilon0 = {epsilon0} is not below 1/u = {1.0 / u}")


def d1_bound(params: TheoryParams, epsilon0: float, epsilon1: float, d0: float = 0.0) -> float:
    """Rollout samples ``|D1|`` needed to reach error ``epsilon1``.

    Solves ``2 (K + log(1/delta)) / eps1^2 = |D0| + |D1| (1 - u eps0)`` for
    ``|D1|`` (clamped at zero when ``|D0|`` already suffices).
    """
    _check_recurrent(params.u, epsilon0)
    if epsilon1 <= 0:
        raise ValueError("epsilon1 must be positive")
    need = 2.0 * (params.K + _log_inv(params.delta)) / epsilon1**2
    return max(0.0, (need - d0) / (1.0 - params.u * epsilon0))


def d1_bound_asymptotic(params: TheoryParams, epsilon0: float, epsilon1: float) -> float:
    """``(K + log(1/delta)) / (eps1^2 (1 - u eps0))`` without constants."""
    _check_recurrent(params.u, epsilon0)
    if epsilon1 <= 0:
        raise ValueError("epsilon1 must be positive")
    return (params.K + _log_inv(params.delta)) / (epsilon1**2 * (1.0 - params.u * epsilon0))


def error_after(params: TheoryParams, epsilon0: float, d0: float, d1: float) -> float:
    """Error reached with ``d0`` labeled and ``d1`` rollout samples (inverse of :func:`d1_bound`)."""
    useful = d0 + d1 * (1.0 - params.u * epsilon0)
    return math.sqrt(2.0 * (params.K + _log_inv(params.delta)) / useful)


def bc_equivalent_samples(d0: float, d1: float, params: TheoryParams, K_policy: float, K_inverse: float) -> float:
    """Labeled demonstrations plain BC would need to match BCO's error.

    ``params.epsilon`` plays the role of the initial policy's error eps0.
    """
    if K_inverse == 0:
        raise ValueError("K_inverse must be non-zero")
    return (d0 + d1 * (1.0 - params.u * params.epsilon)) * K_policy / K_inverse


# --- continuum limit ---------------------------------------------------------


def stall_point(u: float, K: float) -> float:
    return u * u * K


def ode_rhs(N, u: float, K: float):
    """``dN/dt = 1 - u sqrt(K / N)``."""
    N = np.asarray(N, dtype=float)
    if np.any(N <= 0):
        raise ValueError("N must be positive")
    out = 1.0 - u * np.sqrt(K / N)
    return float(out) if out.ndim == 0 else out


def ode_implicit_time(N, u: float, K: float):
    """Antiderivative ``t(N) = 2u^2 K log(sqrt N - u sqrt K) + 2u sqrt(K N) + N``."""
    N = np.asarray(N, dtype=float)
    gap = np.sqrt(N) - u * math.sqrt(K)
    if np.any(gap <= 0):
        raise DomainError("sqrt(N) must exceed u sqrt(K)")
    log_term = 2.0 * u * u * K * np.log(gap) if u * K > 0 else 0.0
    out = log_term + 2.0 * u * np.sqrt(K * N) + N
    return float(out) if np.ndim(out) == 0 else out


def ode_solution(t: float, N0: float, u: float, K: float, rtol: float = 1e-10) -> float:
    """``N(t)`` with ``N(0) = N0`` by bisection on the monotone implicit form."""
    if N0 <= stall_point(u, K):
        raise DomainError("N0 must lie above the stall point u^2 K")
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return float(N0)
    target = ode_implicit_time(N0, u, K) + t
    # 0 < rhs(N0) <= dN/dt <= 1 brackets the solution
    lo = N0 + t * ode_rhs(N0, u, K)
    hi = N0 + t
    if lo >= hi:
        return float(hi)
    f = lambda n: ode_implicit_time(n, u, K) - target
    return float(bisect(f, lo, hi, xtol=1e-300, rtol=max(rtol, 4 * np.finfo(float).eps), maxiter=500))


@dataclass(frozen=True)
class RecurrenceTrajectory:
    t: np.ndarray
    N: np.ndarray
    epsilon: np.ndarray


def integrate_discrete_recurrence(N0: float, alpha: float, u: float, K: float, steps: int) -> RecurrenceTrajectory:
    """Iterate ``N_k = N_{k-1} + alpha (1 - u eps_k)``, ``eps_k = sqrt(K / N_{k-1})``.

    Entry ``k`` of the result holds the time ``k alpha``, ``N_k`` and the error
    ``sqrt(K / N_k)`` the next session would start from.
    """
    if N0 <= stall_point(u, K):
        raise DomainError("N0 must lie above the stall point u^2 K")
    if alpha <= 0 or steps < 0:
        raise ValueError("alpha must be positive and steps non-negative")
    N = np.empty(steps + 1)
    N[0] = N0
    for k in range(1, steps + 1):
        N[k] = N[k - 1] + alpha * (1.0 - u * math.sqrt(K / N[k - 1]))
    return RecurrenceTrajectory(alpha * np.arange(steps + 1), N, np.sqrt(K / N))


def rk4_integrate(N0: float, u: float, K: float, t_end: float, dt: float) -> RecurrenceTrajectory:
    """Fixed-step classical Runge-Kutta reference for the sample ODE."""
    steps = int(round(t_end / dt))
    if steps < 1 or not math.isclose(steps * dt, t_end, rel_tol=1e-9):
        raise ValueError("t_end must be a positive multiple of dt")
    f = lambda n: 1.0 - u * math.sqrt(K / n)
    N = np.empty(steps + 1)
    N[0] = N0
    for k in range(steps):
        n = N[k]
        k1 = f(n)
        k2 = f(n + 0.5 * dt * k1)
        k3 = f(n + 0.5 * dt * k2)
        k4 = f(n + dt * k3)
        N[k + 1] = n + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return RecurrenceTrajectory(dt * np.arange(steps + 1), N, np.sqrt(K / N))


def continuum_gap(N0: float, alpha: float, u: float, K: float, t: float) -> float:
    """Relative gap ``|N_discrete(t) - N_ode(t)| / N_ode(t)``."""
    steps = int(round(t / alpha))
    if not math.isclose(steps * alpha, t, rel_tol=1e-9):
        raise ValueError("t must be a multiple of alpha")
    discrete = integrate_discrete_recurrence(N0, alpha, u, K, steps).N[-1]
    exact = ode_solution(t, N0, u, K)
    return abs(discrete - exact) / exact


def _check_ordering(epsilon: float, epsilon0: float, u: float):
    if not 0 < epsilon <= epsilon0:
        raise ValueError("need 0 < epsilon <= epsilon0")
    if u * epsilon0 >= 1.0:
        raise ValueError("need epsilon0 < 1/u")


def sample_complexity_asymptotic(epsilon: float, epsilon0: float, u: float, K: float) -> float:
    """Interaction time to drive the error from ``epsilon0`` down to ``epsilon``.

    Exact integral of the sample ODE between ``N = K/eps0^2`` and
    ``N = K/eps^2``:
    ``2u^2 K log((1/eps - u)/(1/eps0 - u)) + 2uK (1/eps - 1/eps0) + K (1/eps^2 - 1/eps0^2)``.
    """
    _check_ordering(epsilon, epsilon0, u)
    log_term = 0.0
    if u > 0:
        log_term = 2.0 * u * u * K * math.log((1.0 / epsilon - u) / (1.0 / epsilon0 - u))
    return log_term + 2.0 * u * K * (1.0 / epsilon - 1.0 / epsilon0) + K * (1.0 / epsilon**2 - 1.0 / epsilon0**2)


def sample_complexity_two_term(epsilon: float, epsilon0: float, u: float, K: float) -> float:
    """Constant-free form ``u^2 K log((1/eps - u)/(1/eps0 - u)) + K (1/eps^2 - 1/eps0^2)``."""
    _check_ordering(epsilon, epsilon0, u)
    log_term = u * u * K * math.log((1.0 / epsilon - u) / (1.0 / epsilon0 - u)) if u > 0 else 0.0
    return log_term + K * (1.0 / epsilon**2 - 1.0 / epsilon0**2)
