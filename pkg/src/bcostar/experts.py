"""Expert policies and demonstration generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import Dataset, MdpSpec, as_features
from .rollout import collect_episodes

TIE_TOL = 1e-12


class UnsupportedError(ValueError):
    pass


class TabularPolicy:
    """Deterministic policy over integer state ids, given as an action table."""

    def __init__(self, actions, n_actions: int):
        self.actions = np.asarray(actions, dtype=int)
        self.n_actions = int(n_actions)

    def predict(self, X):
        return self.actions[as_features(X)[:, 0].astype(int)]

    def predict_proba(self, X):
        return np.eye(self.n_actions)[self.predict(X)]


class UniformRandomPolicy:
    def __init__(self, n_actions: int):
        self.n_actions = int(n_actions)

    def predict_proba(self, X):
        return np.full((len(as_features(X)), self.n_actions), 1.0 / self.n_actions)

    def predict(self, X):
        return np.zeros(len(as_features(X)), dtype=int)

    def act(self, X, rng):
        return rng.integers(self.n_actions, size=len(as_features(X)))


class MountainCarScriptedPolicy:
    """Energy pumping: push in the direction of the current velocity."""

    n_actions = 3

    def predict(self, X):
        vel = as_features(X).astype(float)[:, 1]
        return np.where(vel >= 0, 2, 0)

    def predict_proba(self, X):
        return np.eye(3)[self.predict(X)]


def mountain_car_scripted_expert() -> MountainCarScriptedPolicy:
    return MountainCarScriptedPolicy()


class DiscretizedPolicy:
    """Continuous-state policy that looks its action up in a binned table."""

    def __init__(self, grid, actions, n_actions: int):
        self.grid = grid
        self.actions = np.asarray(actions, dtype=int)
        self.n_actions = n_actions

    def predict(self, X):
        return self.actions[self.grid.index(X)]

    def predict_proba(self, X):
        return np.eye(self.n_actions)[self.predict(X)]


def _argmin_low_index(Q: np.ndarray) -> np.ndarray:
    best = Q.min(axis=-1, keepdims=True)
    return np.argmax(Q <= best + TIE_TOL, axis=-1)


def value_iteration(mdp: MdpSpec) -> tuple[TabularPolicy, np.ndarray]:
    """Finite-horizon optimal control by backward induction.

    Returns the stationary greedy policy for the full horizon (used for
    demonstrations) and the optimal ``Q`` of shape ``(T + 1, S, A)``.  The
    time-indexed optimum is available as ``policy.time_actions`` with row
    ``t`` the action at step ``t``.  Ties go to the lowest action index.
    """
    T = mdp.horizon
    Q = np.zeros((T + 1, mdp.n_states, mdp.n_actions))
    V = np.zeros(mdp.n_states)
    time_actions = np.zeros((T, mdp.n_states), dtype=int)
    for k in range(1, T + 1):
        Q[k] = mdp.cost + mdp.transition @ V
        time_actions[T - k] = _argmin_low_index(Q[k])
        V = Q[k].min(axis=1)
    policy = TabularPolicy(time_actions[0], mdp.n_actions)
    policy.time_actions = time_actions
    return policy, Q


def value_iteration_policy_tensor(policy: TabularPolicy) -> np.ndarray:
    A = policy.n_actions
    return np.eye(A)[policy.time_actions]


@dataclass
class EpsilonExpert:
    """Replaces each base action by a different, uniformly chosen one with probability ``epsilon``."""

    base: object
    epsilon: float
    n_actions: int
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.n_actions < 2:
            raise UnsupportedError("an epsilon-expert needs at least two actions")
        self.rng = np.random.default_rng(self.seed)

    def act(self, X, rng):
        base = np.asarray(self.base.predict(X), dtype=int)
        flip = rng.random(len(base)) < self.epsilon
        shift = rng.integers(1, self.n_actions, size=len(base))
        return np.where(flip, (base + shift) % self.n_actions, base)

    def predict(self, X):
        return self.act(X, self.rng)

    def predict_proba(self, X):
        base = np.asarray(self.base.predict(X), dtype=int)
        out = np.full((len(base), self.n_actions), self.epsilon / (self.n_actions - 1))
        out[np.arange(len(base)), base] = 1.0 - self.epsilon
        return out


def epsilon_expert_wrap(base, epsilon: float, n_actions: int | None = None, seed=None) -> EpsilonExpert:
    if n_actions is None:
        n_actions = base.n_actions
    return EpsilonExpert(base, epsilon, n_actions, seed)


@dataclass(frozen=True)
class DemoRequest:
    n_trajectories: int
    labeled: bool = True
    seed: int | None = 0

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be at least 1")


def generate_demonstrations(policy, env, request: DemoRequest) -> Dataset:
    batch = collect_episodes(env, policy, request.n_trajectories, request.seed)
    return batch.dataset(labeled=request.labeled)

