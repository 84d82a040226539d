"""Seeded episode collection, batched across environment copies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import Dataset, Trajectory, as_features


@dataclass
class RolloutBatch:
    trajectories: list[Trajectory]
    returns: np.ndarray

    @property
    def n_steps(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def dataset(self, labeled: bool = True) -> Dataset:
        ds = Dataset(self.trajectories, labeled=True)
        return ds if labeled else ds.strip_actions()


def as_seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def spawn_env(env, seed):
    return type(env)(env.config, seed=seed)


def select_actions(policy, X: np.ndarray, rng: np.random.Generator, mode: str = "greedy"):
    """Actions for a batch of observations.

    ``greedy`` uses the policy's own choice (``act`` when the policy is
    intrinsically stochastic, otherwise ``predict``); ``sample`` draws from
    ``predict_proba``.
    """
    if mode == "sample":
        proba = np.asarray(policy.predict_proba(X))
        u = rng.random((len(X), 1))
        return np.minimum((np.cumsum(proba, axis=1) < u).sum(axis=1), proba.shape[1] - 1)
    if mode != "greedy":
        raise ValueError(f"unknown rollout mode {mode!r}")
    if hasattr(policy, "act"):
        return np.asarray(policy.act(X, rng))
    return np.asarray(policy.predict(X))


def collect_episodes(
    env, policy, n_episodes: int, seed, mode: str = "greedy", max_steps: int | None = None
) -> RolloutBatch:
    """Run ``n_episodes`` episodes of ``policy`` in lockstep.

    Episode ``i`` runs in its own copy of ``env`` seeded from child ``i`` of
    ``seed``; action noise comes from one further child stream.  The result
    depends only on ``(seed, n_episodes, policy)``.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    children = as_seed_sequence(seed).spawn(n_episodes + 1)
    envs = [spawn_env(env, c) for c in children[:n_episodes]]
    rng = np.random.default_rng(children[-1])
    states = [[e.reset()] for e in envs]
    actions = [[] for _ in envs]
    returns = np.zeros(n_episodes)
    active = list(range(n_episodes))
    steps = 0
    while active:
        X = as_features([states[i][-1] for i in active])
        chosen = select_actions(policy, X, rng, mode)
        still = []
        for i, a in zip(active, chosen):
            out = envs[i].step(int(a))
            states[i].append(out.next_state)
            actions[i].append(int(a))
            returns[i] += out.reward
            if not out.done:
                still.append(i)
        active = still
        steps += 1
        if max_steps is not None and steps >= max_steps:
            break
    trajectories = [Trajectory(s, a) for s, a in zip(states, actions)]
    return RolloutBatch(trajectories, returns)


def collect_transitions(env, policy, n_transitions: int, seed, mode: str = "greedy") -> RolloutBatch:
    """Whole episodes until at least ``n_transitions`` steps, truncated to exactly that many."""
    if n_transitions < 1:
        raise ValueError("n_transitions must be at least 1")
    trajectories, returns = [], []
    total = 0
    ss = as_seed_sequence(seed)
    while total < n_transitions:
        batch = collect_episodes(env, policy, 8, ss.spawn(1)[0], mode)
        for traj, ret in zip(batch.trajectories, batch.returns):
            if total >= n_transitions:
                break
            keep = min(len(traj), n_transitions - total)
            if keep < len(traj):
                traj = Trajectory(traj.states[: keep + 1], traj.actions[:keep])
            trajectories.append(traj)
            returns.append(ret)
            total += keep
    return RolloutBatch(trajectories, np.asarray(returns))
