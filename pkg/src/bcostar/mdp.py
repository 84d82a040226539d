"""Tabular MDPs, demonstration datasets and exact finite-horizon evaluation.

Everything here works in the cost convention: ``C[s, a]`` lies in ``[0, 1]``
and ``J(pi)`` is the expected undiscounted cost accumulated over ``horizon``
steps.  Policies are passed around as action-probability arrays, either
stationary with shape ``(S, A)`` or time-indexed with shape ``(T, S, A)``
where index ``t`` is the policy used at step ``t`` (``t = 0`` first).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

STOCHASTIC_ATOL = 1e-9
REACHABLE_TOL = 1e-12


class ConfigurationError(ValueError):
    """Inputs are structurally inconsistent (shapes, probabilities, anchors)."""


@dataclass(frozen=True, eq=False)
class MdpSpec:
    transition: np.ndarray
    cost: np.ndarray
    horizon: int
    initial_dist: np.ndarray
    discount: float | None = None

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        C = np.array(self.cost, dtype=float)
        d0 = np.array(self.initial_dist, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ConfigurationError(f"transition must have shape (S, A, S), got {P.shape}")
        if C.shape != P.shape[:2]:
            raise ConfigurationError(f"cost shape {C.shape} does not match transition {P.shape[:2]}")
        if d0.shape != (P.shape[0],):
            raise ConfigurationError(f"initial_dist shape {d0.shape} != ({P.shape[0]},)")
        if int(self.horizon) < 1:
            raise ConfigurationError("horizon must be positive")
        if np.any(P < 0) or not np.allclose(P.sum(axis=2), 1.0, rtol=0, atol=STOCHASTIC_ATOL):
            raise ConfigurationError("every transition row P[s, a, :] must be a distribution")
        if np.any(C < 0) or np.any(C > 1):
            raise ConfigurationError("costs must lie in [0, 1]")
        if np.any(d0 < 0) or abs(d0.sum() - 1.0) > STOCHASTIC_ATOL:
            raise ConfigurationError("initial_dist must be a distribution")
        for arr in (P, C, d0):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "cost", C)
        object.__setattr__(self, "initial_dist", d0)
        object.__setattr__(self, "horizon", int(self.horizon))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def with_cost(self, cost) -> "MdpSpec":
        return MdpSpec(self.transition, cost, self.horizon, self.initial_dist, self.discount)


@dataclass(frozen=True)
class Transition:
    state: object
    action: int
    next_state: object


@dataclass
class Trajectory:
    states: list
    actions: list | None = None

    def __post_init__(self):
        self.states = list(self.states)
        if self.actions is not None:
            self.actions = [int(a) for a in self.actions]
            if len(self.actions) != len(self.states) - 1:
                raise ValueError(
                    f"trajectory has {len(self.states)} states but {len(self.actions)} actions"
                )

    @property
    def labeled(self) -> bool:
        return self.actions is not None

    def __len__(self):
        return max(len(self.states) - 1, 0)

    def transitions(self) -> list[Transition]:
        if self.actions is None:
            raise ValueError("observation-only trajectory has no action labels")
        return [
            Transition(s, a, s2)
            for s, a, s2 in zip(self.states[:-1], self.actions, self.states[1:])
        ]

    def strip_actions(self) -> "Trajectory":
        return Trajectory(self.states, None)


@dataclass
class Dataset:
    trajectories: list[Trajectory] = field(default_factory=list)
    labeled: bool = True

    def __post_init__(self):
        if self.labeled and any(not t.labeled for t in self.trajectories):
            raise ValueError("labeled dataset contains a trajectory without actions")

    def __len__(self):
        return len(self.trajectories)

    @property
    def n_transitions(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def strip_actions(self) -> "Dataset":
        return Dataset([t.strip_actions() for t in self.trajectories], labeled=False)

    def state_action_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Flatten to ``(X, y)`` with one row per (state, action) pair."""
        if not self.labeled:
            raise ValueError("dataset is not labeled")
        states = [s for t in self.trajectories for s in t.states[:-1]]
        actions = [a for t in self.trajectories for a in t.actions]
        return as_features(states), np.asarray(actions, dtype=int)

    def transition_arrays(self, labels: bool = True):
        """Flatten to ``(S, S_next[, y])`` with one row per transition."""
        s = [x for t in self.trajectories for x in t.states[:-1]]
        s2 = [x for t in self.trajectories for x in t.states[1:]]
        out = (as_features(s), as_features(s2))
        if labels:
            if not self.labeled:
                raise ValueError("dataset is not labeled")
            out += (np.asarray([a for t in self.trajectories for a in t.actions], dtype=int),)
        return out

    def extend(self, other: "Dataset") -> "Dataset":
        return Dataset(self.trajectories + other.trajectories, self.labeled and other.labeled)


def as_features(states: Sequence) -> np.ndarray:
    """Stack states into a 2-D array; integer states become a single column."""
    arr = np.asarray(states)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.size == 0:
        arr = arr.reshape(0, arr.shape[1] if arr.ndim == 2 else 1)
    return arr


# --- JSON-lines serialization ------------------------------------------------


def _jsonable_state(s):
    if isinstance(s, (np.integer, int)):
        return int(s)
    return [float(x) for x in np.ravel(s)]


def dumps_dataset(dataset: Dataset) -> str:
    lines = []
    for traj in dataset.trajectories:
        rec = {
            "states": [_jsonable_state(s) for s in traj.states],
            "actions": None if traj.actions is None else [int(a) for a in traj.actions],
        }
        lines.append(json.dumps(rec, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def loads_dataset(text: str) -> Dataset:
    trajectories = []
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        states = [s if isinstance(s, int) else np.asarray(s, dtype=float) for s in rec["states"]]
        trajectories.append(Trajectory(states, rec.get("actions")))
    labeled = bool(trajectories) and all(t.labeled for t in trajectories)
    return Dataset(trajectories, labeled=labeled)


def save_dataset(dataset: Dataset, path) -> None:
    Path(path).write_text(dumps_dataset(dataset))


def load_dataset(path) -> Dataset:
    return loads_dataset(Path(path).read_text())


# --- exact evaluation --------------------------------------------------------


def policy_tensor(mdp: MdpSpec, policy) -> np.ndarray:
    """Normalize a policy to a ``(T, S, A)`` probability tensor.

    Accepts a vector of action ids ``(S,)``, a stationary distribution
    ``(S, A)``, a time-indexed distribution ``(T, S, A)`` or an object with
    ``predict_proba`` over integer state ids.
    """
    S, A, T = mdp.n_states, mdp.n_actions, mdp.horizon
    if hasattr(policy, "predict_proba"):
        policy = np.asarray(policy.predict_proba(as_features(np.arange(S))), dtype=float)
    pi = np.asarray(policy)
    if pi.ndim == 1:
        if pi.shape != (S,):
            raise ConfigurationError(f"deterministic policy needs {S} entries, got {pi.shape}")
        if np.any((pi < 0) | (pi >= A)):
            raise ConfigurationError("policy action outside the action set")
        pi = np.eye(A)[pi.astype(int)]
    pi = pi.astype(float)
    if pi.ndim == 2:
        if pi.shape != (S, A):
            raise ConfigurationError(f"policy shape {pi.shape} != ({S}, {A})")
        pi = np.broadcast_to(pi, (T, S, A))
    elif pi.ndim != 3 or pi.shape != (T, S, A):
        raise ConfigurationError(f"policy shape {pi.shape} incompatible with MDP ({T}, {S}, {A})")
    if not np.allclose(pi.sum(axis=-1), 1.0, atol=1e-6):
        raise ConfigurationError("policy rows must sum to 1")
    return pi


def greedy_actions(pi: np.ndarray) -> np.ndarray:
    """Argmax actions with ties broken toward the lowest index."""
    return np.argmax(pi, axis=-1)


def state_distributions(mdp: MdpSpec, policy) -> np.ndarray:
    """``d[t, s]``: probability of being in ``s`` at step ``t`` (``t = 0..T-1``)."""
    pi = policy_tensor(mdp, policy)
    d = np.empty((mdp.horizon, mdp.n_states))
    d[0] = mdp.initial_dist
    for t in range(1, mdp.horizon):
        # P_pi[s, s'] = sum_a pi(a|s) P(s'|s, a)
        d[t] = np.einsum("s,sa,sap->p", d[t - 1], pi[t - 1], mdp.transition)
    return d


def exact_policy_cost(mdp: MdpSpec, policy) -> float:
    """Exact expected ``horizon``-step cost by forward propagation."""
    pi = policy_tensor(mdp, policy)
    d = state_distributions(mdp, pi)
    return float(np.einsum("ts,tsa,sa->", d, pi, mdp.cost))


def exact_q_values(mdp: MdpSpec, policy) -> np.ndarray:
    """Backward-induction Q-values under continuation policy ``policy``.

    Returns an array of shape ``(T + 1, S, A)`` where ``Q[k]`` is the
    expected cost of taking ``a`` in ``s`` with ``k`` steps remaining and
    following ``policy`` afterwards; ``Q[0]`` is identically zero and
    ``Q[1] == cost``.  With ``k`` steps remaining the step index is
    ``T - k``, so continuation uses ``policy[T - k + 1]``.
    """
    pi = policy_tensor(mdp, policy)
    T = mdp.horizon
    Q = np.zeros((T + 1, mdp.n_states, mdp.n_actions))
    V = np.zeros(mdp.n_states)
    for k in range(1, T + 1):
        Q[k] = mdp.cost + mdp.transition @ V
        V = np.einsum("sa,sa->s", pi[T - k], Q[k])
    return Q


def disagreement_rate(mdp: MdpSpec, policy, expert) -> float:
    """Expected 0-1 disagreement with the expert's action under ``d_pi``.

    Averaged uniformly over the ``horizon`` steps.  A stochastic learner
    contributes the probability mass it puts off the expert's action.
    """
    pi = policy_tensor(mdp, policy)
    expert_actions = greedy_actions(policy_tensor(mdp, expert))
    d = state_distributions(mdp, pi)
    agree = np.take_along_axis(pi, expert_actions[..., None], axis=-1)[..., 0]
    return float(np.einsum("ts,ts->", d, 1.0 - agree) / mdp.horizon)


def reachable_mask(mdp: MdpSpec, policy=None, tol: float = REACHABLE_TOL) -> np.ndarray:
    """``mask[t, s]``: state has probability above ``tol`` at step ``t``.

    With ``policy=None`` reachability is taken over all policies (the union of
    supports under the uniformly random policy).
    """
    if policy is None:
        policy = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
    return state_distributions(mdp, policy) > tol


def random_mdp(
    rng: np.random.Generator,
    n_states: int,
    n_actions: int,
    horizon: int,
    sparsity: float = 0.0,
) -> MdpSpec:
    """Random tabular MDP; ``sparsity`` zeroes that fraction of transition entries."""
    P = rng.random((n_states, n_actions, n_states))
    if sparsity > 0:
        P *= rng.random(P.shape) >= sparsity
        dead = P.sum(axis=2) == 0
        P[dead, rng.integers(n_states, size=dead.sum())] = 1.0
    P /= P.sum(axis=2, keepdims=True)
    C = rng.random((n_states, n_actions))
    d0 = rng.random(n_states)
    return MdpSpec(P, C, horizon, d0 / d0.sum())


def monte_carlo_rollouts(
    mdp: MdpSpec, policy, n: int, rng: np.random.Generator, expert=None
) -> dict:
    """Sampled per-episode cost (and disagreement count) for ``n`` rollouts.

    Independent of the exact routines above; used as a test oracle.
    """
    pi = policy_tensor(mdp, policy)
    expert_actions = None if expert is None else greedy_actions(policy_tensor(mdp, expert))
    cdf_d0 = np.cumsum(mdp.initial_dist)
    cdf_P = np.cumsum(mdp.transition, axis=2)
    s = np.minimum(np.searchsorted(cdf_d0, rng.random(n), side="right"), mdp.n_states - 1)
    cost = np.zeros(n)
    disagree = np.zeros(n)
    for t in range(mdp.horizon):
        cdf_pi = np.cumsum(pi[t][s], axis=1)
        a = np.minimum((cdf_pi < rng.random((n, 1))).sum(axis=1), mdp.n_actions - 1)
        cost += mdp.cost[s, a]
        if expert_actions is not None:
            disagree += a != expert_actions[t][s]
        row = cdf_P[s, a]
        s = np.minimum((row < rng.random((n, 1))).sum(axis=1), mdp.n_states - 1)
    return {"cost": cost, "disagree": disagree}

