"""Gridworld (optionally with cliffs) and classic mountain car.

Both environments are small seeded state machines with ``reset``/``step``.
The gridworld also converts to an exact :class:`~bcostar.mdp.MdpSpec`;
mountain car can be discretized into one for exact analysis.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .mdp import MdpSpec, as_features

# N, E, S, W as (d_row, d_col)
MOVES = np.array([[-1, 0], [0, 1], [1, 0], [0, -1]])
ACTION_NAMES = ("N", "E", "S", "W")


class UsageError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvStep:
    next_state: object
    reward: float
    done: bool


# --- gridworld ---------------------------------------------------------------


@dataclass(frozen=True)
class GridworldConfig:
    width: int
    height: int
    goal: tuple[int, int]
    obstacles: frozenset = frozenset()
    cliff_cells: frozenset = frozenset()
    slip_prob: float = 0.0
    horizon: int = 20
    start: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "goal", tuple(self.goal))
        object.__setattr__(self, "obstacles", frozenset(tuple(c) for c in self.obstacles))
        object.__setattr__(self, "cliff_cells", frozenset(tuple(c) for c in self.cliff_cells))
        if self.start is not None:
            object.__setattr__(self, "start", tuple(self.start))
        if self.width < 1 or self.height < 1 or self.horizon < 1:
            raise ValueError("width, height and horizon must be positive")
        if not 0.0 <= self.slip_prob < 1.0:
            raise ValueError("slip_prob must lie in [0, 1)")
        for cell in (self.goal, *self.obstacles, *self.cliff_cells):
            if not self.in_bounds(cell):
                raise ValueError(f"cell {cell} outside the {self.height}x{self.width} grid")
        if self.goal in self.obstacles or self.goal in self.cliff_cells:
            raise ValueError("goal cannot be an obstacle or a cliff")
        if self.start is not None and not self.in_bounds(self.start):
            raise ValueError(f"start {self.start} outside the grid")
        if not self.start_cells():
            raise ValueError("grid has no free start cell")

    def in_bounds(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    @property
    def n_states(self) -> int:
        return self.width * self.height

    def index(self, cell) -> int:
        return cell[0] * self.width + cell[1]

    def cell(self, index: int) -> tuple[int, int]:
        return divmod(int(index), self.width)

    def start_cells(self) -> list[tuple[int, int]]:
        if self.start is not None:
            return [self.start]
        blocked = self.obstacles | self.cliff_cells | {self.goal}
        return [
            (r, c)
            for r in range(self.height)
            for c in range(self.width)
            if (r, c) not in blocked
        ]

    def move(self, cell, action: int) -> tuple[int, int]:
        nxt = (cell[0] + MOVES[action][0], cell[1] + MOVES[action][1])
        if not self.in_bounds(nxt) or nxt in self.obstacles:
            return tuple(cell)
        return nxt


def gridworld_to_mdp(config: GridworldConfig) -> MdpSpec:
    """Exact tabular MDP for ``config`` with actions N/E/S/W.

    With probability ``slip_prob`` the executed move is one of the other three
    directions, chosen uniformly.  The goal absorbs at zero cost, cliff cells
    absorb at cost 1 per step, every other step costs ``1 / horizon``.
    """
    S, A = config.n_states, 4
    P = np.zeros((S, A, S))
    C = np.full((S, A), 1.0 / config.horizon)
    for s in range(S):
        cell = config.cell(s)
        if cell == config.goal or cell in config.cliff_cells or cell in config.obstacles:
            P[s, :, s] = 1.0
            if cell == config.goal:
                C[s] = 0.0
            elif cell in config.cliff_cells:
                C[s] = 1.0
            continue
        for a in range(A):
            for executed in range(A):
                p = 1.0 - config.slip_prob if executed == a else config.slip_prob / (A - 1)
                if p > 0:
                    P[s, a, config.index(config.move(cell, executed))] += p
    starts = config.start_cells()
    d0 = np.zeros(S)
    d0[[config.index(c) for c in starts]] = 1.0 / len(starts)
    unreachable = _cells_not_reaching_goal(config, starts)
    if unreachable:
        warnings.warn(f"goal unreachable from start cells {sorted(unreachable)}", RuntimeWarning)
    return MdpSpec(P, C, config.horizon, d0)


def _cells_not_reaching_goal(config: GridworldConfig, starts) -> set:
    # reverse BFS from the goal over deterministic moves
    seen = {config.goal}
    queue = deque([config.goal])
    free = [
        (r, c)
        for r in range(config.height)
        for c in range(config.width)
        if (r, c) not in config.obstacles and (r, c) not in config.cliff_cells
    ]
    while queue:
        target = queue.popleft()
        for cell in free:
            if cell not in seen and any(config.move(cell, a) == target for a in range(4)):
                seen.add(cell)
                queue.append(cell)
    return {c for c in starts if c not in seen}


@lru_cache(maxsize=64)
def _quiet_mdp(config: GridworldConfig) -> MdpSpec:
    # MdpSpec is immutable, so rollout workers can share one instance
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return gridworld_to_mdp(config)


class GridworldEnv:
    """Episodic gridworld; observations are integer state ids.

    Episodes end on reaching the goal or after ``horizon`` steps.  The reward
    is the negated cost of the underlying MDP.
    """

    n_actions = 4

    def __init__(self, config: GridworldConfig, seed=None):
        self.config = config
        self.mdp = _quiet_mdp(config)
        self._goal = config.index(config.goal)
        self.seed(seed)

    def seed(self, seed=None):
        self.rng = np.random.default_rng(seed)
        self.state = None
        self.done = True
        self.t = 0

    def reset(self) -> int:
        self.state = int(self.rng.choice(self.mdp.n_states, p=self.mdp.initial_dist))
        self.t = 0
        self.done = False
        return self.state

    def step(self, action: int) -> EnvStep:
        if self.done:
            raise UsageError("step() called on a finished episode; call reset()")
        action = int(action)
        if not 0 <= action < self.n_actions:
            raise UsageError(f"action {action} outside 0..{self.n_actions - 1}")
        s = self.state
        reward = -float(self.mdp.cost[s, action])
        self.state = int(self.rng.choice(self.mdp.n_states, p=self.mdp.transition[s, action]))
        self.t += 1
        self.done = self.state == self._goal or self.t >= self.config.horizon
        return EnvStep(self.state, reward, self.done)


# --- mountain car ------------------------------------------------------------


@dataclass(frozen=True)
class MountainCarConfig:
    min_pos: float = -1.2
    max_pos: float = 0.6
    max_speed: float = 0.07
    force: float = 0.001
    gravity_scale: float = 0.0025
    goal_position: float = 0.5
    max_steps: int = 200
    start_low: float = -0.6
    start_high: float = -0.4
    n_actions: int = field(default=3, init=False)

    def __post_init__(self):
        if not self.min_pos < self.goal_position <= self.max_pos:
            raise ValueError("need min_pos < goal_position <= max_pos")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")


def mountain_car_dynamics(config: MountainCarConfig, pos, vel, action):
    """One step of the classic dynamics; works elementwise on arrays."""
    vel = vel + (np.asarray(action) - 1) * config.force - np.cos(3 * pos) * config.gravity_scale
    vel = np.clip(vel, -config.max_speed, config.max_speed)
    pos = np.clip(pos + vel, config.min_pos, config.max_pos)
    vel = np.where((pos <= config.min_pos) & (vel < 0), 0.0, vel)
    return pos, vel


class MountainCarEnv:
    """Mountain car with actions push-left / no-push / push-right, reward -1 per step."""

    n_actions = 3

    def __init__(self, config: MountainCarConfig | None = None, seed=None):
        self.config = config or MountainCarConfig()
        self.seed(seed)

    def seed(self, seed=None):
        self.rng = np.random.default_rng(seed)
        self.state = None
        self.done = True
        self.t = 0

    def reset(self) -> np.ndarray:
        cfg = self.config
        self.state = np.array([self.rng.uniform(cfg.start_low, cfg.start_high), 0.0])
        self.t = 0
        self.done = False
        return self.state.copy()

    def step(self, action: int) -> EnvStep:
        if self.done:
            raise UsageError("step() called on a finished episode; call reset()")
        action = int(action)
        if not 0 <= action < self.n_actions:
            raise UsageError(f"action {action} outside 0..{self.n_actions - 1}")
        pos, vel = mountain_car_dynamics(self.config, self.state[0], self.state[1], action)
        self.state = np.array([float(pos), float(vel)])
        self.t += 1
        self.done = bool(pos >= self.config.goal_position) or self.t >= self.config.max_steps
        return EnvStep(self.state.copy(), -1.0, self.done)


@dataclass(frozen=True)
class MountainCarGrid:
    """Bin layout of a discretized mountain car."""

    config: MountainCarConfig
    bins_pos: int
    bins_vel: int

    @property
    def pos_edges(self):
        return np.linspace(self.config.min_pos, self.config.max_pos, self.bins_pos + 1)

    @property
    def vel_edges(self):
        return np.linspace(-self.config.max_speed, self.config.max_speed, self.bins_vel + 1)

    def index(self, states) -> np.ndarray:
        X = as_features(states).astype(float)
        i = np.clip(np.searchsorted(self.pos_edges, X[:, 0], side="right") - 1, 0, self.bins_pos - 1)
        j = np.clip(np.searchsorted(self.vel_edges, X[:, 1], side="right") - 1, 0, self.bins_vel - 1)
        return i * self.bins_vel + j

    def goal_bins(self) -> np.ndarray:
        upper = self.pos_edges[1:]
        goal_rows = upper > self.config.goal_position
        return np.repeat(goal_rows, self.bins_vel)


def discretize_mountain_car(
    config: MountainCarConfig, bins_pos: int, bins_vel: int, subsamples: int = 3
) -> tuple[MdpSpec, MountainCarGrid]:
    """Tabular approximation of mountain car on a ``bins_pos x bins_vel`` grid.

    Each bin's outgoing distribution is built by pushing a ``subsamples x
    subsamples`` lattice of points spread over the bin (just the bin centre for
    ``subsamples=1``) through the dynamics.  Centre-only transitions are too
    coarse on fine grids: one step's velocity change is smaller than a bin,
    so every bin maps onto itself and value iteration cannot find the goal.  Bins whose position range reaches
    the goal absorb at zero cost; other steps cost ``1 / max_steps``.
    """
    if bins_pos < 2 or bins_vel < 2 or subsamples < 1:
        raise ValueError("need at least 2 bins per dimension and 1 subsample")
    grid = MountainCarGrid(config, bins_pos, bins_vel)
    S, A = bins_pos * bins_vel, config.n_actions
    pe, ve = grid.pos_edges, grid.vel_edges
    offsets = (np.arange(subsamples) + 0.5) / subsamples
    pos = pe[:-1, None] + np.diff(pe)[:, None] * offsets[None, :]  # (bins_pos, k)
    vel = ve[:-1, None] + np.diff(ve)[:, None] * offsets[None, :]
    # (S, k*k) sample points for every bin
    P_s = np.repeat(pos, bins_vel, axis=0)[:, :, None] * np.ones((1, 1, subsamples))
    V_s = np.tile(vel, (bins_pos, 1))[:, None, :] * np.ones((1, subsamples, 1))
    P_s = P_s.reshape(S, -1)
    V_s = V_s.reshape(S, -1)
    goal = grid.goal_bins()
    P = np.zeros((S, A, S))
    w = 1.0 / P_s.shape[1]
    for a in range(A):
        p2, v2 = mountain_car_dynamics(config, P_s, V_s, a)
        nxt = grid.index(np.column_stack([p2.ravel(), v2.ravel()])).reshape(S, -1)
        for s in range(S):
            np.add.at(P[s, a], nxt[s], w)
    P[goal] = 0.0
    for g in np.flatnonzero(goal):
        P[g, :, g] = 1.0
    C = np.full((S, A), 1.0 / config.max_steps)
    C[goal] = 0.0
    start = grid.index(
        np.column_stack([np.linspace(config.start_low, config.start_high, 64), np.zeros(64)])
    )
    d0 = np.bincount(start, minlength=S).astype(float)
    return MdpSpec(P, C, config.max_steps, d0 / d0.sum()), grid


def make_env(kind: str, params: dict | None = None, seed=None):
    params = dict(params or {})
    if kind == "gridworld":
        return GridworldEnv(GridworldConfig(**params), seed=seed)
    if kind == "mountain_car":
        return MountainCarEnv(MountainCarConfig(**params), seed=seed)
    raise ValueError(f"unknown environment {kind!r}")
