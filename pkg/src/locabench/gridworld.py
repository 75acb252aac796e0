"""GridWorldLoCA: a rectangular grid with slippery moves and two terminal cells.

Cells are ``(row, col)`` with row 0 at the top. Internally the domain works
on flat indices ``row * width + col`` so tabular agents can index arrays
directly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .env import Hit, Task, loca_reward

UP, DOWN, LEFT, RIGHT = range(4)
N_ACTIONS = 4
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))


def _neighbours(cell, width, height):
    r, c = cell
    for dr, dc in MOVES:
        if 0 <= r + dr < height and 0 <= c + dc < width:
            yield (r + dr, c + dc)


@dataclass(frozen=True)
class GridSpec:
    width: int = 8
    height: int = 8
    t1_cell: tuple = (0, 0)
    t2_cell: Optional[tuple] = None
    t1_zone_cells: Optional[frozenset] = None
    slip_prob: float = 0.25

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if self.t2_cell is None:
            object.__setattr__(self, "t2_cell", (self.height - 1, self.width - 1))
        object.__setattr__(self, "t1_cell", tuple(self.t1_cell))
        object.__setattr__(self, "t2_cell", tuple(self.t2_cell))
        if self.t1_zone_cells is None:
            zone = {self.t1_cell, *_neighbours(self.t1_cell, self.width, self.height)}
        else:
            zone = {tuple(c) for c in self.t1_zone_cells}
        object.__setattr__(self, "t1_zone_cells", frozenset(zone))
        for cell in (self.t1_cell, self.t2_cell, *zone):
            if not self.contains(cell):
                raise ValueError(f"cell {cell} lies outside the {self.height}x{self.width} grid")
        if self.t1_cell == self.t2_cell:
            raise ValueError("T1 and T2 must be different cells")
        if self.t1_cell not in zone:
            raise ValueError("the T1-zone must contain T1")
        if self.t2_cell in zone:
            raise ValueError("T2 cannot lie inside the T1-zone")
        if not 0.0 <= self.slip_prob <= 1.0:
            raise ValueError(f"slip_prob must lie in [0, 1], got {self.slip_prob}")

    def contains(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    @property
    def n_cells(self) -> int:
        return self.width * self.height


def move(cell, direction: int, spec: GridSpec):
    dr, dc = MOVES[direction]
    nxt = (cell[0] + dr, cell[1] + dc)
    return nxt if spec.contains(nxt) else tuple(cell)


def grid_step(cell, action: int, spec: GridSpec, rng: np.random.Generator):
    """Apply ``action`` from ``cell``; with prob. ``slip_prob`` the direction is random."""
    direction = action
    if spec.slip_prob > 0.0 and rng.random() < spec.slip_prob:
        direction = int(rng.integers(N_ACTIONS))
    return move(cell, direction, spec)


class GridWorld:
    """Domain object for the LoCA layer; states are flat cell indices."""

    n_actions = N_ACTIONS

    def __init__(self, spec: GridSpec | None = None):
        self.spec = spec = spec or GridSpec()
        self.n_states = spec.n_cells
        self.low = np.array([0, 0])
        self.high = np.array([spec.height - 1, spec.width - 1])
        zone = np.array(sorted(spec.t1_zone_cells))
        self.zone_low, self.zone_high = zone.min(axis=0), zone.max(axis=0)

        self._next = np.empty((self.n_states, N_ACTIONS), dtype=np.int64)
        for s in range(self.n_states):
            for d in range(N_ACTIONS):
                self._next[s, d] = self.index(move(self.cell(s), d, spec))
        self._hit = np.zeros(self.n_states, dtype=np.int64)
        self._hit[self.index(spec.t1_cell)] = Hit.T1
        self._hit[self.index(spec.t2_cell)] = Hit.T2
        self._zone = np.zeros(self.n_states, dtype=bool)
        for cell in spec.t1_zone_cells:
            self._zone[self.index(cell)] = True
        self.terminal = self._hit != Hit.NONE
        self.nonterminal = np.flatnonzero(~self.terminal)

    def index(self, cell) -> int:
        return int(cell[0]) * self.spec.width + int(cell[1])

    def cell(self, index: int) -> tuple:
        return divmod(int(index), self.spec.width)

    def dynamics(self, state: int, action: int, rng: np.random.Generator) -> int:
        direction = action
        if self.spec.slip_prob > 0.0 and rng.random() < self.spec.slip_prob:
            direction = int(rng.integers(N_ACTIONS))
        return int(self._next[state, direction])

    def hit(self, state: int) -> Hit:
        return Hit(self._hit[state])

    def in_t1_zone(self, state: int) -> bool:
        return bool(self._zone[state])

    def sample_box(self, rng: np.random.Generator, low, high) -> int:
        r = int(rng.integers(low[0], high[0] + 1))
        c = int(rng.integers(low[1], high[1] + 1))
        return r * self.spec.width + c

    def dynamics_batch(self, states, actions, rng: np.random.Generator):
        states = np.asarray(states)
        directions = np.asarray(actions).copy()
        if self.spec.slip_prob > 0.0:
            slip = rng.random(len(states)) < self.spec.slip_prob
            directions[slip] = rng.integers(N_ACTIONS, size=int(slip.sum()))
        return self._next[states, directions]

    def hit_batch(self, states) -> np.ndarray:
        return self._hit[np.asarray(states)]

    def zone_batch(self, states) -> np.ndarray:
        return self._zone[np.asarray(states)]

    def stack(self, states):
        return np.asarray(states, dtype=np.int64)


class MDP(NamedTuple):
    P: np.ndarray  # (S, A, S) transition probabilities
    R: np.ndarray  # (S, A) expected reward
    terminal: np.ndarray  # (S,) bool


def enumerate_mdp(spec: GridSpec, task: Task | str) -> MDP:
    """Exact transition and reward tensors, including the T1-zone guard.

    Terminal cells are absorbing with zero reward so every row is a
    distribution.
    """
    if spec.n_cells > 10_000:
        raise ValueError("grid too large to enumerate")
    world = GridWorld(spec)
    S = world.n_states
    P = np.zeros((S, N_ACTIONS, S))
    R = np.zeros((S, N_ACTIONS))
    for s in range(S):
        if world.terminal[s]:
            P[s, :, s] = 1.0
            continue
        for a in range(N_ACTIONS):
            for d in range(N_ACTIONS):
                prob = spec.slip_prob / N_ACTIONS + (1.0 - spec.slip_prob) * (d == a)
                if prob == 0.0:
                    continue
                nxt = int(world._next[s, d])
                if world._zone[s] and not world._zone[nxt]:
                    nxt = s
                P[s, a, nxt] += prob
                R[s, a] += prob * loca_reward(task, world._hit[nxt])
    return MDP(P, R, world.terminal.copy())


def value_iteration(mdp: MDP, gamma: float, tol: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    V = np.zeros(mdp.P.shape[0])
    for _ in range(max_iter):
        new = (mdp.R + gamma * mdp.P @ V).max(axis=1)
        new[mdp.terminal] = 0.0
        if np.max(np.abs(new - V)) < tol:
            return new
        V = new
    raise RuntimeError("value iteration did not converge")
