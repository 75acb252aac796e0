"""LoCA task layer shared by every domain.

A domain only knows its own dynamics and geometry. This module adds the two
reward functions, the one-way T1-zone, the phase schedule and the
initial-state distributions on top of it.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Protocol, Sequence

import numpy as np

MAX_REJECTION_ATTEMPTS = 1_000_000


class Task(str, enum.Enum):
    A = "A"
    B = "B"


class Hit(enum.IntEnum):
    NONE = 0
    T1 = 1
    T2 = 2


# reward for (no terminal, T1, T2) under each task
_REWARDS = {
    Task.A: (0.0, 4.0, 2.0),
    Task.B: (0.0, 1.0, 2.0),
}


def loca_reward(task: Task | str, hit: Hit | int) -> float:
    return _REWARDS[Task(task)][int(hit)]


def reward_table(task: Task | str) -> np.ndarray:
    """Rewards indexed by ``Hit`` value, for vectorised lookups."""
    return np.asarray(_REWARDS[Task(task)])


@dataclass(frozen=True)
class Transition:
    reward: float
    next_state: Any
    terminated: bool
    truncated: bool = False
    hit: Hit = Hit.NONE

    def __post_init__(self):
        if self.terminated and self.truncated:
            raise ValueError("a transition cannot be both terminated and truncated")


class Domain(Protocol):
    """What the LoCA layer needs from a domain.

    Scalar methods drive training; the ``*_batch`` methods drive evaluation,
    where many episodes are stepped at once.
    """

    n_actions: int
    low: np.ndarray
    high: np.ndarray
    zone_low: np.ndarray
    zone_high: np.ndarray

    def dynamics(self, state, action: int, rng: np.random.Generator): ...
    def hit(self, state) -> Hit: ...
    def in_t1_zone(self, state) -> bool: ...
    def sample_box(self, rng: np.random.Generator, low, high): ...
    def dynamics_batch(self, states, actions, rng: np.random.Generator): ...
    def hit_batch(self, states) -> np.ndarray: ...
    def zone_batch(self, states) -> np.ndarray: ...
    def stack(self, states: Sequence) -> Any: ...


@dataclass(frozen=True)
class InitDist:
    """Uniform initial-state distribution over a region.

    ``region`` is ``"full"`` (whole state space), ``"t1_zone"`` (the zone's
    bounding box, rejected against the zone predicate) or ``"box"`` (the
    explicit ``low``/``high`` bounds). Terminal states are always rejected.
    """

    region: str = "full"
    low: Optional[tuple] = None
    high: Optional[tuple] = None

    def __post_init__(self):
        if self.region not in ("full", "t1_zone", "box"):
            raise ValueError(f"unknown init region {self.region!r}")
        if self.region == "box" and (self.low is None or self.high is None):
            raise ValueError("a box init distribution needs low and high")


FULL = InitDist("full")
T1_ZONE = InitDist("t1_zone")


@dataclass
class LoCATaskConfig:
    task: Task
    gamma: float
    t1_zone: Callable[[Any], bool]
    terminal_t1: Callable[[Any], bool]
    terminal_t2: Callable[[Any], bool]
    phase_steps: tuple = (0, 0, 0)
    train_init: tuple = (FULL, T1_ZONE, FULL)
    eval_init: tuple = (FULL, FULL, FULL)

    def __post_init__(self):
        self.task = Task(self.task)
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if len(self.phase_steps) != 3 or any(n < 0 for n in self.phase_steps):
            raise ValueError(f"phase_steps must be three non-negative ints, got {self.phase_steps}")
        if self.train_init[1].region != "t1_zone":
            raise ValueError("phase-2 training must start inside the T1-zone")

    @classmethod
    def for_domain(cls, domain: Domain, gamma: float, phase_steps=(0, 0, 0),
                   train_init=None, eval_init=None, task: Task | str = Task.A) -> "LoCATaskConfig":
        return cls(
            task=Task(task),
            gamma=gamma,
            t1_zone=domain.in_t1_zone,
            terminal_t1=lambda s: domain.hit(s) == Hit.T1,
            terminal_t2=lambda s: domain.hit(s) == Hit.T2,
            phase_steps=tuple(int(n) for n in phase_steps),
            train_init=tuple(train_init) if train_init is not None else (FULL, T1_ZONE, FULL),
            eval_init=tuple(eval_init) if eval_init is not None else (FULL, FULL, FULL),
        )

    @staticmethod
    def task_for_phase(phase: int) -> Task:
        return Task.A if phase == 1 else Task.B

    def check_invariants(self, domain: Domain, rng: np.random.Generator, n: int = 2000) -> None:
        """Spot-check the predicate invariants on ``n`` uniform states."""
        for _ in range(n):
            s = domain.sample_box(rng, domain.low, domain.high)
            t1, t2 = self.terminal_t1(s), self.terminal_t2(s)
            if t1 and t2:
                raise ValueError(f"state {s} is both T1 and T2")
            if t1 and not self.t1_zone(s):
                raise ValueError(f"T1 state {s} lies outside the T1-zone")


def t1_zone_guard(prev, proposed, cfg: LoCATaskConfig):
    """One-way passage: leaving the zone reloads the previous state."""
    if cfg.t1_zone(prev) and not cfg.t1_zone(proposed):
        return prev
    return proposed


def _region_bounds(dist: InitDist, domain: Domain):
    if dist.region == "full":
        return domain.low, domain.high
    if dist.region == "t1_zone":
        return domain.zone_low, domain.zone_high
    return np.asarray(dist.low, dtype=float), np.asarray(dist.high, dtype=float)


def sample_initial_state(phase: int, mode: str, cfg: LoCATaskConfig, domain: Domain,
                         rng: np.random.Generator):
    dists = cfg.train_init if mode == "train" else cfg.eval_init
    dist = dists[phase - 1]
    low, high = _region_bounds(dist, domain)
    need_zone = dist.region == "t1_zone"
    for _ in range(MAX_REJECTION_ATTEMPTS):
        s = domain.sample_box(rng, low, high)
        if cfg.terminal_t1(s) or cfg.terminal_t2(s):
            continue
        if need_zone and not cfg.t1_zone(s):
            continue
        return s
    raise RuntimeError(
        f"no valid initial state after {MAX_REJECTION_ATTEMPTS} draws "
        f"(phase {phase}, {mode}, region {dist.region}); check the zone predicate")


def loca_step(state, action: int, task: Task | str, domain: Domain, cfg: LoCATaskConfig,
              rng: np.random.Generator) -> Transition:
    proposed = domain.dynamics(state, action, rng)
    nxt = t1_zone_guard(state, proposed, cfg)
    if cfg.terminal_t1(nxt):
        hit = Hit.T1
    elif cfg.terminal_t2(nxt):
        hit = Hit.T2
    else:
        hit = Hit.NONE
    return Transition(loca_reward(task, hit), nxt, hit != Hit.NONE, False, hit)


def loca_step_batch(states, actions, task: Task | str, domain: Domain, rng: np.random.Generator):
    """Vectorised ``loca_step``. Returns (rewards, next_states, terminated)."""
    proposed = domain.dynamics_batch(states, actions, rng)
    leave = domain.zone_batch(states) & ~domain.zone_batch(proposed)
    if np.ndim(proposed) > 1:
        nxt = np.where(leave[:, None], states, proposed)
    else:
        nxt = np.where(leave, states, proposed)
    hits = domain.hit_batch(nxt)
    return reward_table(task)[hits], nxt, hits != Hit.NONE


@dataclass
class LoCAEnv:
    """Stateful wrapper adding the episode timeout to ``loca_step``."""

    domain: Domain
    cfg: LoCATaskConfig
    rng: np.random.Generator
    timeout: Optional[int] = None
    state: Any = None
    elapsed: int = 0
    task: Task = field(default=Task.A)

    def reset(self, phase: int, mode: str = "train"):
        self.state = sample_initial_state(phase, mode, self.cfg, self.domain, self.rng)
        self.elapsed = 0
        return self.state

    def step(self, action: int) -> Transition:
        tr = loca_step(self.state, action, self.task, self.domain, self.cfg, self.rng)
        self.elapsed += 1
        if not tr.terminated and self.timeout is not None and self.elapsed >= self.timeout:
            tr = Transition(tr.reward, tr.next_state, False, True, tr.hit)
        self.state = tr.next_state
        return tr
