"""MountainCarLoCA: mountain car with a second terminal in the valley.

States are ``(position, velocity)`` tuples. Stochasticity ``p`` replaces the
chosen action with a uniformly random one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import Hit

POS_MIN, POS_MAX = -1.2, 0.5
VEL_MIN, VEL_MAX = -0.07, 0.07
REVERSE, COAST, FORWARD = 0, 1, 2
N_ACTIONS = 3

# the small evaluation region between the two terminals
EVAL_LOW = (-0.2, -0.01)
EVAL_HIGH = (-0.1, 0.01)


@dataclass(frozen=True)
class MountainCarSpec:
    p: float = 0.0
    timeout: int = 500
    t1_zone_threshold: float = 0.4
    t2_center: float = -0.52
    t2_radius: float = 0.07
    # velocity is scaled by this before the T2 distance test
    t2_velocity_scale: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"stochasticity p must lie in [0, 1], got {self.p}")
        if self.timeout < 1:
            raise ValueError("timeout must be positive")
        if not self.t1_zone_threshold < POS_MAX:
            raise ValueError("the T1-zone threshold must lie below the top terminal")
        if self.t2_center + self.t2_radius >= self.t1_zone_threshold:
            raise ValueError("the valley terminal must lie outside the T1-zone")


DEFAULT_SPEC = MountainCarSpec()


def _clip(x, lo, hi):
    return lo if x < lo else hi if x > hi else x


def executed_action(action: int, spec: MountainCarSpec, rng: np.random.Generator) -> int:
    if spec.p > 0.0 and rng.random() < spec.p:
        return int(rng.integers(N_ACTIONS))
    return action


def mc_step(state, action: int, spec: MountainCarSpec, rng: np.random.Generator):
    pos, vel = state
    a = executed_action(action, spec, rng)
    vel = _clip(vel + 0.001 * (a - 1) - 0.0025 * math.cos(3.0 * pos), VEL_MIN, VEL_MAX)
    pos = _clip(pos + vel, POS_MIN, POS_MAX)
    if pos == POS_MIN:
        vel = 0.0
    return (pos, vel)


def mc_terminal(state, spec: MountainCarSpec = DEFAULT_SPEC) -> Hit:
    pos, vel = state
    if pos >= POS_MAX:
        return Hit.T1
    dv = spec.t2_velocity_scale * vel
    if (pos - spec.t2_center) ** 2 + dv * dv <= spec.t2_radius ** 2:
        return Hit.T2
    return Hit.NONE


class MountainCar:
    """Domain object for the LoCA layer."""

    n_actions = N_ACTIONS

    def __init__(self, spec: MountainCarSpec | None = None):
        self.spec = spec = spec or MountainCarSpec()
        self.low = np.array([POS_MIN, VEL_MIN])
        self.high = np.array([POS_MAX, VEL_MAX])
        self.zone_low = np.array([spec.t1_zone_threshold, VEL_MIN])
        self.zone_high = np.array([POS_MAX, VEL_MAX])

    def dynamics(self, state, action, rng):
        return mc_step(state, action, self.spec, rng)

    def hit(self, state) -> Hit:
        return mc_terminal(state, self.spec)

    def in_t1_zone(self, state) -> bool:
        return state[0] >= self.spec.t1_zone_threshold

    def sample_box(self, rng, low, high):
        return (float(rng.uniform(low[0], high[0])), float(rng.uniform(low[1], high[1])))

    def dynamics_batch(self, states, actions, rng):
        states = np.asarray(states, dtype=float)
        a = np.asarray(actions).copy()
        if self.spec.p > 0.0:
            noisy = rng.random(len(a)) < self.spec.p
            a[noisy] = rng.integers(N_ACTIONS, size=int(noisy.sum()))
        pos, vel = states[:, 0], states[:, 1]
        vel = np.clip(vel + 0.001 * (a - 1) - 0.0025 * np.cos(3.0 * pos), VEL_MIN, VEL_MAX)
        pos = np.clip(pos + vel, POS_MIN, POS_MAX)
        vel = np.where(pos == POS_MIN, 0.0, vel)
        return np.stack([pos, vel], axis=1)

    def hit_batch(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        pos, vel = states[:, 0], states[:, 1]
        s = self.spec
        dv = s.t2_velocity_scale * vel
        t2 = (pos - s.t2_center) ** 2 + dv * dv <= s.t2_radius ** 2
        return np.where(pos >= POS_MAX, int(Hit.T1), np.where(t2, int(Hit.T2), int(Hit.NONE)))

    def zone_batch(self, states) -> np.ndarray:
        return np.asarray(states, dtype=float)[:, 0] >= self.spec.t1_zone_threshold

    def stack(self, states):
        return np.asarray(states, dtype=float).reshape(-1, 2)
