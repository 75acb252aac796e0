"""Linear Dyna over sparse binary features, and linear Sarsa(lambda).

``LinearDynaAgent`` plans either from feature vectors sampled out of a
planning buffer of observed features (``planning="buffer"``) or from random
one-hot vectors (``planning="tabular"``), the classic linear Dyna planner.

Features are index arrays of the active (value 1) entries, so every dot
product with a binary vector is a sum over those indices.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from . import _kernels
from .buffers import PlanningBuffer
from .tabular import _digest, argmax_rows
from .tilecoding import TileCoder, onehot_feature


class LinearDynaModel:
    """Value weights ``theta`` plus a per-action linear expectation model.

    ``F[a, j]`` holds column ``j`` of the action's m-by-m matrix F_a (so
    ``F[a]`` is F_a transposed): a sparse update touches whole rows, which
    are contiguous. ``dense_F(a)`` returns F_a itself.
    """

    def __init__(self, m: int, n_actions: int):
        self.m = m
        self.n_actions = n_actions
        self.theta = np.zeros(m)
        self.F = np.zeros((n_actions, m, m))
        self.b = np.zeros((n_actions, m))
        self.skipped_plans = 0
        self.divergence_checks = 0

    def dense_F(self, a: int) -> np.ndarray:
        return self.F[a].T

    def action_values(self, phi, gamma: float) -> np.ndarray:
        """``q_a = b_a . phi + gamma * theta . (F_a phi)`` for every action."""
        return _kernels.action_values(self.F, self.b, self.theta, np.asarray(phi, dtype=np.int64), gamma)

    def next_values(self) -> np.ndarray:
        """``theta . F_a e_j`` for all (a, j); valid until theta or F change."""
        return self.F @ self.theta

    def check_finite(self) -> None:
        self.divergence_checks += 1
        for name in ("theta", "F", "b"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise FloatingPointError(f"linear Dyna {name} diverged")


def _pick(q: np.ndarray, epsilon: float, rng: np.random.Generator) -> tuple[int, bool]:
    best = np.flatnonzero(q == q.max())
    if epsilon > 0.0 and rng.random() < epsilon:
        a = int(rng.integers(len(q)))
    else:
        a = int(best[0]) if len(best) == 1 else int(rng.choice(best))
    return a, bool(np.any(best == a))


def lin_act(phi, model: LinearDynaModel, epsilon: float, gamma: float,
            rng: np.random.Generator) -> tuple[int, bool]:
    """Epsilon-greedy action and whether it is among the greedy actions."""
    return _pick(model.action_values(phi, gamma), epsilon, rng)


def lin_mf_update(model: LinearDynaModel, phi, r: float, phi_next, Z: bool, alpha: float,
                  gamma: float, was_greedy: bool = True) -> None:
    if not was_greedy:
        return
    theta = model.theta
    v_next = 0.0 if Z else theta[phi_next].sum()
    delta = r + gamma * v_next - theta[phi].sum()
    theta[phi] += alpha * delta


def lin_model_update(model: LinearDynaModel, a: int, phi, phi_next, r: float, Z: bool,
                     beta: float) -> None:
    """``F_a += beta ((1-Z) phi' - F_a phi) phi^T`` and ``b_a += beta (r - b_a . phi) phi``."""
    _kernels.model_update(model.F, model.b, a, np.asarray(phi, dtype=np.int64),
                          np.asarray(phi_next, dtype=np.int64), float(r), bool(Z), beta)


def plan_backups(model: LinearDynaModel, xs: np.ndarray, alpha: float, gamma: float) -> None:
    """Backups ``theta += alpha (max_a q_a(x) - theta . x) x`` for each row ``x`` of ``xs``."""
    _kernels.plan_backups(model.F, model.b, model.theta, np.asarray(xs, dtype=np.int64), alpha, gamma)


def lin_plan_step(model: LinearDynaModel, buffer: PlanningBuffer, n: int, alpha: float,
                  gamma: float, rng: np.random.Generator) -> int:
    """``n`` value-iteration backups at features sampled (with replacement) from the buffer."""
    if n <= 0:
        return 0
    if len(buffer) == 0:
        model.skipped_plans += 1
        return 0
    plan_backups(model, buffer.sample_batch(rng, n), alpha, gamma)
    return n


def lin_plan_step_tabular(model: LinearDynaModel, m_total: int, n: int, alpha: float,
                          gamma: float, rng: np.random.Generator) -> int:
    if n <= 0:
        return 0
    xs = np.stack([onehot_feature(int(i), m_total) for i in rng.integers(m_total, size=n)])
    plan_backups(model, xs, alpha, gamma)
    return n


def lin_sarsa_step(w: np.ndarray, e: np.ndarray, phi, a: int, r: float, phi_next,
                   a_next: int, Z: bool, alpha: float, lam: float, gamma: float) -> float:
    """Linear Sarsa(lambda) with replacing traces; returns the TD error."""
    q_next = 0.0 if Z else w[a_next, phi_next].sum()
    delta = r + gamma * q_next - w[a, phi].sum()
    e[a, phi] = 1.0
    w += alpha * delta * e
    e *= gamma * lam
    return delta


class LinearDynaAgent:
    """Linear Dyna on tile-coded states.

    ``alpha`` and ``beta`` are given per unit feature and divided by the
    number of tilings before use.
    """

    DIVERGENCE_CHECK_EVERY = 10_000

    def __init__(self, coder: TileCoder, n_actions: int, gamma: float, epsilon: float = 0.5,
                 alpha: float = 0.05, beta: float = 0.01, plan_steps: int = 5,
                 buffer_size: int = 4_000_000, planning: str = "buffer",
                 rng: np.random.Generator | None = None):
        if planning not in ("buffer", "tabular"):
            raise ValueError(f"planning must be 'buffer' or 'tabular', got {planning!r}")
        if alpha <= 0 or beta <= 0:
            raise ValueError("step sizes must be positive")
        self.coder = coder
        self.gamma = gamma
        self.epsilon = epsilon
        self.alpha = alpha / coder.num_tilings
        self.beta = beta / coder.num_tilings
        self.plan_steps = plan_steps
        self.planning = planning
        self.model = LinearDynaModel(coder.m, n_actions)
        self.buffer = PlanningBuffer(buffer_size, coder.num_tilings) if planning == "buffer" else None
        self.rng = rng if rng is not None else np.random.default_rng()
        self._phi: Optional[np.ndarray] = None
        self._greedy = False
        self._steps = 0
        self._cache: tuple = (-1, None)

    def start(self, state) -> int:
        self._phi = self.coder.encode(state)
        a, self._greedy = lin_act(self._phi, self.model, self.epsilon, self.gamma, self.rng)
        return a

    def step(self, s, a, r, s_next, terminated, truncated=False) -> Optional[int]:
        model, phi = self.model, self._phi
        if self.buffer is not None:
            self.buffer.add_features(phi)
        phi_next = self.coder.encode(s_next)
        lin_mf_update(model, phi, r, phi_next, terminated, self.alpha, self.gamma, self._greedy)
        lin_model_update(model, a, phi, phi_next, r, terminated, self.beta)
        if self.buffer is not None:
            lin_plan_step(model, self.buffer, self.plan_steps, self.alpha, self.gamma, self.rng)
        else:
            lin_plan_step_tabular(model, model.m, self.plan_steps, self.alpha, self.gamma, self.rng)
        self._steps += 1
        if self._steps % self.DIVERGENCE_CHECK_EVERY == 0:
            model.check_finite()
        if terminated or truncated:
            self._phi = None
            return None
        self._phi = phi_next
        a_next, self._greedy = lin_act(phi_next, model, self.epsilon, self.gamma, self.rng)
        return a_next

    def q_batch(self, states) -> np.ndarray:
        if self._cache[0] != self._steps:
            self._cache = (self._steps, self.model.next_values())
        u = self._cache[1]
        idx = self.coder.encode_batch(states)
        q = self.model.b[:, idx].sum(axis=-1) + self.gamma * u[:, idx].sum(axis=-1)
        return q.T

    def greedy_actions(self, states, rng: np.random.Generator) -> np.ndarray:
        return argmax_rows(self.q_batch(states), rng)

    def checksum(self) -> str:
        arrays = [self.model.theta, self.model.F, self.model.b]
        if self.buffer is not None:
            arrays += list(self.buffer.arrays().values())
        return _digest(*arrays, rng=self.rng)


class LinearSarsaAgent:
    def __init__(self, coder: TileCoder, n_actions: int, gamma: float, epsilon: float = 0.1,
                 alpha: float = 0.1, lam: float = 0.5, rng: np.random.Generator | None = None):
        self.coder = coder
        self.gamma = gamma
        self.epsilon = epsilon
        self.alpha = alpha / coder.num_tilings
        self.lam = lam
        self.w = np.zeros((n_actions, coder.m))
        self.e = np.zeros_like(self.w)
        self.rng = rng if rng is not None else np.random.default_rng()
        self._phi = None

    def _act(self, phi) -> int:
        return _pick(self.w[:, phi].sum(axis=1), self.epsilon, self.rng)[0]

    def start(self, state) -> int:
        self.e.fill(0.0)
        self._phi = self.coder.encode(state)
        return self._act(self._phi)

    def step(self, s, a, r, s_next, terminated, truncated=False) -> Optional[int]:
        phi_next = self.coder.encode(s_next)
        a_next = 0 if terminated else self._act(phi_next)
        lin_sarsa_step(self.w, self.e, self._phi, a, r, phi_next, a_next, terminated,
                       self.alpha, self.lam, self.gamma)
        if terminated or truncated:
            self.e.fill(0.0)
            return None
        self._phi = phi_next
        return a_next

    def greedy_actions(self, states, rng: np.random.Generator) -> np.ndarray:
        idx = self.coder.encode_batch(states)
        return argmax_rows(self.w[:, idx].sum(axis=-1).T, rng)

    def checksum(self) -> str:
        return _digest(self.w, self.e, rng=self.rng)
