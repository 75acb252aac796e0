"""Tabular model-based agents (mb-1-r, mb-1-c, mb-2-r) and tabular Sarsa(lambda).

Models keep one extra outcome column for termination, so a model row is
always a probability distribution and terminal outcomes contribute no future
value to a backup.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

OPTIMISTIC_INIT = 8.0


class TabularModel1:
    """One-step expected reward and next-state distribution per (s, a)."""

    steps = 1

    def __init__(self, n_states: int, n_actions: int, r_init: float = 0.0):
        self.n_states = n_states
        self.r_hat = np.full((n_states, n_actions), float(r_init))
        # unvisited pairs predict termination, i.e. value r_init and nothing after
        self.p_hat = np.zeros((n_states, n_actions, n_states + 1))
        self.p_hat[:, :, n_states] = 1.0

    @property
    def term(self) -> int:
        return self.n_states

    def discount(self, gamma: float) -> float:
        return gamma

    def backup(self, s, V: np.ndarray, gamma: float) -> np.ndarray:
        """Action values ``r + discount * sum_s' p(s'|s, a) V(s')`` at ``s``.

        ``s`` may be an index or an index array; the termination column is
        dropped, which is the same as valuing it at zero.
        """
        return self.r_hat[s] + self.discount(gamma) * (self.p_hat[s, ..., :self.n_states] @ V)

    @classmethod
    def from_mdp(cls, P: np.ndarray, R: np.ndarray, terminal: np.ndarray) -> "TabularModel1":
        """Exact model of an enumerated MDP; moves into terminal cells map to termination."""
        S, A, _ = P.shape
        m = cls(S, A)
        m.r_hat[:] = R
        m.p_hat[:, :, :S] = P * ~terminal
        m.p_hat[:, :, S] = P[:, :, terminal].sum(axis=-1)
        return m


class TabularModel2(TabularModel1):
    """Two-step model under the behaviour policy.

    ``r_hat`` estimates ``R_t + gamma R_{t+1}`` and ``p_hat`` the state two
    steps ahead; backups discount by gamma squared.
    """

    steps = 2

    def discount(self, gamma: float) -> float:
        return gamma * gamma

    @property
    def r2_hat(self):
        return self.r_hat

    @property
    def p2_hat(self):
        return self.p_hat


def _ema_row(row: np.ndarray, outcome: int, alpha: float) -> None:
    row *= 1.0 - alpha
    row[outcome] += alpha


def update_model_1step(m: TabularModel1, s: int, a: int, r: float, s_next: int,
                       terminated: bool, alpha: float) -> None:
    m.r_hat[s, a] += alpha * (r - m.r_hat[s, a])
    _ema_row(m.p_hat[s, a], m.term if terminated else s_next, alpha)


@dataclass(frozen=True)
class Segment:
    """Up to two consecutive transitions starting at (s, a).

    ``rewards`` holds one reward when the episode terminated after the first
    step, two otherwise. ``s2`` is the state two steps ahead, or ``None`` for
    termination within the segment.
    """

    s: int
    a: int
    rewards: tuple
    s2: Optional[int]


def update_model_2step(m: TabularModel2, window: Segment, alpha: float, gamma: float) -> None:
    g2 = window.rewards[0]
    if len(window.rewards) > 1:
        g2 += gamma * window.rewards[1]
    m.r_hat[window.s, window.a] += alpha * (g2 - m.r_hat[window.s, window.a])
    _ema_row(m.p_hat[window.s, window.a], m.term if window.s2 is None else window.s2, alpha)


def plan_update_1step(V: np.ndarray, m: TabularModel1, s: int, gamma: float) -> None:
    V[s] = m.backup(s, V, gamma).max()


def plan_update_2step(V: np.ndarray, m: TabularModel2, s: int, gamma: float) -> None:
    V[s] = m.backup(s, V, gamma).max()


def _argmax_random(q: np.ndarray, rng: np.random.Generator) -> int:
    best = np.flatnonzero(q == q.max())
    return int(best[0]) if len(best) == 1 else int(rng.choice(best))


def argmax_rows(q: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise argmax with uniform tie breaking."""
    ties = q == q.max(axis=1, keepdims=True)
    return np.argmax(ties * (1.0 + rng.random(q.shape)), axis=1)


def select_action_lookahead(s: int, V: np.ndarray, m: TabularModel1, epsilon: float,
                            gamma: float, rng: np.random.Generator) -> int:
    n_actions = m.r_hat.shape[1]
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(n_actions))
    return _argmax_random(m.backup(s, V, gamma), rng)


def _digest(*arrays, rng=None) -> str:
    h = hashlib.sha256()
    for arr in arrays:
        h.update(np.ascontiguousarray(arr).tobytes())
    if rng is not None:
        h.update(repr(rng.bit_generator.state).encode())
    return h.hexdigest()


class TabularDynaAgent:
    """Model-based agent with one value backup per environment step.

    ``model_steps`` picks the 1-step or 2-step model; ``planning`` picks the
    state receiving the backup: a uniformly random non-terminal state
    (``"random"``) or the state the action was just taken in (``"current"``).
    """

    def __init__(self, n_states, n_actions, nonterminal, gamma, model_steps=1,
                 planning="random", alpha=0.2, epsilon=0.1, init_value=OPTIMISTIC_INIT,
                 rng: np.random.Generator | None = None):
        if planning not in ("random", "current"):
            raise ValueError(f"planning must be 'random' or 'current', got {planning!r}")
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        self.gamma = gamma
        self.alpha = alpha
        self.epsilon = epsilon
        self.planning = planning
        self.nonterminal = np.asarray(nonterminal)
        self.rng = rng if rng is not None else np.random.default_rng()
        model_cls = {1: TabularModel1, 2: TabularModel2}[model_steps]
        self.model = model_cls(n_states, n_actions, r_init=init_value)
        self.V = np.zeros(n_states)
        self.V[self.nonterminal] = init_value
        self._plan = plan_update_1step if model_steps == 1 else plan_update_2step
        self._pending: Optional[tuple] = None

    def start(self, state: int) -> int:
        self._pending = None
        return select_action_lookahead(state, self.V, self.model, self.epsilon, self.gamma, self.rng)

    def _learn(self, s, a, r, s_next, terminated, truncated):
        m = self.model
        if m.steps == 1:
            update_model_1step(m, s, a, r, s_next, terminated, self.alpha)
            return
        if self._pending is not None:
            ps, pa, pr = self._pending
            update_model_2step(m, Segment(ps, pa, (pr, r), None if terminated else s_next),
                               self.alpha, self.gamma)
        if terminated:
            update_model_2step(m, Segment(s, a, (r,), None), self.alpha, self.gamma)
            self._pending = None
        elif truncated:
            self._pending = None
        else:
            self._pending = (s, a, r)

    def step(self, s, a, r, s_next, terminated, truncated=False) -> Optional[int]:
        self._learn(s, a, r, s_next, terminated, truncated)
        if self.planning == "random":
            target = int(self.nonterminal[self.rng.integers(len(self.nonterminal))])
        else:
            target = s
        self._plan(self.V, self.model, target, self.gamma)
        if terminated or truncated:
            return None
        return select_action_lookahead(s_next, self.V, self.model, self.epsilon, self.gamma, self.rng)

    def greedy_actions(self, states, rng: np.random.Generator) -> np.ndarray:
        return argmax_rows(self.model.backup(np.asarray(states), self.V, self.gamma), rng)

    def checksum(self) -> str:
        return _digest(self.V, self.model.r_hat, self.model.p_hat, rng=self.rng)


@dataclass
class QTableWithTraces:
    q: np.ndarray
    e: np.ndarray
    alpha: float
    gamma: float
    lam: float

    @classmethod
    def create(cls, n_states, n_actions, alpha=0.03, gamma=0.97, lam=0.95, init=0.0):
        return cls(np.full((n_states, n_actions), float(init)), np.zeros((n_states, n_actions)),
                   alpha, gamma, lam)

    def reset_traces(self) -> None:
        self.e.fill(0.0)


def sarsa_lambda_step(qt: QTableWithTraces, s, a, r, s_next, a_next, terminated) -> None:
    bootstrap = 0.0 if terminated else qt.gamma * qt.q[s_next, a_next]
    delta = r + bootstrap - qt.q[s, a]
    qt.e[s, a] = 1.0
    qt.q += qt.alpha * delta * qt.e
    qt.e *= qt.gamma * qt.lam


class SarsaLambdaAgent:
    def __init__(self, n_states, n_actions, gamma, alpha=0.03, lam=0.95, epsilon=0.1,
                 init_value=OPTIMISTIC_INIT, terminal=None, rng: np.random.Generator | None = None):
        self.qt = QTableWithTraces.create(n_states, n_actions, alpha, gamma, lam, init_value)
        if terminal is not None:
            self.qt.q[np.asarray(terminal)] = 0.0
        self.epsilon = epsilon
        self.n_actions = n_actions
        self.rng = rng if rng is not None else np.random.default_rng()

    def _act(self, s) -> int:
        if self.epsilon > 0.0 and self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.n_actions))
        return _argmax_random(self.qt.q[s], self.rng)

    def start(self, state) -> int:
        self.qt.reset_traces()
        return self._act(state)

    def step(self, s, a, r, s_next, terminated, truncated=False) -> Optional[int]:
        a_next = 0 if terminated else self._act(s_next)
        sarsa_lambda_step(self.qt, s, a, r, s_next, a_next, terminated)
        if terminated or truncated:
            self.qt.reset_traces()
            return None
        return a_next

    def greedy_actions(self, states, rng: np.random.Generator) -> np.ndarray:
        return argmax_rows(self.qt.q[np.asarray(states)], rng)

    def checksum(self) -> str:
        return _digest(self.qt.q, self.qt.e, rng=self.rng)
