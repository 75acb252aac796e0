import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import locabench.tabular as tab
from locabench.env import Task
from locabench.gridworld import GridSpec, GridWorld, enumerate_mdp, value_iteration
from locabench.tabular import (QTableWithTraces, SarsaLambdaAgent, Segment, TabularDynaAgent,
                               TabularModel1, TabularModel2, plan_update_1step, plan_update_2step,
                               sarsa_lambda_step, select_action_lookahead, update_model_1step,
                               update_model_2step)

from oracles import oracle_value_iteration, two_step_kernel

ORACLE = GridSpec(width=4, height=4, t1_cell=(0, 0), t2_cell=(3, 3))


def test_model_starts_on_termination():
    m = TabularModel1(3, 2, r_init=8.0)
    assert np.all(m.p_hat[:, :, 3] == 1.0) and np.all(m.r_hat == 8.0)


def test_alpha_one_overwrites():
    m = TabularModel1(4, 2)
    update_model_1step(m, 1, 0, 2.5, 3, False, 1.0)
    assert m.r_hat[1, 0] == 2.5
    assert np.array_equal(m.p_hat[1, 0], [0, 0, 0, 1, 0])
    update_model_1step(m, 1, 0, 4.0, 0, True, 1.0)
    assert np.array_equal(m.p_hat[1, 0], [0, 0, 0, 0, 1])


def test_ema_converges_geometrically():
    m = TabularModel1(4, 1)
    for _ in range(50):
        update_model_1step(m, 0, 0, 0.0, 2, False, 0.2)
    assert abs(m.p_hat[0, 0, 2] - 1.0) < 1e-4
    assert abs(m.p_hat[0, 0, 2] - (1 - 0.8 ** 50)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(0.01, 1.0))
def test_simplex_invariant_under_random_streams(seed, alpha):
    rng = np.random.default_rng(seed)
    S, A = 6, 3
    m1, m2 = TabularModel1(S, A), TabularModel2(S, A)
    for _ in range(250):
        s, a = int(rng.integers(S)), int(rng.integers(A))
        done = bool(rng.random() < 0.2)
        update_model_1step(m1, s, a, float(rng.random()), int(rng.integers(S)), done, alpha)
        seg = Segment(s, a, (1.0,) if done else (0.0, 1.0), None if done else int(rng.integers(S)))
        update_model_2step(m2, seg, alpha, 0.9)
    for m in (m1, m2):
        assert np.allclose(m.p_hat.sum(axis=-1), 1.0, atol=1e-9)
        assert m.p_hat.min() >= 0.0 and m.p_hat.max() <= 1.0 + 1e-12


def test_simplex_invariant_ten_thousand_streams():
    # 10^4 short independent update streams, checked as a batch
    rng = np.random.default_rng(11)
    S, A = 5, 2
    for _ in range(10_000):
        m = TabularModel1(S, A)
        for _ in range(5):
            update_model_1step(m, int(rng.integers(S)), int(rng.integers(A)), 1.0,
                               int(rng.integers(S)), bool(rng.random() < 0.3), float(rng.uniform(0.01, 1)))
        row = m.p_hat.sum(axis=-1)
        assert np.all(np.abs(row - 1.0) < 1e-9)


def test_two_step_reward_target():
    m = TabularModel2(3, 1)
    update_model_2step(m, Segment(0, 0, (0.0, 4.0), 2), 1.0, 0.97)
    assert m.r2_hat[0, 0] == pytest.approx(3.88)
    assert m.p2_hat[0, 0, 2] == 1.0


def test_two_step_truncated_segment():
    m = TabularModel2(3, 1)
    update_model_2step(m, Segment(1, 0, (2.0,), None), 1.0, 0.97)
    assert m.r2_hat[1, 0] == 2.0
    assert m.p2_hat[1, 0, 3] == 1.0


def test_zero_model_backups():
    V = np.zeros(3)
    for m, plan in ((TabularModel1(3, 2), plan_update_1step), (TabularModel2(3, 2), plan_update_2step)):
        plan(V, m, 1, 0.9)
        assert V[1] == 0.0


def test_two_step_chain_hand_value():
    # chain 0 -> 1 -> 2 -> end, rewards 0 then 1; two-step kernel 0 -> 2
    m = TabularModel2(3, 1)
    update_model_2step(m, Segment(0, 0, (0.0, 1.0), 2), 1.0, 0.9)
    V = np.array([0.0, 0.0, 5.0])
    plan_update_2step(V, m, 0, 0.9)
    assert V[0] == pytest.approx(0.9 * 1.0 + 0.81 * 5.0)


def test_fixed_point_of_exact_model():
    mdp = enumerate_mdp(ORACLE, Task.A)
    V = value_iteration(mdp, 0.97, tol=1e-14)
    m = TabularModel1.from_mdp(*mdp)
    for s in np.flatnonzero(~mdp.terminal):
        before = V[s]
        plan_update_1step(V, m, s, 0.97)
        assert V[s] == pytest.approx(before, abs=1e-12)


def test_sweeps_match_oracle_value_iteration():
    for task in (Task.A, Task.B):
        mdp = enumerate_mdp(ORACLE, task)
        m = TabularModel1.from_mdp(*mdp)
        V = np.zeros(16)
        live = np.flatnonzero(~mdp.terminal)
        for _ in range(2000):
            for s in live:
                plan_update_1step(V, m, s, 0.97)
        oracle = oracle_value_iteration(mdp.P, mdp.R, mdp.terminal, 0.97)
        assert np.max(np.abs(V - oracle)) < 1e-6
        assert np.all(V[mdp.terminal] == 0.0)


def test_random_sweeps_recover_optimal_policy():
    mdp = enumerate_mdp(ORACLE, Task.A)
    m = TabularModel1.from_mdp(*mdp)
    rng = np.random.default_rng(0)
    live = np.flatnonzero(~mdp.terminal)
    V = np.zeros(16)
    for _ in range(1000):
        for s in rng.permutation(live):
            plan_update_1step(V, m, s, 0.97)
    Vstar = oracle_value_iteration(mdp.P, mdp.R, mdp.terminal, 0.97)
    q_star = mdp.R + 0.97 * mdp.P @ Vstar
    q = m.backup(live, V, 0.97)
    for s, row in zip(live, q):
        best = np.flatnonzero(np.isclose(q_star[s], q_star[s].max(), atol=1e-9))
        assert int(np.argmax(row)) in best


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_backup_is_monotone(seed):
    rng = np.random.default_rng(seed)
    S = 5
    m = TabularModel1(S, 3)
    for _ in range(30):
        update_model_1step(m, int(rng.integers(S)), int(rng.integers(3)), float(rng.normal()),
                           int(rng.integers(S)), bool(rng.random() < 0.2), 0.5)
    V = rng.normal(size=S)
    W = V + rng.uniform(0, 1, size=S)
    for s in range(S):
        a, b = V.copy(), W.copy()
        plan_update_1step(a, m, s, 0.9)
        plan_update_1step(b, m, s, 0.9)
        assert b[s] >= a[s] - 1e-12


def test_p2_matches_analytic_kernel():
    world = GridWorld(ORACLE)
    mdp = enumerate_mdp(ORACLE, Task.A)
    S, A = 16, 4
    live = ~mdp.terminal
    kernel = two_step_kernel(mdp)

    rng = np.random.default_rng(5)
    m = TabularModel2(S, A)
    n = 20_000
    zone = world._zone
    for s in np.flatnonzero(live):
        for a in range(A):
            s1 = world.dynamics_batch(np.full(n, s), np.full(n, a), rng)
            s1 = np.where(zone[s] & ~zone[s1], s, s1)
            a1 = rng.integers(A, size=n)
            s2 = world.dynamics_batch(s1, a1, rng)
            s2 = np.where(zone[s1] & ~zone[s2], s1, s2)
            for k in range(n):
                if world.terminal[s1[k]]:
                    seg = Segment(int(s), a, (0.0,), None)
                else:
                    seg = Segment(int(s), a, (0.0, 0.0), None if world.terminal[s2[k]] else int(s2[k]))
                update_model_2step(m, seg, 1.0 / (k + 1), 0.97)
    rows = np.flatnonzero(live)
    assert np.max(np.abs(m.p2_hat[rows] - kernel[rows])) < 0.02


def test_lookahead_greedy_unique():
    m = TabularModel1(3, 3)
    m.r_hat[0] = [0.0, 1.0, 0.5]
    rng = np.random.default_rng(0)
    assert all(select_action_lookahead(0, np.zeros(3), m, 0.0, 0.9, rng) == 1 for _ in range(50))


def test_lookahead_uniform_when_exploring_and_on_ties():
    m = TabularModel1(3, 4)
    m.r_hat[0] = [0.0, 5.0, 0.0, 0.0]
    rng = np.random.default_rng(1)
    n = 10_000
    freq = np.bincount([select_action_lookahead(0, np.zeros(3), m, 1.0, 0.9, rng) for _ in range(n)],
                       minlength=4) / n
    assert np.all(np.abs(freq - 0.25) < 0.02)
    m.r_hat[0] = 1.0
    freq = np.bincount([select_action_lookahead(0, np.zeros(3), m, 0.0, 0.9, rng) for _ in range(n)],
                       minlength=4) / n
    assert np.all(np.abs(freq - 0.25) < 0.02)


def test_sarsa_lambda_zero_touches_one_cell():
    qt = QTableWithTraces.create(3, 2, alpha=0.5, gamma=0.9, lam=0.0)
    sarsa_lambda_step(qt, 0, 0, 1.0, 1, 1, False)
    qt_before = qt.q.copy()
    sarsa_lambda_step(qt, 1, 1, 1.0, 2, 0, False)
    changed = np.argwhere(qt.q != qt_before)
    assert changed.tolist() == [[1, 1]]


def test_sarsa_lambda_one_matches_monte_carlo():
    qt = QTableWithTraces.create(3, 1, alpha=0.1, gamma=1.0, lam=1.0)
    sarsa_lambda_step(qt, 0, 0, 0.0, 1, 0, False)
    sarsa_lambda_step(qt, 1, 0, 1.0, 2, 0, True)
    # return from both pairs is 1, estimates were 0
    assert qt.q[0, 0] == pytest.approx(0.1)
    assert qt.q[1, 0] == pytest.approx(0.1)


def test_sarsa_terminal_bootstraps_zero():
    qt = QTableWithTraces.create(2, 1, alpha=1.0, gamma=0.9, lam=0.0, init=3.0)
    sarsa_lambda_step(qt, 0, 0, 2.0, 1, 0, True)
    assert qt.q[0, 0] == 2.0


def test_sarsa_agent_resets_traces():
    agent = SarsaLambdaAgent(4, 2, 0.9, rng=np.random.default_rng(0))
    agent.start(0)
    agent.step(0, 0, 0.0, 1, False)
    assert agent.qt.e.max() > 0 and agent.qt.e.min() >= 0
    agent.step(1, 0, 1.0, 2, True)
    assert np.all(agent.qt.e == 0.0)
    agent.qt.e[0, 0] = 0.5
    agent.start(3)
    assert np.all(agent.qt.e == 0.0)


def test_random_and_current_share_backup(monkeypatch):
    calls = []
    real = tab.plan_update_1step

    def spy(V, m, s, gamma):
        calls.append(s)
        real(V, m, s, gamma)

    monkeypatch.setattr(tab, "plan_update_1step", spy)
    world = GridWorld(ORACLE)
    for planning in ("random", "current"):
        agent = TabularDynaAgent(16, 4, world.nonterminal, 0.97, planning=planning,
                                 rng=np.random.default_rng(0))
        agent.start(5)
        agent.step(5, 0, 0.0, 1, False)
    assert len(calls) == 2
    assert calls[1] == 5


def test_terminal_values_stay_zero():
    world = GridWorld(ORACLE)
    agent = TabularDynaAgent(16, 4, world.nonterminal, 0.97, rng=np.random.default_rng(0))
    rng = np.random.default_rng(1)
    for _ in range(2000):
        s = int(rng.choice(world.nonterminal))
        agent.step(s, int(rng.integers(4)), 0.0, int(rng.integers(16)), bool(rng.random() < 0.1))
    assert np.all(agent.V[world.terminal] == 0.0)


def test_two_step_window_drops_truncated_segment():
    world = GridWorld(ORACLE)
    agent = TabularDynaAgent(16, 4, world.nonterminal, 0.97, model_steps=2, alpha=1.0,
                             rng=np.random.default_rng(0))
    agent.start(5)
    agent.step(5, 0, 0.0, 6, False, truncated=True)
    agent.start(9)
    agent.step(9, 1, 0.0, 10, False)
    # (5, 0) never saw a complete segment
    assert agent.model.p2_hat[5, 0, 16] == 1.0
    agent.step(10, 2, 0.0, 11, False)
    assert agent.model.p2_hat[9, 1, 11] == 1.0
