import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from locabench.env import Task
from locabench.gridworld import (DOWN, LEFT, MOVES, RIGHT, UP, GridSpec, GridWorld, enumerate_mdp,
                                 grid_step, value_iteration)


def test_default_layout():
    spec = GridSpec()
    assert (spec.width, spec.height) == (8, 8)
    assert spec.t1_cell == (0, 0) and spec.t2_cell == (7, 7)
    assert spec.t1_zone_cells == {(0, 0), (0, 1), (1, 0)}


@pytest.mark.parametrize("kw", [
    dict(t1_cell=(0, 0), t2_cell=(0, 0)),
    dict(t1_cell=(9, 0)),
    dict(t1_zone_cells=frozenset({(0, 1)})),
    dict(slip_prob=1.5),
    dict(width=0),
])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        GridSpec(**kw)


def test_deterministic_moves():
    spec = GridSpec(slip_prob=0.0)
    rng = np.random.default_rng(0)
    assert grid_step((3, 3), RIGHT, spec, rng) == (3, 4)
    assert grid_step((3, 7), RIGHT, spec, rng) == (3, 7)
    assert grid_step((0, 3), UP, spec, rng) == (0, 3)


def test_slip_frequency():
    spec = GridSpec(slip_prob=0.25)
    rng = np.random.default_rng(1)
    n = 100_000
    hits = sum(grid_step((3, 3), LEFT, spec, rng) == (3, 2) for _ in range(n))
    assert abs(hits / n - 0.8125) < 0.01


@settings(max_examples=200, deadline=None)
@given(r=st.integers(0, 7), c=st.integers(0, 7), a=st.integers(0, 3), seed=st.integers(0, 10**6))
def test_step_stays_in_grid(r, c, a, seed):
    spec = GridSpec()
    assert spec.contains(grid_step((r, c), a, spec, np.random.default_rng(seed)))


def test_slip_is_action_symmetric():
    # rotating the grid by 180 degrees swaps UP/DOWN and LEFT/RIGHT
    spec = GridSpec(width=5, height=5, t1_cell=(0, 0), t2_cell=(4, 4), slip_prob=0.4)
    mdp = enumerate_mdp(spec, Task.A)
    world = GridWorld(spec)
    flip = {UP: DOWN, DOWN: UP, LEFT: RIGHT, RIGHT: LEFT}
    rot = np.array([world.index((4 - r, 4 - c)) for r, c in map(world.cell, range(25))])
    centre = world.index((2, 2))
    for a in range(4):
        p = mdp.P[centre, a]
        q = mdp.P[centre, flip[a]]
        assert np.allclose(p, q[rot])


def test_rows_are_distributions():
    mdp = enumerate_mdp(GridSpec(), Task.A)
    assert np.allclose(mdp.P.sum(axis=2), 1.0)


def test_two_cell_chain():
    spec = GridSpec(width=2, height=1, t1_cell=(0, 0), t2_cell=(0, 1),
                    t1_zone_cells=frozenset({(0, 0)}), slip_prob=0.0)
    mdp = enumerate_mdp(spec, Task.A)
    # both cells are terminal: absorbing, zero reward
    assert np.array_equal(mdp.P[:, :, :], np.stack([np.eye(2)] * 4, axis=1))
    assert np.all(mdp.R == 0.0)


def test_three_cell_chain():
    spec = GridSpec(width=3, height=1, t1_cell=(0, 0), t2_cell=(0, 2),
                    t1_zone_cells=frozenset({(0, 0)}), slip_prob=0.0)
    mdp = enumerate_mdp(spec, Task.B)
    expect = np.zeros((4, 3))
    expect[UP, 1] = expect[DOWN, 1] = 1.0
    expect[LEFT, 0] = 1.0
    expect[RIGHT, 2] = 1.0
    assert np.array_equal(mdp.P[1], expect)
    assert np.array_equal(mdp.R[1], [0.0, 0.0, 1.0, 2.0])


def test_mdp_guard_blocks_zone_exit():
    spec = GridSpec(slip_prob=0.0)
    world = GridWorld(spec)
    mdp = enumerate_mdp(spec, Task.A)
    s = world.index((0, 1))
    assert mdp.P[s, RIGHT, s] == 1.0 and mdp.P[s, DOWN, s] == 1.0


def test_mdp_matches_simulator():
    spec = GridSpec(width=4, height=4, t1_cell=(0, 0), t2_cell=(3, 3))
    world = GridWorld(spec)
    mdp = enumerate_mdp(spec, Task.A)
    rng = np.random.default_rng(7)
    n = 100_000
    for s in (world.index((2, 1)), world.index((1, 2))):
        for a in range(4):
            nxt = world.dynamics_batch(np.full(n, s), np.full(n, a), rng)
            counts = np.bincount(nxt, minlength=world.n_states)
            support = mdp.P[s, a] > 0
            assert counts[~support].sum() == 0
            assert np.max(np.abs(counts / n - mdp.P[s, a])) < 0.01
            if support.sum() > 1:
                p = stats.chisquare(counts[support], n * mdp.P[s, a, support]).pvalue
                assert p > 1e-4


def test_value_iteration_one_step():
    spec = GridSpec(width=2, height=1, t1_cell=(0, 1), t2_cell=(0, 0),
                    t1_zone_cells=frozenset({(0, 1)}), slip_prob=0.0)
    V = value_iteration(enumerate_mdp(spec, Task.A), 0.97)
    assert np.all(V == 0.0)


def test_value_iteration_corridor():
    spec = GridSpec(width=4, height=1, t1_cell=(0, 0), t2_cell=(0, 3),
                    t1_zone_cells=frozenset({(0, 0)}), slip_prob=0.0)
    V = value_iteration(enumerate_mdp(spec, Task.A), 0.5)
    # from cell 1: T1 now (4) beats T2 in two steps (0.5 * 2)
    assert V[1] == pytest.approx(4.0)
    assert V[2] == pytest.approx(2.0)


def test_moves_table():
    assert MOVES[UP] == (-1, 0) and MOVES[RIGHT] == (0, 1)
