"""Compiled inner loops for linear Dyna.

``F`` is laid out as in ``LinearDynaModel``: ``F[a, j]`` is column ``j`` of
F_a. Feature vectors are arrays of distinct active indices.
"""
import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def action_values(F, b, theta, phi, gamma):
    n_actions = b.shape[0]
    m = theta.shape[0]
    q = np.empty(n_actions)
    for a in range(n_actions):
        r = 0.0
        v = 0.0
        for j in phi:
            r += b[a, j]
            row = F[a, j]
            for i in range(m):
                v += row[i] * theta[i]
        q[a] = r + gamma * v
    return q


@njit(cache=True, fastmath=True)
def plan_backups(F, b, theta, xs, alpha, gamma):
    """One value-iteration backup per row of ``xs``, applied in order."""
    for t in range(xs.shape[0]):
        x = xs[t]
        q = action_values(F, b, theta, x, gamma)
        v = 0.0
        for j in x:
            v += theta[j]
        step = alpha * (q.max() - v)
        for j in x:
            theta[j] += step


@njit(cache=True, fastmath=True)
def model_update(F, b, a, phi, phi_next, r, terminated, beta):
    m = F.shape[2]
    err = np.zeros(m)
    for j in phi:
        row = F[a, j]
        for i in range(m):
            err[i] -= row[i]
    if not terminated:
        for j in phi_next:
            err[j] += 1.0
    for j in phi:
        row = F[a, j]
        for i in range(m):
            row[i] += beta * err[i]
    pred = 0.0
    for j in phi:
        pred += b[a, j]
    step = beta * (r - pred)
    for j in phi:
        b[a, j] += step
