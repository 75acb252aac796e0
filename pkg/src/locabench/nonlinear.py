"""Nonlinear Dyna Q with per-action tanh networks trained by Adam.

Every network here is an ``MLP`` holding one independent net per action,
stacked along a leading axis, so a minibatch of (state, action) pairs is
processed for all actions at once and the per-sample loss is masked to the
action actually taken. Nets for different actions share no parameters.

States are rescaled to [-1, 1] per dimension before entering any network;
the dynamics net predicts the next state in that same scale.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .buffers import LearningBuffer, RingBuffer
from .tabular import _digest, argmax_rows

HIDDEN = (64, 64, 64, 64)


class MLP:
    """``n_nets`` fully connected nets of identical shape.

    Hidden layers use tanh and the output layer is linear. Weights and
    biases have shapes ``(n_nets, fan_in, fan_out)`` and
    ``(n_nets, 1, fan_out)``.
    """

    def __init__(self, sizes: Sequence[int], n_nets: int = 1,
                 rng: np.random.Generator | None = None, init: bool = True):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least an input and an output size")
        self.sizes = tuple(int(s) for s in sizes)
        self.n_nets = int(n_nets)
        rng = rng if rng is not None else np.random.default_rng()
        self.W, self.b = [], []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in) if init else 0.0
            self.W.append(rng.uniform(-bound, bound, (self.n_nets, fan_in, fan_out)))
            self.b.append(rng.uniform(-bound, bound, (self.n_nets, 1, fan_out)))
        self._acts: list[np.ndarray] = []

    @property
    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.W, self.b):
            out += [W, b]
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "MLP":
        net = MLP.__new__(MLP)
        net.sizes, net.n_nets = self.sizes, self.n_nets
        net.W = [W.copy() for W in self.W]
        net.b = [b.copy() for b in self.b]
        net._acts = []
        return net

    def load(self, other: "MLP") -> None:
        """Copy ``other``'s parameters in place."""
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def forward(self, x: np.ndarray, cache: bool = True) -> np.ndarray:
        """Outputs of every net, shape ``(n_nets, batch, out)``.

        ``x`` is ``(batch, in)`` (fed to all nets) or ``(n_nets, batch, in)``.
        With ``cache`` the activations are kept for ``backward``.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            x = np.broadcast_to(x, (self.n_nets, *x.shape))
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"expected {self.sizes[0]} inputs, got {x.shape[-1]}")
        acts = [x]
        h = x
        last = len(self.W) - 1
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            h = h @ W + b
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        if cache:
            self._acts = acts
        return h

    def backward(self, grad_out: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients given dLoss/dOutput of the cached forward pass."""
        if not self._acts:
            raise RuntimeError("backward needs a cached forward pass")
        g = grad_out
        grads = []
        for i in range(len(self.W) - 1, -1, -1):
            h_in = self._acts[i]
            grads.append(g.sum(axis=1, keepdims=True))
            grads.append(np.swapaxes(h_in, 1, 2) @ g)
            if i > 0:
                g = (g @ np.swapaxes(self.W[i], 1, 2)) * (1.0 - h_in ** 2)
        return grads[::-1]


def mlp_forward(net: MLP, x) -> np.ndarray:
    """Output of a single-net MLP for one input vector."""
    return net.forward(np.asarray(x, dtype=float)[None, :], cache=False)[0, 0]


def mlp_grad(net: MLP, x, loss_head: Callable[[np.ndarray], tuple[float, np.ndarray]]):
    """``(loss, grads)`` for one input vector of a single-net MLP.

    ``loss_head(outputs) -> (loss, dloss/doutputs)`` sees the 1-D output.
    """
    out = net.forward(np.asarray(x, dtype=float)[None, :])[0, 0]
    loss, dout = loss_head(out)
    return loss, net.backward(np.asarray(dout, dtype=float)[None, None, :])


class Adam:
    """Adam over parameters with a leading per-net axis.

    Each net keeps its own step counter, and ``step(grads, active)`` only
    touches the nets flagged in ``active``.
    """

    def __init__(self, params: list[np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("step-size must be positive")
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = np.zeros(params[0].shape[0], dtype=np.int64)

    def step(self, grads: list[np.ndarray], active: Optional[np.ndarray] = None) -> None:
        n = self.t.shape[0]
        idx = np.arange(n) if active is None else np.flatnonzero(active)
        if len(idx) == 0:
            return
        self.t[idx] += 1
        t = self.t[idx].astype(float)
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            shape = (-1,) + (1,) * (p.ndim - 1)
            gi = g[idx]
            m[idx] = self.beta1 * m[idx] + (1.0 - self.beta1) * gi
            v[idx] = self.beta2 * v[idx] + (1.0 - self.beta2) * gi * gi
            m_hat = m[idx] / c1.reshape(shape)
            v_hat = v[idx] / c2.reshape(shape)
            p[idx] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self) -> list[np.ndarray]:
        return [*self.m, *self.v, self.t]


class WorldModel:
    """Per-action dynamics, reward and termination nets."""

    def __init__(self, state_dim: int, n_actions: int, hidden=HIDDEN,
                 rng: np.random.Generator | None = None):
        self.dynamics = MLP((state_dim, *hidden, state_dim), n_actions, rng)
        self.reward = MLP((state_dim, *hidden, 1), n_actions, rng)
        self.termination = MLP((state_dim, *hidden, 1), n_actions, rng)

    @property
    def nets(self) -> tuple[MLP, MLP, MLP]:
        return self.dynamics, self.reward, self.termination

    @property
    def params(self) -> list[np.ndarray]:
        return [p for net in self.nets for p in net.params]

    def predict(self, x: np.ndarray, a: np.ndarray):
        """Predicted ``(next state, reward, termination)`` for pairs ``(x_i, a_i)``."""
        rows = np.arange(len(a))
        f = self.dynamics.forward(x, cache=False)[a, rows]
        r = self.reward.forward(x, cache=False)[a, rows, 0]
        z = self.termination.forward(x, cache=False)[a, rows, 0]
        return f, r, z


def _action_mask(a: np.ndarray, n_actions: int) -> np.ndarray:
    return (np.arange(n_actions)[:, None] == a[None, :])[..., None].astype(float)


def model_learning_step(model: WorldModel, batch: dict, optimizer: Adam) -> float:
    """One Adam step on the three-headed model loss over a minibatch.

    ``batch`` holds normalised ``s`` and ``s_next`` plus ``a``, ``r``, ``z``.
    The dynamics term is masked by ``1 - z``.
    """
    x, y, a = batch["s"], batch["s_next"], batch["a"]
    r, z = batch["r"], batch["z"]
    mask = _action_mask(a, model.dynamics.n_nets)
    live = (1.0 - z)[None, :, None]
    d_f = (model.dynamics.forward(x) - y[None]) * mask * live
    d_r = (model.reward.forward(x) - r[None, :, None]) * mask
    d_z = (model.termination.forward(x) - z[None, :, None]) * mask
    loss = 0.5 * float(np.sum(d_f ** 2) + np.sum(d_r ** 2) + np.sum(d_z ** 2))
    grads = model.dynamics.backward(d_f) + model.reward.backward(d_r) + model.termination.backward(d_z)
    optimizer.step(grads, active=mask.any(axis=(1, 2)))
    return loss


def planning_step(qnet: MLP, target: MLP, model: WorldModel, x: np.ndarray, a: np.ndarray,
                  optimizer: Adam, gamma: float) -> float:
    """One Adam step of Q-learning on model-simulated transitions from ``(x, a)``."""
    f, r, z = model.predict(x, a)
    q_next = target.forward(f, cache=False)[..., 0].max(axis=0)
    y = r + gamma * (1.0 - z) * q_next
    mask = _action_mask(a, qnet.n_nets)
    diff = (qnet.forward(x) - y[None, :, None]) * mask
    optimizer.step(qnet.backward(diff), active=mask.any(axis=(1, 2)))
    return 0.5 * float(np.sum(diff ** 2))


def target_sync(qnet: MLP, target: MLP, step: int, k: int) -> bool:
    """Copy the online net into the target at multiples of ``k``."""
    if k <= 0:
        raise ValueError("sync interval must be positive")
    if step % k == 0:
        target.load(qnet)
        return True
    return False


def forgetting_probe(reward_net: MLP, probe_states: np.ndarray, snapshot: MLP) -> float:
    """Mean absolute change of reward predictions, over probe states and actions."""
    now = reward_net.forward(probe_states, cache=False)
    then = snapshot.forward(probe_states, cache=False)
    return float(np.mean(np.abs(now - then)))


def t2_probe_grid(spec, n: int = 11) -> np.ndarray:
    """Raw ``n x n`` grid of states covering the valley terminal's ellipse."""
    half_v = spec.t2_radius / spec.t2_velocity_scale
    pos = np.linspace(spec.t2_center - spec.t2_radius, spec.t2_center + spec.t2_radius, n)
    vel = np.linspace(-half_v, half_v, n)
    pp, vv = np.meshgrid(pos, vel, indexing="ij")
    return np.stack([pp.ravel(), vv.ravel()], axis=1)


class NonlinearDynaAgent:
    """Dyna Q with neural value, dynamics, reward and termination models."""

    def __init__(self, domain, gamma: float, epsilon: float = 0.5, alpha: float = 5e-6,
                 beta: float = 5e-5, hidden=HIDDEN, target_every: int = 500, model_steps: int = 5,
                 plan_steps: int = 5, learn_buffer: int = 3_000_000, plan_buffer: int = 3_000_000,
                 model_batch: int = 32, plan_batch: int = 32, sampling: str = "uniform",
                 rng: np.random.Generator | None = None):
        if sampling != "uniform":
            raise NotImplementedError("only uniform buffer sampling is implemented")
        self.rng = rng if rng is not None else np.random.default_rng()
        self.low = np.asarray(domain.low, dtype=float)
        self.high = np.asarray(domain.high, dtype=float)
        d, A = len(self.low), domain.n_actions
        self.n_actions = A
        self.gamma = gamma
        self.epsilon = epsilon
        self.target_every = int(target_every)
        self.model_steps, self.plan_steps = int(model_steps), int(plan_steps)
        self.model_batch, self.plan_batch = int(model_batch), int(plan_batch)
        hidden = tuple(int(h) for h in np.atleast_1d(hidden))
        self.qnet = MLP((d, *hidden, 1), A, self.rng)
        self.target = self.qnet.copy()
        self.model = WorldModel(d, A, hidden, self.rng)
        self.value_opt = Adam(self.qnet.params, alpha)
        self.model_opt = Adam(self.model.params, beta)
        self.learn_buf = LearningBuffer(int(learn_buffer), d)
        self.plan_buf = RingBuffer(int(plan_buffer), s=((d,), float))
        self.skipped = 0
        self.steps = 0
        self._state = None

    def normalize(self, states) -> np.ndarray:
        return 2.0 * (np.asarray(states, dtype=float) - self.low) / (self.high - self.low) - 1.0

    def q_values(self, states) -> np.ndarray:
        """Action values, shape ``(batch, n_actions)``."""
        x = self.normalize(np.atleast_2d(states))
        return self.qnet.forward(x, cache=False)[..., 0].T

    def _act(self, state) -> int:
        if self.epsilon > 0.0 and self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.n_actions))
        return int(argmax_rows(self.q_values(state), self.rng)[0])

    def start(self, state) -> int:
        self._state = state
        return self._act(state)

    def model_update(self) -> Optional[float]:
        if len(self.learn_buf) < self.model_batch:
            self.skipped += 1
            return None
        batch = self.learn_buf.sample(self.rng, self.model_batch)
        batch["s"] = self.normalize(batch["s"])
        batch["s_next"] = self.normalize(batch["s_next"])
        return model_learning_step(self.model, batch, self.model_opt)

    def plan(self) -> Optional[float]:
        if len(self.plan_buf) < self.plan_batch:
            self.skipped += 1
            return None
        x = self.normalize(self.plan_buf.sample(self.rng, self.plan_batch)["s"])
        a = self.rng.integers(self.n_actions, size=self.plan_batch)
        return planning_step(self.qnet, self.target, self.model, x, a, self.value_opt, self.gamma)

    def step(self, s, a, r, s_next, terminated, truncated=False) -> Optional[int]:
        self.learn_buf.add(s=s, a=a, r=r, s_next=s_next, z=float(terminated))
        self.plan_buf.add(s=s)
        for _ in range(self.model_steps):
            self.model_update()
        for _ in range(self.plan_steps):
            self.plan()
        self.steps += 1
        target_sync(self.qnet, self.target, self.steps, self.target_every)
        if terminated or truncated:
            self._state = None
            return None
        self._state = s_next
        return self._act(s_next)

    def greedy_actions(self, states, rng: np.random.Generator) -> np.ndarray:
        return argmax_rows(self.q_values(states), rng)

    def checksum(self) -> str:
        arrays = [*self.qnet.params, *self.target.params, *self.model.params,
                  *self.value_opt.state_arrays(), *self.model_opt.state_arrays(),
                  *self.learn_buf.arrays().values(), *self.plan_buf.arrays().values()]
        return _digest(*arrays, rng=self.rng)
