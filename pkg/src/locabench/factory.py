"""Build domains, task configs and agents from an ``ExperimentConfig``."""
from __future__ import annotations

import numpy as np

from .config import ExperimentConfig
from .env import FULL, T1_ZONE, InitDist, LoCATaskConfig
from .gridworld import GridSpec, GridWorld
from .mountaincar import EVAL_HIGH, EVAL_LOW, MountainCar, MountainCarSpec

# domain keys consumed here rather than by the domain spec
_LAYOUT_KEYS = ("timeout", "eval_region")
GRID_TRAIN_TIMEOUT = 1000


def _spec_params(cfg: ExperimentConfig) -> dict:
    return {k: v for k, v in cfg.domain_params.items() if k not in _LAYOUT_KEYS}


def make_domain(cfg: ExperimentConfig):
    params = _spec_params(cfg)
    if cfg.domain == "gridworld":
        if "t1_zone_cells" in params:
            params["t1_zone_cells"] = frozenset(tuple(c) for c in params["t1_zone_cells"])
        return GridWorld(GridSpec(**params))
    if cfg.domain == "mountaincar":
        if "timeout" in cfg.domain_params:
            params["timeout"] = int(cfg.domain_params["timeout"])
        return MountainCar(MountainCarSpec(**params))
    raise ValueError(f"unknown domain {cfg.domain!r}")


def make_task_config(cfg: ExperimentConfig, domain) -> LoCATaskConfig:
    region = cfg.domain_params.get("eval_region")
    if region is None:
        region = "box" if cfg.domain == "mountaincar" else "full"
    if region == "box":
        eval_dist = InitDist("box", EVAL_LOW, EVAL_HIGH)
    elif region == "full":
        eval_dist = FULL
    else:
        raise ValueError(f"unknown eval_region {region!r}")
    return LoCATaskConfig.for_domain(domain, cfg.gamma, cfg.phase_steps,
                                     train_init=(FULL, T1_ZONE, FULL),
                                     eval_init=(eval_dist,) * 3)


def train_timeout(cfg: ExperimentConfig) -> int:
    if cfg.domain == "mountaincar":
        return int(cfg.domain_params.get("timeout", MountainCarSpec.timeout))
    return int(cfg.domain_params.get("timeout", GRID_TRAIN_TIMEOUT))


def eval_cap(cfg: ExperimentConfig) -> int:
    if cfg.eval_cap is not None:
        return int(cfg.eval_cap)
    return train_timeout(cfg)


def make_coder(domain, params: dict):
    from .tilecoding import TileCoder

    return TileCoder(int(params.pop("tilings", 5)), int(params.pop("tiles", 14)), domain.low, domain.high)


def make_agent(cfg: ExperimentConfig, domain, rng: np.random.Generator):
    params = dict(cfg.agent_params)
    name = cfg.agent
    if name in ("mb-1-r", "mb-1-c", "mb-2-r", "sarsa-lambda"):
        from .tabular import SarsaLambdaAgent, TabularDynaAgent

        if cfg.domain != "gridworld":
            raise ValueError(f"{name} is a tabular agent and needs the gridworld domain")
        if name == "sarsa-lambda":
            return SarsaLambdaAgent(domain.n_states, domain.n_actions, cfg.gamma,
                                    terminal=np.flatnonzero(domain.terminal), rng=rng, **params)
        steps = 2 if name == "mb-2-r" else 1
        planning = "current" if name == "mb-1-c" else "random"
        return TabularDynaAgent(domain.n_states, domain.n_actions, domain.nonterminal, cfg.gamma,
                                model_steps=steps, planning=planning, rng=rng, **params)
    if cfg.domain != "mountaincar":
        raise ValueError(f"{name} needs the mountaincar domain")
    if name in ("linear-dyna", "linear-dyna-tabular"):
        from .linear import LinearDynaAgent

        coder = make_coder(domain, params)
        if "plan_steps" in params:
            params["plan_steps"] = int(params["plan_steps"])
        if "buffer_size" in params:
            params["buffer_size"] = int(params["buffer_size"])
        planning = "tabular" if name == "linear-dyna-tabular" else "buffer"
        return LinearDynaAgent(coder, domain.n_actions, cfg.gamma, planning=planning, rng=rng, **params)
    if name == "linear-sarsa":
        from .linear import LinearSarsaAgent

        coder = make_coder(domain, params)
        return LinearSarsaAgent(coder, domain.n_actions, cfg.gamma, rng=rng, **params)
    if name == "nonlinear-dyna":
        from .nonlinear import NonlinearDynaAgent

        return NonlinearDynaAgent(domain, cfg.gamma, rng=rng, **params)
    raise ValueError(f"unknown agent {name!r}")
