"""Experiment orchestration: phases, frozen evaluation, baselines, verdicts, CSV."""
from __future__ import annotations

import csv
import enum
import itertools
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .env import LoCAEnv, Task, loca_step_batch, sample_initial_state
from . import factory
from .config import ExperimentConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalRecord:
    step: int
    phase: int
    returns: tuple
    mean: float

    @classmethod
    def from_returns(cls, step: int, phase: int, returns) -> "EvalRecord":
        returns = tuple(float(g) for g in returns)
        return cls(step, phase, returns, math.fsum(returns) / len(returns) if returns else 0.0)


def evaluate(agent, domain, task_cfg, task: Task | str, n_episodes: int, phase: int, gamma: float,
             cap: int, rng: np.random.Generator, step: int = 0) -> EvalRecord:
    """Run ``n_episodes`` greedy episodes side by side and record discounted returns.

    Only ``agent.greedy_actions`` is called, with the evaluation RNG, so the
    agent's learning state is left untouched.
    """
    states = domain.stack([sample_initial_state(phase, "eval", task_cfg, domain, rng)
                           for _ in range(n_episodes)])
    returns = np.zeros(n_episodes)
    active = np.arange(n_episodes)
    discount = 1.0
    for _ in range(cap):
        if len(active) == 0:
            break
        cur = states[active]
        actions = agent.greedy_actions(cur, rng)
        rewards, nxt, done = loca_step_batch(cur, actions, task, domain, rng)
        returns[active] += discount * rewards
        states[active] = nxt
        active = active[~done]
        discount *= gamma
    return EvalRecord.from_returns(step, phase, returns)


class Experiment:
    """One seeded LoCA run of one agent.

    The master seed is split into independent streams for the environment,
    the agent and evaluation. Optional hooks let callers observe episode
    starts (``on_reset(phase, state)``), transitions
    (``on_step(step, phase, state, transition)``) and phase ends
    (``on_phase_end(phase, experiment)``).
    """

    def __init__(self, cfg: ExperimentConfig, seed: int, on_reset: Callable | None = None,
                 on_step: Callable | None = None, on_phase_end: Callable | None = None):
        cfg.validate()
        self.cfg = cfg
        self.seed = seed
        env_ss, agent_ss, eval_ss = np.random.SeedSequence(seed).spawn(3)
        self.domain = factory.make_domain(cfg)
        self.task_cfg = factory.make_task_config(cfg, self.domain)
        self.env = LoCAEnv(self.domain, self.task_cfg, np.random.default_rng(env_ss),
                           timeout=factory.train_timeout(cfg))
        self.agent = factory.make_agent(cfg, self.domain, np.random.default_rng(agent_ss))
        self.eval_rng = np.random.default_rng(eval_ss)
        self.records: list[EvalRecord] = []
        self.global_step = 0
        self.on_reset, self.on_step, self.on_phase_end = on_reset, on_step, on_phase_end

    def evaluate_now(self, phase: int) -> EvalRecord:
        cfg = self.cfg
        return evaluate(self.agent, self.domain, self.task_cfg, self.task_cfg.task_for_phase(phase),
                        cfg.eval_episodes, phase, cfg.gamma, factory.eval_cap(cfg), self.eval_rng,
                        step=self.global_step)

    def run_phase(self, phase: int) -> None:
        env, agent, cfg = self.env, self.agent, self.cfg
        env.task = self.task_cfg.task_for_phase(phase)
        state, action = None, None
        for _ in range(cfg.phase_steps[phase - 1]):
            if action is None:
                state = env.reset(phase, "train")
                if self.on_reset is not None:
                    self.on_reset(phase, state)
                action = agent.start(state)
            tr = env.step(action)
            if self.on_step is not None:
                self.on_step(self.global_step, phase, state, tr)
            action = agent.step(state, action, tr.reward, tr.next_state, tr.terminated, tr.truncated)
            state = tr.next_state
            if tr.terminated or tr.truncated:
                action = None
            self.global_step += 1
            if self.global_step % cfg.eval_interval == 0:
                self.records.append(self.evaluate_now(phase))
        if self.on_phase_end is not None:
            self.on_phase_end(phase, self)

    def run(self) -> list[EvalRecord]:
        for phase in (1, 2, 3):
            if self.cfg.phase_steps[phase - 1] > 0:
                self.run_phase(phase)
        return self.records


def run_experiment(cfg: ExperimentConfig, seed: int, **hooks) -> list[EvalRecord]:
    return Experiment(cfg, seed, **hooks).run()


def run_seeds(cfg: ExperimentConfig, seeds: Sequence[int] | None = None) -> dict[int, list[EvalRecord]]:
    seeds = list(seeds) if seeds is not None else [cfg.seed + i for i in range(cfg.runs)]
    out = {}
    for seed in seeds:
        log.info("running %s on %s, seed %d", cfg.agent, cfg.domain, seed)
        out[seed] = run_experiment(cfg, seed)
    return out


# -- baselines -------------------------------------------------------------

def compute_optimal_baseline(cfg: ExperimentConfig, task: Task | str, phase: int = 1,
                             seed: int = 0) -> float:
    """Best achievable mean discounted return from the phase's evaluation distribution.

    GridWorld: exact value iteration averaged over the evaluation support.
    MountainCar: best evaluation mean of a long tile-coded Sarsa(lambda) run
    trained from full-state starts.
    """
    if cfg.domain == "gridworld":
        return _gridworld_baseline(cfg, task, phase)
    if cfg.domain == "mountaincar":
        return _mountaincar_baseline(cfg, task, phase, seed)
    raise ValueError(f"unknown domain {cfg.domain!r}")


def _gridworld_baseline(cfg, task, phase) -> float:
    from .gridworld import enumerate_mdp, value_iteration

    domain = factory.make_domain(cfg)
    task_cfg = factory.make_task_config(cfg, domain)
    V = value_iteration(enumerate_mdp(domain.spec, task), cfg.gamma, tol=1e-12)
    support = eval_support(task_cfg, domain, phase)
    return float(V[support].mean())


def eval_support(task_cfg, domain, phase) -> np.ndarray:
    """Flat indices of the GridWorld cells an evaluation episode may start in."""
    from .env import _region_bounds

    dist = task_cfg.eval_init[phase - 1]
    low, high = _region_bounds(dist, domain)
    cells = []
    for r in range(int(low[0]), int(high[0]) + 1):
        for c in range(int(low[1]), int(high[1]) + 1):
            s = domain.index((r, c))
            if domain.terminal[s] or (dist.region == "t1_zone" and not domain.in_t1_zone(s)):
                continue
            cells.append(s)
    return np.array(cells)


def _mountaincar_baseline(cfg, task, phase, seed) -> float:
    p = cfg.baseline
    base = cfg.replace(
        agent="linear-sarsa",
        agent_params=dict(p.get("agent_params", {})),
        eval_episodes=int(p.get("eval_episodes", 100)),
        eval_interval=int(p.get("eval_interval", 20_000)),
        phase_steps=(int(p.get("steps", 4_000_000)), 0, 0),
    )
    base.validate()
    exp = Experiment(base, seed)
    exp.env.task = Task(task)
    best = -math.inf
    # train phase-1 style (full-state starts) on the requested task
    env, agent = exp.env, exp.agent
    action, state = None, None
    for t in range(1, base.phase_steps[0] + 1):
        if action is None:
            state = env.reset(1, "train")
            action = agent.start(state)
        tr = env.step(action)
        action = agent.step(state, action, tr.reward, tr.next_state, tr.terminated, tr.truncated)
        state = tr.next_state
        if tr.terminated or tr.truncated:
            action = None
        if t % base.eval_interval == 0:
            rec = evaluate(agent, exp.domain, exp.task_cfg, task, base.eval_episodes, phase,
                           base.gamma, factory.eval_cap(base), exp.eval_rng, step=t)
            best = max(best, rec.mean)
    return best


def phase_baselines(cfg: ExperimentConfig, seed: int = 0) -> dict[int, float]:
    out = {}
    for phase in (1, 2, 3):
        if cfg.phase_steps[phase - 1] > 0:
            out[phase] = compute_optimal_baseline(cfg, Task.A if phase == 1 else Task.B, phase, seed)
    return out


# -- verdicts --------------------------------------------------------------

class VerdictKind(str, enum.Enum):
    ADAPTIVE = "adaptive"
    NON_ADAPTIVE = "non-adaptive"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    ratios: dict
    short_window: bool = False


def _phase_means(records: Sequence[EvalRecord], phase: int) -> list[float]:
    return [r.mean for r in records if r.phase == phase]


def last_window_mean(records: Sequence[EvalRecord], phase: int, window: int = 5) -> tuple[float, bool]:
    """Mean of the last ``window`` evaluation means of a phase, and whether fewer were available."""
    means = _phase_means(records, phase)
    if not means:
        return math.nan, True
    tail = means[-window:]
    return math.fsum(tail) / len(tail), len(means) < window


def phase_ratio(records, phase, baseline, window=5) -> tuple[float, bool]:
    mean, short = last_window_mean(records, phase, window)
    return mean / baseline, short


def adaptivity_verdict(records: Sequence[EvalRecord], baselines: Mapping[int, float],
                       threshold: float = 0.8, window: int = 5) -> Verdict:
    r1, short1 = phase_ratio(records, 1, baselines[1], window)
    r2, short2 = phase_ratio(records, 2, baselines[2], window)
    ratios = {1: r1, 2: r2}
    if 3 in baselines and any(r.phase == 3 for r in records):
        ratios[3] = phase_ratio(records, 3, baselines[3], window)[0]
    if not r1 >= threshold:
        kind = VerdictKind.UNKNOWN
    elif r2 >= threshold:
        kind = VerdictKind.ADAPTIVE
    else:
        kind = VerdictKind.NON_ADAPTIVE
    return Verdict(kind, ratios, short1 or short2)


def average_records(runs: Mapping[int, Sequence[EvalRecord]]) -> list[EvalRecord]:
    """Per-step average over seeds; used to judge a multi-seed learning curve."""
    seeds = sorted(runs)
    if not seeds:
        return []
    out = []
    for recs in zip(*(runs[s] for s in seeds)):
        pooled = [g for r in recs for g in r.returns]
        out.append(EvalRecord.from_returns(recs[0].step, recs[0].phase, pooled))
    return out


# -- grid search -----------------------------------------------------------

@dataclass
class GridSearchResult:
    best: dict
    flagged: bool
    results: list = field(default_factory=list)


def _run_cell(args):
    cfg, seed = args
    return run_experiment(cfg, seed)


def grid_search(template: ExperimentConfig, grid: Mapping[str, Sequence], seeds: Sequence[int],
                baselines: Mapping[int, float] | None = None, gate: float = 0.9,
                window: int = 5, workers: int = 1) -> GridSearchResult:
    """Run every setting on every seed and pick the best one.

    A setting is eligible when its phase-1 ratio (last ``window``
    evaluations, averaged over seeds) reaches ``gate``; the best eligible
    setting has the highest phase-2 mean. If none is eligible the best
    phase-2 mean overall is returned and flagged. With ``workers > 1`` the
    (setting, seed) cells run in separate processes; each cell is fully
    determined by its config and seed, so the result does not depend on
    completion order.
    """
    if not grid:
        raise ValueError("empty hyperparameter grid")
    baselines = dict(baselines) if baselines is not None else phase_baselines(template)
    keys = sorted(grid)
    seeds = sorted(seeds)
    settings = [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]
    cells = [(template.with_agent_params(s), seed) for s in settings for seed in seeds]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            outputs = list(pool.map(_run_cell, cells))
    else:
        outputs = [_run_cell(c) for c in cells]
    results = []
    for i, setting in enumerate(settings):
        runs = dict(zip(seeds, outputs[i * len(seeds):(i + 1) * len(seeds)]))
        avg = average_records(runs)
        r1, _ = phase_ratio(avg, 1, baselines[1], window)
        p2, _ = last_window_mean(avg, 2, window)
        results.append({"setting": setting, "phase1_ratio": r1, "phase2_mean": p2,
                        "phase2_ratio": p2 / baselines[2], "runs": runs})
    eligible = [r for r in results if r["phase1_ratio"] >= gate]
    pool = eligible or results
    best = max(pool, key=lambda r: r["phase2_mean"])
    return GridSearchResult(best=best["setting"], flagged=not eligible, results=results)


# -- persistence -----------------------------------------------------------

def export_csv(runs: Mapping[int, Sequence[EvalRecord]], path, agent: str = "", domain: str = "") -> None:
    """One row per (seed, record), seeds ascending; floats written with ``repr`` so they round-trip."""
    n_eps = max((len(r.returns) for recs in runs.values() for r in recs), default=0)
    header = ["step", "phase", "mean_return", *(f"ep{i}" for i in range(n_eps)), "seed", "agent", "domain"]
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for seed in sorted(runs):
                for r in runs[seed]:
                    w.writerow([r.step, r.phase, repr(r.mean), *(repr(g) for g in r.returns),
                                seed, agent, domain])
    except OSError as exc:
        raise OSError(f"cannot write results to {os.fspath(path)!r}: {exc}") from exc


def read_csv(path) -> tuple[dict[int, list[EvalRecord]], str, str]:
    runs: dict[int, list[EvalRecord]] = {}
    agent = domain = ""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_eps = sum(1 for h in header if h.startswith("ep"))
        for row in reader:
            returns = tuple(float(x) for x in row[3:3 + n_eps])
            seed = int(row[3 + n_eps])
            agent, domain = row[4 + n_eps], row[5 + n_eps]
            runs.setdefault(seed, []).append(EvalRecord(int(row[0]), int(row[1]), returns, float(row[2])))
    return runs, agent, domain


def plot_data(runs: Mapping[int, Sequence[EvalRecord]]) -> list[dict]:
    """Across-seed mean and standard error of the evaluation mean at each step."""
    by_step: dict[tuple, list[float]] = {}
    for recs in runs.values():
        for r in recs:
            by_step.setdefault((r.step, r.phase), []).append(r.mean)
    rows = []
    for (step, phase), vals in sorted(by_step.items()):
        n = len(vals)
        mean = math.fsum(vals) / n
        stderr = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        rows.append({"step": step, "phase": phase, "mean": mean, "stderr": stderr, "n": n})
    return rows
