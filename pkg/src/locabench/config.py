"""Experiment configuration and its INI file format.

A config file has an ``[experiment]`` section with the run layout and
optional ``[domain]``, ``[agent]``, ``[baseline]`` and ``[grid]`` sections::

    [experiment]
    domain = mountaincar
    agent = linear-dyna
    phase_steps = 200000, 200000, 0
    eval_interval = 5000

    [agent]
    epsilon = 0.5
    alpha = 0.05

    [grid]
    epsilon = 0.1, 0.5, 1.0

Values are parsed as Python literals where possible; comma-separated values
become tuples.
"""
from __future__ import annotations

import ast
import configparser
import dataclasses
from dataclasses import dataclass, field
from typing import Optional

DOMAINS = ("gridworld", "mountaincar")
AGENTS = ("mb-1-r", "mb-1-c", "mb-2-r", "sarsa-lambda",
          "linear-dyna", "linear-dyna-tabular", "linear-sarsa", "nonlinear-dyna")

DOMAIN_DEFAULTS = {
    "gridworld": dict(gamma=0.97, phase_steps=(100_000, 50_000, 50_000), eval_interval=500,
                      eval_episodes=100, eval_cap=200, runs=10),
    "mountaincar": dict(gamma=0.99, phase_steps=(200_000, 200_000, 0), eval_interval=5_000,
                        eval_episodes=10, eval_cap=500, runs=5),
}
FULL_SCALE = {
    "mountaincar": dict(phase_steps=(2_000_000, 2_000_000, 0), eval_interval=10_000, runs=10),
}


def parse_value(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        pass
    if "," in text:
        return tuple(parse_value(part) for part in text.split(",") if part.strip())
    return text


@dataclass
class ExperimentConfig:
    domain: str = "gridworld"
    agent: str = "mb-1-r"
    domain_params: dict = field(default_factory=dict)
    agent_params: dict = field(default_factory=dict)
    gamma: float = 0.97
    phase_steps: tuple = (100_000, 50_000, 50_000)
    eval_interval: int = 500
    eval_episodes: int = 100
    eval_cap: Optional[int] = 200
    runs: int = 1
    seed: int = 0
    output: Optional[str] = None
    baseline: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    verdict_threshold: float = 0.8
    selection_threshold: float = 0.9
    window: int = 5
    workers: int = 1

    @classmethod
    def for_domain(cls, domain: str, **overrides) -> "ExperimentConfig":
        if domain not in DOMAIN_DEFAULTS:
            raise ValueError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
        kw = dict(DOMAIN_DEFAULTS[domain])
        kw.update(overrides)
        return cls(domain=domain, **kw)

    def validate(self) -> "ExperimentConfig":
        errors = []
        if self.domain not in DOMAINS:
            errors.append(f"unknown domain {self.domain!r}")
        if self.agent not in AGENTS:
            errors.append(f"unknown agent {self.agent!r}")
        if len(self.phase_steps) != 3 or any(int(n) < 0 for n in self.phase_steps):
            errors.append(f"phase_steps must be three non-negative integers, got {self.phase_steps}")
        elif self.eval_interval <= 0:
            errors.append("eval_interval must be positive")
        else:
            for i, n in enumerate(self.phase_steps, 1):
                if n and n % self.eval_interval:
                    errors.append(f"eval_interval {self.eval_interval} does not divide phase {i} length {n}")
        if self.workers < 1:
            errors.append("workers must be at least 1")
        if self.runs < 1:
            errors.append("runs must be at least 1")
        if self.eval_episodes < 1:
            errors.append("eval_episodes must be at least 1")
        if not 0.0 < self.gamma < 1.0:
            errors.append(f"gamma must lie in (0, 1), got {self.gamma}")
        if errors:
            raise ValueError("invalid experiment config: " + "; ".join(errors))
        return self

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def with_agent_params(self, params: dict) -> "ExperimentConfig":
        return self.replace(agent_params={**self.agent_params, **params})

    def full_scale(self) -> "ExperimentConfig":
        return self.replace(**FULL_SCALE.get(self.domain, {}))

    @classmethod
    def from_ini(cls, path) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
        return cls.from_sections({name: dict(parser[name]) for name in parser.sections()})

    @classmethod
    def from_sections(cls, sections: dict) -> "ExperimentConfig":
        exp = {k: parse_value(v) if isinstance(v, str) else v
               for k, v in sections.get("experiment", {}).items()}
        domain = exp.pop("domain", "gridworld")
        if "phase_steps" in exp:
            exp["phase_steps"] = tuple(int(n) for n in exp["phase_steps"])
        if exp.get("eval_cap") in ("none", "None"):
            exp["eval_cap"] = None
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(exp) - known
        if unknown:
            raise ValueError(f"unknown [experiment] keys: {sorted(unknown)}")

        def section(name):
            return {k.replace("-", "_"): parse_value(v) if isinstance(v, str) else v
                    for k, v in sections.get(name, {}).items()}

        grid = {k: v if isinstance(v, tuple) else (v,) for k, v in section("grid").items()}
        return cls.for_domain(domain, domain_params=section("domain"), agent_params=section("agent"),
                              baseline=section("baseline"), grid=grid, **exp)

    def to_sections(self) -> dict:
        exp = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
               if f.name not in ("domain_params", "agent_params", "baseline", "grid")}
        return {"experiment": exp, "domain": dict(self.domain_params), "agent": dict(self.agent_params),
                "baseline": dict(self.baseline), "grid": dict(self.grid)}
