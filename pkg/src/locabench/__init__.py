"""Desk-scale LoCA benchmark: domains, agents and an experiment harness."""

__version__ = "0.1.0"
