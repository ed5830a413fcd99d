"""Hierarchical pushing stack: simulator, planners, policies, demo tooling."""

__version__ = "0.1.0"
