"""Simulated edge video-analytics stages tuned by federated continual-RL agents."""

__version__ = "0.1.0"
