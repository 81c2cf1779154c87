"""Hypermodels for exploration: perturbed-SGD posterior approximation driving TS and variance-IDS."""

__version__ = "0.1.0"
