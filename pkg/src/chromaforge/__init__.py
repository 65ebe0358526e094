"""Adversarial color enhancement: filter attacks, baselines and evaluation."""

__version__ = "0.1.0"
