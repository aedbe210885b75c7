"""Contrastive adversarial training for health-mention text classification."""

__version__ = "0.1.0"
